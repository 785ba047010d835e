#include "tvqe/yuv.hpp"

#include <cstdio>
#include <filesystem>

namespace tvqe {

YuvSequence open_yuv(const std::string& path, long width, long height) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0)
    throw UsageError("open_yuv: 4:2:0 needs positive even extents, got " +
                     std::to_string(width) + "x" + std::to_string(height));
  std::error_code ec;
  auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("open_yuv: cannot stat " + path + ": " + ec.message());
  YuvSequence seq{path, width, height, 0};
  long fb = seq.frame_bytes();
  if (size == 0 || size % std::uintmax_t(fb) != 0)
    throw IoError("open_yuv: " + path + " holds " + std::to_string(size) +
                  " bytes, not a multiple of the " + std::to_string(fb) +
                  "-byte " + std::to_string(width) + "x" +
                  std::to_string(height) + " frame");
  seq.frame_count = long(size / std::uintmax_t(fb));
  return seq;
}

std::vector<std::uint8_t> read_y_bytes(const YuvSequence& seq, long t) {
  if (t < 0 || t >= seq.frame_count)
    throw UsageError("read_y_bytes: frame " + std::to_string(t) +
                     " outside [0, " + std::to_string(seq.frame_count) + ")");
  std::FILE* f = std::fopen(seq.path.c_str(), "rb");
  if (!f) throw IoError("read_y_bytes: cannot open " + seq.path);
  std::vector<std::uint8_t> luma(size_t(seq.luma_bytes()));
  long offset = t * seq.frame_bytes();
  bool ok = std::fseek(f, offset, SEEK_SET) == 0 &&
            std::fread(luma.data(), 1, luma.size(), f) == luma.size();
  std::fclose(f);
  if (!ok)
    throw IoError("read_y_bytes: " + seq.path + " truncated; wanted " +
                  std::to_string(offset + seq.luma_bytes()) + " bytes");
  return luma;
}

std::vector<std::uint8_t> read_chroma_bytes(const YuvSequence& seq, long t) {
  if (t < 0 || t >= seq.frame_count)
    throw UsageError("read_chroma_bytes: frame " + std::to_string(t) +
                     " outside [0, " + std::to_string(seq.frame_count) + ")");
  std::FILE* f = std::fopen(seq.path.c_str(), "rb");
  if (!f) throw IoError("read_chroma_bytes: cannot open " + seq.path);
  std::vector<std::uint8_t> chroma(
      size_t(seq.frame_bytes() - seq.luma_bytes()));
  long offset = t * seq.frame_bytes() + seq.luma_bytes();
  bool ok = std::fseek(f, offset, SEEK_SET) == 0 &&
            std::fread(chroma.data(), 1, chroma.size(), f) == chroma.size();
  std::fclose(f);
  if (!ok)
    throw IoError("read_chroma_bytes: " + seq.path + " truncated; wanted " +
                  std::to_string(offset + long(chroma.size())) + " bytes");
  return chroma;
}

YuvWriter::YuvWriter(const std::string& path, long width, long height)
    : path_(path), width_(width), height_(height) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0)
    throw UsageError("YuvWriter: 4:2:0 needs positive even extents");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("YuvWriter: cannot create " + path);
  file_ = f;
}

YuvWriter::~YuvWriter() {
  if (file_) std::fclose(static_cast<std::FILE*>(file_));
}

void YuvWriter::append_y_bytes(const std::vector<std::uint8_t>& luma) {
  std::vector<std::uint8_t> chroma(size_t((width_ / 2) * (height_ / 2) * 2),
                                   128);
  append_frame(luma, chroma);
}

void YuvWriter::append_frame(const std::vector<std::uint8_t>& luma,
                             const std::vector<std::uint8_t>& chroma) {
  if (long(luma.size()) != width_ * height_)
    throw DimensionError("append_frame: got " + std::to_string(luma.size()) +
                         " luma bytes for a " + std::to_string(width_) + "x" +
                         std::to_string(height_) + " plane");
  if (long(chroma.size()) != (width_ / 2) * (height_ / 2) * 2)
    throw DimensionError("append_frame: got " + std::to_string(chroma.size()) +
                         " chroma bytes, want " +
                         std::to_string((width_ / 2) * (height_ / 2) * 2));
  std::FILE* f = static_cast<std::FILE*>(file_);
  bool ok = std::fwrite(luma.data(), 1, luma.size(), f) == luma.size() &&
            std::fwrite(chroma.data(), 1, chroma.size(), f) == chroma.size();
  if (!ok) throw IoError("append_frame: short write to " + path_);
  std::fflush(f);
  ++frames_;
}

}  // namespace tvqe
