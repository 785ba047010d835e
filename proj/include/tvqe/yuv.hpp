#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tvqe/model.hpp"

namespace tvqe {

// Raw planar 4:2:0, 8-bit, no header; dimensions supplied by the caller.
// Frame layout on disk: w*h luma bytes, then two (w/2)*(h/2) chroma planes.
struct YuvSequence {
  std::string path;
  long width = 0;
  long height = 0;
  long frame_count = 0;

  long luma_bytes() const { return width * height; }
  long frame_bytes() const {
    return width * height + 2 * (width / 2) * (height / 2);
  }
};

// Validates extents against the file size and returns the sequence handle.
// width and height must be even; the file must hold a whole number of
// frames of exactly the implied size.
YuvSequence open_yuv(const std::string& path, long width, long height);

// Bytes of the t-th luma plane; chroma is skipped by offset arithmetic and
// never read.
std::vector<std::uint8_t> read_y_bytes(const YuvSequence& seq, long t);

// Both chroma planes of frame t, Cb then Cr, 2*(w/2)*(h/2) bytes.
std::vector<std::uint8_t> read_chroma_bytes(const YuvSequence& seq, long t);

// Appends frames to a new file: quantized luma plus neutral (128) chroma.
class YuvWriter {
public:
  YuvWriter(const std::string& path, long width, long height);
  ~YuvWriter();
  YuvWriter(const YuvWriter&) = delete;
  YuvWriter& operator=(const YuvWriter&) = delete;

  void append_y_bytes(const std::vector<std::uint8_t>& luma);
  // Writes the given chroma planes instead of the neutral filler.
  void append_frame(const std::vector<std::uint8_t>& luma,
                    const std::vector<std::uint8_t>& chroma);
  long frames_written() const { return frames_; }
  const std::string& path() const { return path_; }

private:
  std::string path_;
  long width_, height_;
  long frames_ = 0;
  void* file_ = nullptr;
};

inline std::uint8_t quantize_luma(double v) {
  double scaled = v * 255.0;
  if (scaled <= 0) return 0;
  if (scaled >= 255) return 255;
  return std::uint8_t(long(scaled + 0.5));
}

// Luma plane scaled to [0,1]: value = byte / 255.
template <class S>
Tensor<S> read_y_plane(const YuvSequence& seq, long t) {
  std::vector<std::uint8_t> bytes = read_y_bytes(seq, t);
  Tensor<S> plane({seq.height, seq.width});
  for (long i = 0; i < plane.numel(); ++i)
    plane.data()[i] = S(double(bytes[size_t(i)]) / 255.0);
  return plane;
}

template <class S>
void write_y_plane(YuvWriter& writer, const Tensor<S>& plane) {
  if (plane.rank() != 2)
    throw DimensionError("write_y_plane: expects a [h, w] plane");
  std::vector<std::uint8_t> bytes(size_t(plane.numel()));
  for (long i = 0; i < plane.numel(); ++i)
    bytes[size_t(i)] = quantize_luma(double(plane.data()[i]));
  writer.append_y_bytes(bytes);
}

// Frames t-R .. t+R with indices clamped to the sequence range, so the
// window always has length 2R+1 and its center is exactly frame t.
template <class S>
ClipWindow<S> clip_window(const YuvSequence& seq, long t, long radius) {
  if (t < 0 || t >= seq.frame_count)
    throw UsageError("clip_window: frame index " + std::to_string(t) +
                     " outside [0, " + std::to_string(seq.frame_count) + ")");
  if (radius < 0) throw UsageError("clip_window: radius must be >= 0");
  ClipWindow<S> win;
  win.target_index = radius;
  for (long k = -radius; k <= radius; ++k) {
    long idx = std::clamp(t + k, 0L, seq.frame_count - 1);
    win.timestamps.push_back(idx);
    win.frames.push_back(read_y_plane<S>(seq, idx));
  }
  return win;
}

}  // namespace tvqe
