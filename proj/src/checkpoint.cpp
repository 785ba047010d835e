#include "tvqe/checkpoint.hpp"

#include <cstdio>

namespace tvqe {
namespace ckpt {
namespace {

constexpr char kMagic[4] = {'T', 'V', 'Q', 'E'};

std::uint64_t fnv1a(const std::uint8_t* data, size_t n,
                    std::uint64_t h = 14695981039346656037ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
public:
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  void blob(const std::vector<std::uint8_t>& b) {
    u32(std::uint32_t(b.size()));
    bytes(b.data(), b.size());
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  Reader(std::vector<std::uint8_t> buf, const std::string& path)
      : buf_(std::move(buf)), path_(path) {}
  void bytes(void* p, size_t n) {
    if (pos_ + n > buf_.size())
      throw IoError("load_checkpoint: " + path_ + " truncated at offset " +
                    std::to_string(pos_));
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    std::string s(size_t(u32()), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  std::vector<std::uint8_t> blob() {
    std::vector<std::uint8_t> b(static_cast<size_t>(u32()));
    bytes(b.data(), b.size());
    return b;
  }
  size_t pos() const { return pos_; }
  size_t size() const { return buf_.size(); }
  const std::uint8_t* raw() const { return buf_.data(); }

private:
  std::vector<std::uint8_t> buf_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_raw(const std::string& path, const RawCheckpoint& c) {
  if (c.optim && (c.optim->m.size() != c.tensors.size() ||
                  c.optim->v.size() != c.tensors.size()))
    throw UsageError("save_checkpoint: optimizer table length mismatch");
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str(c.config_json);
  w.u32(std::uint32_t(c.tensors.size()));
  for (const RawTensor& t : c.tensors) {
    w.str(t.path);
    w.u8(t.dtype);
    w.u32(std::uint32_t(t.shape.size()));
    for (long e : t.shape) w.i64(e);
    w.blob(t.bytes);
  }
  w.u8(c.optim ? 1 : 0);
  if (c.optim) {
    w.f64(c.optim->lr);
    w.f64(c.optim->beta1);
    w.f64(c.optim->beta2);
    w.f64(c.optim->eps);
    w.i64(c.optim->step);
    for (size_t i = 0; i < c.tensors.size(); ++i) {
      w.blob(c.optim->m[i]);
      w.blob(c.optim->v[i]);
    }
  }
  std::uint64_t sum = fnv1a(w.data().data(), w.data().size());
  w.bytes(&sum, 8);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("save_checkpoint: cannot create " + path);
  bool ok =
      std::fwrite(w.data().data(), 1, w.data().size(), f) == w.data().size();
  ok = std::fclose(f) == 0 && ok;
  if (!ok) throw IoError("save_checkpoint: short write to " + path);
}

RawCheckpoint load_raw(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> buf(size_t(std::max(0L, size)));
  bool ok = std::fread(buf.data(), 1, buf.size(), f) == buf.size();
  std::fclose(f);
  if (!ok) throw IoError("load_checkpoint: cannot read " + path);

  if (buf.size() < 16)
    throw IoError("load_checkpoint: " + path + " too small to be a checkpoint");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  std::uint64_t computed = fnv1a(buf.data(), buf.size() - 8);
  if (stored != computed)
    throw IoError("load_checkpoint: checksum mismatch in " + path);
  buf.resize(buf.size() - 8);

  Reader r(std::move(buf), path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("load_checkpoint: " + path + " lacks the TVQE magic");
  std::uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("load_checkpoint: format version " + std::to_string(version) +
                  ", expected " + std::to_string(kVersion));

  RawCheckpoint c;
  c.config_json = r.str();
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    t.path = r.str();
    t.dtype = r.u8();
    if (t.dtype != kF32 && t.dtype != kF64)
      throw IoError("load_checkpoint: unknown dtype tag for " + t.path);
    std::uint32_t rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.i64());
    t.bytes = r.blob();
    c.tensors.push_back(std::move(t));
  }
  if (r.u8() == 1) {
    RawOptim o;
    o.lr = r.f64();
    o.beta1 = r.f64();
    o.beta2 = r.f64();
    o.eps = r.f64();
    o.step = r.i64();
    for (std::uint32_t i = 0; i < count; ++i) {
      o.m.push_back(r.blob());
      o.v.push_back(r.blob());
    }
    c.optim = std::move(o);
  }
  if (r.pos() != r.size())
    throw IoError("load_checkpoint: " + std::to_string(r.size() - r.pos()) +
                  " trailing bytes in " + path);
  return c;
}

}  // namespace ckpt
}  // namespace tvqe
