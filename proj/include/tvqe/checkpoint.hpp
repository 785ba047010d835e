#pragma once

#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tvqe/model.hpp"
#include "tvqe/optim.hpp"

namespace tvqe {

// Binary checkpoint: magic "TVQE", u32 version, length-prefixed config
// JSON, tensor table (path, dtype tag, rank, extents, little-endian
// payload), optional optimizer block, trailing FNV-1a 64 checksum over
// everything before it. Tensors are stored in canonical path order.
namespace ckpt {

constexpr std::uint32_t kVersion = 1;
enum Dtype : std::uint8_t { kF32 = 0, kF64 = 1 };

struct RawTensor {
  std::string path;
  std::uint8_t dtype = kF32;
  Shape shape;
  std::vector<std::uint8_t> bytes;
};

struct RawOptim {
  double lr = 0, beta1 = 0, beta2 = 0, eps = 0;
  std::int64_t step = 0;
  // first and second moments per parameter, same order as the tensor table
  std::vector<std::vector<std::uint8_t>> m, v;
};

struct RawCheckpoint {
  std::string config_json;
  std::vector<RawTensor> tensors;
  std::optional<RawOptim> optim;
};

void save_raw(const std::string& path, const RawCheckpoint& c);
RawCheckpoint load_raw(const std::string& path);

template <class S>
constexpr std::uint8_t dtype_tag() {
  return sizeof(S) == 4 ? kF32 : kF64;
}

template <class S>
std::vector<std::uint8_t> tensor_bytes(const Tensor<S>& t) {
  std::vector<std::uint8_t> out(size_t(t.numel()) * sizeof(S));
  std::memcpy(out.data(), t.data(), out.size());
  return out;
}

}  // namespace ckpt

template <class S>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams<S>& params,
                     const OptimState<S>* optim = nullptr) {
  ckpt::RawCheckpoint raw;
  raw.config_json = nlohmann::json(cfg).dump();
  for (const auto& [name, t] : params.tensors)
    raw.tensors.push_back(
        {name, ckpt::dtype_tag<S>(), t.shape(), ckpt::tensor_bytes(t)});
  if (optim) {
    ckpt::RawOptim ro;
    ro.lr = optim->lr;
    ro.beta1 = optim->beta1;
    ro.beta2 = optim->beta2;
    ro.eps = optim->eps;
    ro.step = optim->step;
    for (const auto& [name, t] : params.tensors) {
      ro.m.push_back(ckpt::tensor_bytes(optim->m.at(name)));
      ro.v.push_back(ckpt::tensor_bytes(optim->v.at(name)));
    }
    raw.optim = std::move(ro);
  }
  ckpt::save_raw(path, raw);
}

template <class S>
struct LoadedCheckpoint {
  ModelConfig config;
  ModelParams<S> params;
  std::optional<OptimState<S>> optim;
};

template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  ckpt::RawCheckpoint raw = ckpt::load_raw(path);
  LoadedCheckpoint<S> out;
  out.config = nlohmann::json::parse(raw.config_json).get<ModelConfig>();

  auto registry = param_registry(out.config);
  std::map<std::string, Shape> expected(registry.begin(), registry.end());
  if (raw.tensors.size() != expected.size())
    throw IoError("load_checkpoint: " + std::to_string(raw.tensors.size()) +
                  " tensors, config declares " +
                  std::to_string(expected.size()));
  for (size_t i = 0; i < raw.tensors.size(); ++i) {
    const ckpt::RawTensor& rt = raw.tensors[i];
    auto it = expected.find(rt.path);
    if (it == expected.end())
      throw IoError("load_checkpoint: unknown parameter path " + rt.path);
    if (rt.shape != it->second)
      throw IoError("load_checkpoint: shape mismatch for " + rt.path);
    if (rt.dtype != ckpt::dtype_tag<S>())
      throw IoError("load_checkpoint: dtype mismatch for " + rt.path);
    Tensor<S> t(rt.shape);
    if (rt.bytes.size() != size_t(t.numel()) * sizeof(S))
      throw IoError("load_checkpoint: payload size mismatch for " + rt.path);
    std::memcpy(t.data(), rt.bytes.data(), rt.bytes.size());
    if (!out.params.tensors.emplace(rt.path, std::move(t)).second)
      throw IoError("load_checkpoint: duplicate parameter path " + rt.path);
  }

  if (raw.optim) {
    const ckpt::RawOptim& ro = *raw.optim;
    OptimState<S> st(out.params, ro.lr);
    st.beta1 = ro.beta1;
    st.beta2 = ro.beta2;
    st.eps = ro.eps;
    st.step = ro.step;
    if (ro.m.size() != raw.tensors.size() || ro.v.size() != raw.tensors.size())
      throw IoError("load_checkpoint: optimizer table length mismatch");
    for (size_t i = 0; i < raw.tensors.size(); ++i) {
      const std::string& name = raw.tensors[i].path;
      Tensor<S>& m = st.m.at(name);
      Tensor<S>& v = st.v.at(name);
      if (ro.m[i].size() != size_t(m.numel()) * sizeof(S) ||
          ro.v[i].size() != size_t(v.numel()) * sizeof(S))
        throw IoError("load_checkpoint: optimizer payload mismatch for " + name);
      std::memcpy(m.data(), ro.m[i].data(), ro.m[i].size());
      std::memcpy(v.data(), ro.v[i].data(), ro.v[i].size());
    }
    out.optim = std::move(st);
  }
  return out;
}

// Guard for resuming: the stored config must match the expected one field
// for field (compared in canonical JSON form).
template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path,
                                    const ModelConfig& expected) {
  LoadedCheckpoint<S> out = load_checkpoint<S>(path);
  if (nlohmann::json(out.config) != nlohmann::json(expected))
    throw ConfigError("load_checkpoint: stored config " +
                      nlohmann::json(out.config).dump() +
                      " does not match expected " +
                      nlohmann::json(expected).dump());
  return out;
}

}  // namespace tvqe
