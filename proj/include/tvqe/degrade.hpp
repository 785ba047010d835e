#pragma once

#include <vector>

#include <json.hpp>

#include "tvqe/tensor.hpp"

namespace tvqe {

// Synthetic codec-style degradation: blockwise DCT-II, uniform quantization
// with a step that grows with q and spatial frequency, then inverse DCT.
// q = 0 is the lossless setting (transform round trip only). Deterministic;
// no randomness anywhere.
struct DegradeProfile {
  double q = 0;
  int block = 8;
  double deadzone = 0.5;  // rounding offset; smaller widens the zero bin

  void validate() const;

  // Step for DCT coefficient (u, v): 0.02 * q * (1 + 0.25 * (u + v)).
  // Low frequencies quantize finer, mirroring codec behavior.
  double step(int u, int v) const { return 0.02 * q * (1.0 + 0.25 * (u + v)); }

  // Preset indexed by a QP-like value: q doubles every 6 QP above 22, the
  // same growth law as codec quantizer step size.
  static DegradeProfile from_qp(int qp);
};

inline void to_json(nlohmann::json& j, const DegradeProfile& p) {
  j = nlohmann::json{
      {"q", p.q}, {"block", p.block}, {"deadzone", p.deadzone}};
}

inline void from_json(const nlohmann::json& j, DegradeProfile& p) {
  if (!j.is_object())
    throw ConfigError("degrade config must be a JSON object");
  for (auto& [key, val] : j.items()) {
    if (key == "q") p.q = val.get<double>();
    else if (key == "block") p.block = val.get<int>();
    else if (key == "deadzone") p.deadzone = val.get<double>();
    else throw ConfigError("unknown degrade config key: " + key);
  }
}

namespace detail {
// In-place degradation of a row-major h*w double plane.
void degrade_plane(std::vector<double>& plane, long h, long w,
                   const DegradeProfile& profile);
}  // namespace detail

template <class S>
Tensor<S> synth_degrade(const Tensor<S>& plane, const DegradeProfile& profile) {
  profile.validate();
  if (plane.rank() != 2)
    throw DimensionError("synth_degrade: expects a [h, w] plane");
  std::vector<double> work(size_t(plane.numel()));
  for (long i = 0; i < plane.numel(); ++i) work[size_t(i)] = double(plane.data()[i]);
  detail::degrade_plane(work, plane.dim(0), plane.dim(1), profile);
  Tensor<S> out(plane.shape());
  for (long i = 0; i < plane.numel(); ++i) out.data()[i] = S(work[size_t(i)]);
  return out;
}

}  // namespace tvqe
