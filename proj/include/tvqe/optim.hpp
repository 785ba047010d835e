#pragma once

#include <cmath>
#include <map>

#include "tvqe/model.hpp"

namespace tvqe {

// Adam with bias correction. Moment tensors mirror parameter shapes; the
// step counter is the number of completed updates.
template <class S>
struct OptimState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Tensor<S>> m;
  std::map<std::string, Tensor<S>> v;

  OptimState() = default;
  OptimState(const ModelParams<S>& params, double lr_) : lr(lr_) {
    for (const auto& [path, t] : params.tensors) {
      m.emplace(path, Tensor<S>(t.shape()));
      v.emplace(path, Tensor<S>(t.shape()));
    }
  }
};

// One bias-corrected update over every parameter, in map (path) order.
// Consumes the accumulated gradients and zeroes them.
template <class S>
void adam_step(ModelParams<S>& params, OptimState<S>& st) {
  for (auto& [path, t] : params.tensors) {
    if (!t.has_grad())
      throw UsageError("adam_step: no gradient for parameter " + path);
    auto mi = st.m.find(path);
    auto vi = st.v.find(path);
    if (mi == st.m.end() || vi == st.v.end())
      throw UsageError("adam_step: no optimizer state for parameter " + path);
    if (mi->second.shape() != t.shape())
      throw DimensionError("adam_step: moment shape mismatch for " + path);
  }
  st.step += 1;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (auto& [path, t] : params.tensors) {
    S* p = t.data();
    const std::vector<S>& g = t.grad();
    S* m = st.m.at(path).data();
    S* v = st.v.at(path).data();
    for (long i = 0; i < t.numel(); ++i) {
      double gi = double(g[size_t(i)]);
      double mi = st.beta1 * double(m[i]) + (1.0 - st.beta1) * gi;
      double vi = st.beta2 * double(v[i]) + (1.0 - st.beta2) * gi * gi;
      m[i] = S(mi);
      v[i] = S(vi);
      double mhat = mi / c1;
      double vhat = vi / c2;
      p[i] = S(double(p[i]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
  params.zero_grad();
}

// Global-norm gradient clip; returns the pre-clip norm. No-op when the norm
// is already within max_norm.
template <class S>
double clip_grad_norm(ModelParams<S>& params, double max_norm) {
  if (!(max_norm > 0)) throw UsageError("clip_grad_norm: max_norm must be > 0");
  double sq = 0;
  for (auto& [path, t] : params.tensors) {
    if (!t.has_grad()) continue;
    for (S g : t.grad()) sq += double(g) * double(g);
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double s = max_norm / norm;
    for (auto& [path, t] : params.tensors) {
      if (!t.has_grad()) continue;
      for (S& g : t.grad()) g = S(double(g) * s);
    }
  }
  return norm;
}

}  // namespace tvqe
