#pragma once

#include <cstring>
#include <functional>

#include "tvqe/ops.hpp"

namespace tvqe {

struct FdReport {
  double max_rel = 0;
  double mean_rel = 0;
  double max_abs = 0;
  long checked = 0;
};

// floor guards the denominator: coordinates whose gradients are smaller
// than floor are judged in absolute terms at resolution tol*floor. Per-op
// checks keep 1e-8; composite (deep-network) checks need a floor above the
// finite-difference noise scale, which for an O(1) f64 loss is roughly
// (forward roundoff)/(2*step).
inline double rel_err(double a, double n, double floor = 1e-8) {
  return std::abs(a - n) / std::max(floor, std::abs(a) + std::abs(n));
}

// Central finite differences around x for a scalar-valued f. The analytic
// gradient comes from one taped backward; f is evaluated untaped for the
// probes. f must be deterministic: f(x) is computed twice and compared
// bit-for-bit first.
template <class S>
FdReport finite_diff_check(const std::function<Tensor<S>(const Tensor<S>&)>& f,
                           Tensor<S>& x, double step = 1e-5) {
  Tensor<S> y0 = f(x);
  if (y0.numel() != 1)
    throw UsageError("finite_diff_check: f must return a scalar");
  Tensor<S> y1 = f(x);
  if (std::memcmp(y0.data(), y1.data(), sizeof(S)) != 0)
    throw NumericError("finite_diff_check: f is not deterministic");

  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape<S> tape;
    TapeScope<S> scope(tape);
    Tensor<S> loss = f(x);
    tape.backward(loss);
  }
  std::vector<S> analytic = x.grad();
  x.set_requires_grad(false);

  FdReport rep;
  for (long i = 0; i < x.numel(); ++i) {
    S keep = x.data()[i];
    x.data()[i] = keep + S(step);
    double fp = double(f(x).item());
    x.data()[i] = keep - S(step);
    double fm = double(f(x).item());
    x.data()[i] = keep;
    double numeric = (fp - fm) / (2.0 * step);
    double e = rel_err(double(analytic[size_t(i)]), numeric);
    rep.max_rel = std::max(rep.max_rel, e);
    rep.mean_rel += e;
    rep.max_abs =
        std::max(rep.max_abs, std::abs(double(analytic[size_t(i)]) - numeric));
    ++rep.checked;
  }
  if (rep.checked) rep.mean_rel /= double(rep.checked);
  return rep;
}

// Same check against a set of named parameter tensors, probing a sampled
// subset of coordinates per tensor (each probe costs two full forwards,
// four with `richardson`). `loss_fn` must read the parameters through
// their shared buffers.
//
// richardson: combine central differences at step and step/2 as
// (4*c(step/2) - c(step)) / 3, cancelling the h^2 truncation term. Use it
// when the loss mixes large- and small-gradient coordinates: one plain
// central step cannot serve both (truncation dominates the small ones at a
// step coarse enough to beat roundoff on the large ones).
template <class S>
struct ParamFdRow {
  std::string name;
  FdReport report;
};

template <class S>
std::vector<ParamFdRow<S>> finite_diff_check_params(
    const std::function<Tensor<S>()>& loss_fn,
    std::vector<std::pair<std::string, Tensor<S>>>& params, double step,
    long coords_per_tensor, std::uint64_t seed, bool richardson = false,
    double denom_floor = 1e-8) {
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape<S> tape;
    TapeScope<S> scope(tape);
    Tensor<S> loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<std::vector<S>> analytic;
  for (auto& [name, t] : params) {
    analytic.push_back(t.grad());
    t.set_requires_grad(false);
  }

  Rng rng(seed);
  std::vector<ParamFdRow<S>> rows;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<S>& t = params[pi].second;
    long n = t.numel();
    std::vector<long> picks;
    if (n <= coords_per_tensor)
      for (long i = 0; i < n; ++i) picks.push_back(i);
    else
      for (long i = 0; i < coords_per_tensor; ++i) picks.push_back(rng.bounded(n));
    FdReport rep;
    for (long i : picks) {
      S keep = t.data()[i];
      auto central = [&](double h) {
        t.data()[i] = keep + S(h);
        double fp = double(loss_fn().item());
        t.data()[i] = keep - S(h);
        double fm = double(loss_fn().item());
        t.data()[i] = keep;
        return (fp - fm) / (2.0 * h);
      };
      double numeric = central(step);
      if (richardson) numeric = (4.0 * central(step / 2) - numeric) / 3.0;
      double e = rel_err(double(analytic[pi][size_t(i)]), numeric, denom_floor);
      rep.max_rel = std::max(rep.max_rel, e);
      rep.mean_rel += e;
      rep.max_abs = std::max(
          rep.max_abs, std::abs(double(analytic[pi][size_t(i)]) - numeric));
      ++rep.checked;
    }
    if (rep.checked) rep.mean_rel /= double(rep.checked);
    rows.push_back({params[pi].first, rep});
  }
  return rows;
}

}  // namespace tvqe
