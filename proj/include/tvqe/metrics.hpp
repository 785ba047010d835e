#pragma once

#include <optional>
#include <vector>

#include "tvqe/tensor.hpp"

namespace tvqe {

// Peak signal-to-noise ratio in dB. Identical planes have no finite PSNR;
// that case is the disengaged optional, never a number.
namespace detail {
double psnr_from_mse(double mse, double max_value);
double ssim_core(const double* a, const double* b, long h, long w);
}  // namespace detail

template <class S>
std::optional<double> psnr(const Tensor<S>& a, const Tensor<S>& b,
                           double max_value = 1.0) {
  if (a.shape() != b.shape())
    throw DimensionError("psnr: extent mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  if (!(max_value > 0)) throw UsageError("psnr: max_value must be > 0");
  double mse = 0;
  for (long i = 0; i < a.numel(); ++i) {
    double d = double(a.data()[i]) - double(b.data()[i]);
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse == 0) return std::nullopt;
  return detail::psnr_from_mse(mse, max_value);
}

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1; the window runs over fully valid positions only.
template <class S>
double ssim(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("ssim: extent mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  if (a.rank() != 2) throw DimensionError("ssim: expects [h, w] planes");
  if (a.dim(0) < 11 || a.dim(1) < 11)
    throw DimensionError("ssim: plane " + shape_str(a.shape()) +
                         " smaller than the 11x11 window");
  std::vector<double> da(size_t(a.numel())), db(size_t(b.numel()));
  for (long i = 0; i < a.numel(); ++i) {
    da[size_t(i)] = double(a.data()[i]);
    db[size_t(i)] = double(b.data()[i]);
  }
  return detail::ssim_core(da.data(), db.data(), a.dim(0), a.dim(1));
}

// Mean over frames of metric(enhanced, raw) - metric(compressed, raw).
// Frames where either PSNR is infinite are left out of the PSNR mean and
// counted; SSIM is always finite and averages over every frame.
struct DeltaReport {
  double dpsnr = 0;
  double dssim = 0;
  long psnr_frames = 0;     // frames contributing to dpsnr
  long psnr_excluded = 0;   // frames skipped for an infinite PSNR
};

template <class S>
DeltaReport delta_metrics(const std::vector<Tensor<S>>& raw,
                          const std::vector<Tensor<S>>& compressed,
                          const std::vector<Tensor<S>>& enhanced) {
  if (raw.size() != compressed.size() || raw.size() != enhanced.size())
    throw DimensionError("delta_metrics: sequence length mismatch");
  if (raw.empty()) throw UsageError("delta_metrics: empty sequences");
  DeltaReport rep;
  double dp = 0, ds = 0;
  for (size_t t = 0; t < raw.size(); ++t) {
    auto pe = psnr(enhanced[t], raw[t]);
    auto pc = psnr(compressed[t], raw[t]);
    if (pe && pc) {
      dp += *pe - *pc;
      ++rep.psnr_frames;
    } else {
      ++rep.psnr_excluded;
    }
    ds += ssim(enhanced[t], raw[t]) - ssim(compressed[t], raw[t]);
  }
  rep.dpsnr = rep.psnr_frames ? dp / double(rep.psnr_frames) : 0.0;
  rep.dssim = ds / double(raw.size());
  return rep;
}

// Per-frame PSNR of both streams against raw, with the fluctuation
// statistic (population std over finite frames).
struct QualitySeries {
  std::vector<std::optional<double>> compressed_psnr;
  std::vector<std::optional<double>> enhanced_psnr;
  double compressed_std = 0;
  double enhanced_std = 0;
};

namespace detail {
double finite_std(const std::vector<std::optional<double>>& xs);
}

template <class S>
QualitySeries per_frame_series(const std::vector<Tensor<S>>& raw,
                               const std::vector<Tensor<S>>& compressed,
                               const std::vector<Tensor<S>>& enhanced) {
  if (raw.size() != compressed.size() || raw.size() != enhanced.size())
    throw DimensionError("per_frame_series: sequence length mismatch");
  QualitySeries series;
  for (size_t t = 0; t < raw.size(); ++t) {
    series.compressed_psnr.push_back(psnr(compressed[t], raw[t]));
    series.enhanced_psnr.push_back(psnr(enhanced[t], raw[t]));
  }
  series.compressed_std = detail::finite_std(series.compressed_psnr);
  series.enhanced_std = detail::finite_std(series.enhanced_psnr);
  return series;
}

}  // namespace tvqe
