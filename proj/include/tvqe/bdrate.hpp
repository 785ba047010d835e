#pragma once

#include <vector>

#include "tvqe/common.hpp"

namespace tvqe {

struct RDPoint {
  double rate = 0;  // kbps, > 0
  double psnr = 0;  // dB
};

enum class BdFit {
  kPchip,        // monotone piecewise-cubic Hermite (default)
  kGlobalCubic,  // single least-squares cubic, the older convention
};

// Bjontegaard rate difference in percent: log10(rate) is interpolated as a
// function of PSNR for both curves, the difference is averaged over the
// overlapping PSNR interval, and the result is (10^mean_diff - 1) * 100.
// Negative values mean the test curve needs less bitrate at equal quality.
//
// Each curve needs at least 3 points (4 recommended) with rate and PSNR
// both strictly increasing; violations throw before any computation. An
// empty PSNR overlap is a NumericError.
double bd_rate(const std::vector<RDPoint>& anchor,
               const std::vector<RDPoint>& test, BdFit fit = BdFit::kPchip);

namespace detail {

// Monotone cubic interpolant of (x, y) with Fritsch-Carlson slopes.
class Pchip {
public:
  Pchip(std::vector<double> x, std::vector<double> y);
  double eval(double x) const;
  // definite integral over [lo, hi], both inside the x range
  double integral(double lo, double hi) const;

private:
  std::vector<double> x_, y_, m_;
  size_t segment(double x) const;
  double segment_integral(size_t i, double t) const;  // from x_[i], t in [0,1]
};

}  // namespace detail
}  // namespace tvqe
