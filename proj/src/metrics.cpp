#include "tvqe/metrics.hpp"

#include <cmath>

namespace tvqe {
namespace detail {

double psnr_from_mse(double mse, double max_value) {
  return 10.0 * std::log10(max_value * max_value / mse);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

// normalized 11x11 Gaussian, sigma 1.5
const double* gaussian_window() {
  static double w[kWin * kWin];
  static bool ready = false;
  if (!ready) {
    double sum = 0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        double di = i - kWin / 2, dj = j - kWin / 2;
        w[i * kWin + j] = std::exp(-(di * di + dj * dj) / (2 * kSigma * kSigma));
        sum += w[i * kWin + j];
      }
    for (double& v : w) v /= sum;
    ready = true;
  }
  return w;
}

}  // namespace

double ssim_core(const double* a, const double* b, long h, long w) {
  const double* win = gaussian_window();
  double acc = 0;
  long count = 0;
  for (long y = 0; y + kWin <= h; ++y)
    for (long x = 0; x + kWin <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          double g = win[i * kWin + j];
          double va = a[(y + i) * w + (x + j)];
          double vb = b[(y + i) * w + (x + j)];
          ma += g * va;
          mb += g * vb;
          saa += g * va * va;
          sbb += g * vb * vb;
          sab += g * va * vb;
        }
      double var_a = saa - ma * ma;
      double var_b = sbb - mb * mb;
      double cov = sab - ma * mb;
      double num = (2 * ma * mb + kC1) * (2 * cov + kC2);
      double den = (ma * ma + mb * mb + kC1) * (var_a + var_b + kC2);
      acc += num / den;
      ++count;
    }
  return acc / double(count);
}

double finite_std(const std::vector<std::optional<double>>& xs) {
  double sum = 0;
  long n = 0;
  for (const auto& x : xs)
    if (x) {
      sum += *x;
      ++n;
    }
  if (n == 0) return 0;
  double mean = sum / double(n);
  double sq = 0;
  for (const auto& x : xs)
    if (x) sq += (*x - mean) * (*x - mean);
  return std::sqrt(sq / double(n));
}

}  // namespace detail
}  // namespace tvqe
