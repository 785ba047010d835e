#include "tvqe/degrade.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "tvqe/common.hpp"

namespace tvqe {

void DegradeProfile::validate() const {
  if (q < 0) throw ConfigError("DegradeProfile: q must be >= 0");
  if (block < 1) throw ConfigError("DegradeProfile: block must be >= 1");
  if (deadzone < 0 || deadzone > 1)
    throw ConfigError("DegradeProfile: deadzone offset must be in [0, 1]");
}

DegradeProfile DegradeProfile::from_qp(int qp) {
  DegradeProfile p;
  p.q = std::pow(2.0, double(qp - 22) / 6.0);
  return p;
}

namespace detail {
namespace {

// Orthonormal DCT-II basis: C(k,n) = s(k) cos(pi (2n+1) k / 2N), so the
// forward transform of a block B is C B C^T and the inverse is C^T B' C.
Eigen::MatrixXd dct_basis(int n) {
  Eigen::MatrixXd c(n, n);
  double norm0 = std::sqrt(1.0 / n), norm = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      c(k, j) = (k == 0 ? norm0 : norm) *
                std::cos(M_PI * (2.0 * j + 1.0) * k / (2.0 * n));
  return c;
}

}  // namespace

void degrade_plane(std::vector<double>& plane, long h, long w,
                   const DegradeProfile& profile) {
  if (long(plane.size()) != h * w)
    throw DimensionError("degrade_plane: buffer does not match extents");
  const int n = profile.block;
  const long ph = (h + n - 1) / n * n;
  const long pw = (w + n - 1) / n * n;

  // reflect-pad bottom/right to a whole number of blocks; folding the index
  // into the mirror period handles pads wider than the plane
  auto mirror = [](long i, long extent) {
    if (extent == 1) return 0L;
    long period = 2 * extent - 2;
    long m = i % period;
    return m < extent ? m : period - m;
  };
  Eigen::MatrixXd padded(ph, pw);
  for (long i = 0; i < ph; ++i) {
    long si = mirror(i, h);
    for (long j = 0; j < pw; ++j)
      padded(i, j) = plane[size_t(si * w + mirror(j, w))];
  }

  const Eigen::MatrixXd C = dct_basis(n);
  for (long bi = 0; bi < ph; bi += n)
    for (long bj = 0; bj < pw; bj += n) {
      Eigen::MatrixXd block = padded.block(bi, bj, n, n);
      Eigen::MatrixXd coef = C * block * C.transpose();
      if (profile.q > 0) {
        for (int u = 0; u < n; ++u)
          for (int v = 0; v < n; ++v) {
            double s = profile.step(u, v);
            double c = coef(u, v);
            coef(u, v) = (c < 0 ? -1.0 : 1.0) *
                         std::floor(std::abs(c) / s + profile.deadzone) * s;
          }
      }
      padded.block(bi, bj, n, n) = C.transpose() * coef * C;
    }

  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) plane[size_t(i * w + j)] = padded(i, j);
}

}  // namespace detail
}  // namespace tvqe
