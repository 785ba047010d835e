#include "tvqe/bdrate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace tvqe {
namespace detail {

Pchip::Pchip(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const size_t n = x_.size();
  if (n < 2 || y_.size() != n)
    throw UsageError("Pchip: needs two or more (x, y) pairs");
  for (size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw UsageError("Pchip: x must increase");

  std::vector<double> h(n - 1), d(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    d[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  m_.assign(n, 0.0);
  if (n == 2) {
    m_[0] = m_[1] = d[0];
    return;
  }
  // interior: weighted harmonic mean when the secants agree in sign
  for (size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] == 0 || d[i] == 0 || (d[i - 1] > 0) != (d[i] > 0)) {
      m_[i] = 0;
    } else {
      double w1 = 2 * h[i] + h[i - 1];
      double w2 = h[i] + 2 * h[i - 1];
      m_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
  }
  // endpoints: one-sided three-point estimate, clamped for monotonicity
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0) return 0.0;
    if ((d0 > 0) != (d1 > 0) && std::abs(m) > 3 * std::abs(d0)) return 3 * d0;
    return m;
  };
  m_[0] = endpoint(h[0], h[1], d[0], d[1]);
  m_[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
}

size_t Pchip::segment(double x) const {
  if (x < x_.front() || x > x_.back())
    throw UsageError("Pchip: query outside the data range");
  size_t i = size_t(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
  if (i > 0) --i;
  if (i + 1 >= x_.size()) i = x_.size() - 2;
  return i;
}

double Pchip::eval(double x) const {
  size_t i = segment(x);
  double h = x_[i + 1] - x_[i];
  double t = (x - x_[i]) / h;
  double t2 = t * t, t3 = t2 * t;
  double h00 = 2 * t3 - 3 * t2 + 1;
  double h10 = t3 - 2 * t2 + t;
  double h01 = -2 * t3 + 3 * t2;
  double h11 = t3 - t2;
  return h00 * y_[i] + h10 * h * m_[i] + h01 * y_[i + 1] + h11 * h * m_[i + 1];
}

double Pchip::segment_integral(size_t i, double t) const {
  double h = x_[i + 1] - x_[i];
  double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
  double i00 = t4 / 2 - t3 + t;
  double i10 = t4 / 4 - 2 * t3 / 3 + t2 / 2;
  double i01 = -t4 / 2 + t3;
  double i11 = t4 / 4 - t3 / 3;
  return h * (i00 * y_[i] + i10 * h * m_[i] + i01 * y_[i + 1] +
              i11 * h * m_[i + 1]);
}

double Pchip::integral(double lo, double hi) const {
  if (lo > hi) throw UsageError("Pchip: integral bounds reversed");
  size_t a = segment(lo), b = segment(hi);
  double ta = (lo - x_[a]) / (x_[a + 1] - x_[a]);
  double tb = (hi - x_[b]) / (x_[b + 1] - x_[b]);
  if (a == b) return segment_integral(a, tb) - segment_integral(a, ta);
  double total = segment_integral(a, 1.0) - segment_integral(a, ta);
  for (size_t i = a + 1; i < b; ++i) total += segment_integral(i, 1.0);
  total += segment_integral(b, tb);
  return total;
}

namespace {

struct Curve {
  std::vector<double> psnr, lograte;
};

Curve validated(const std::vector<RDPoint>& points, const char* name) {
  if (points.size() < 3)
    throw UsageError(std::string("bd_rate: ") + name +
                     " curve needs at least 3 points, got " +
                     std::to_string(points.size()));
  Curve c;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].rate > 0))
      throw UsageError(std::string("bd_rate: ") + name +
                       " curve has a nonpositive rate");
    if (i > 0 && (!(points[i].rate > points[i - 1].rate) ||
                  !(points[i].psnr > points[i - 1].psnr)))
      throw UsageError(std::string("bd_rate: ") + name +
                       " curve must have strictly increasing rate and PSNR");
    c.psnr.push_back(points[i].psnr);
    c.lograte.push_back(std::log10(points[i].rate));
  }
  return c;
}

// least-squares cubic in the Vandermonde basis; exact fit for 4 points
struct CubicFit {
  double c0, c1, c2, c3;
  double eval_antiderivative(double x) const {
    return c0 * x + c1 * x * x / 2 + c2 * x * x * x / 3 +
           c3 * x * x * x * x / 4;
  }
};

CubicFit fit_cubic(const Curve& c) {
  const long n = long(c.psnr.size());
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  for (long i = 0; i < n; ++i) {
    double x = c.psnr[size_t(i)];
    A(i, 0) = 1;
    A(i, 1) = x;
    A(i, 2) = x * x;
    A(i, 3) = x * x * x;
    b(i) = c.lograte[size_t(i)];
  }
  Eigen::Vector4d coef = A.colPivHouseholderQr().solve(b);
  return {coef(0), coef(1), coef(2), coef(3)};
}

}  // namespace
}  // namespace detail

double bd_rate(const std::vector<RDPoint>& anchor,
               const std::vector<RDPoint>& test, BdFit fit) {
  detail::Curve a = detail::validated(anchor, "anchor");
  detail::Curve t = detail::validated(test, "test");
  double lo = std::max(a.psnr.front(), t.psnr.front());
  double hi = std::min(a.psnr.back(), t.psnr.back());
  if (!(hi > lo))
    throw NumericError("bd_rate: the PSNR ranges do not overlap");

  double int_a, int_t;
  if (fit == BdFit::kPchip) {
    int_a = detail::Pchip(a.psnr, a.lograte).integral(lo, hi);
    int_t = detail::Pchip(t.psnr, t.lograte).integral(lo, hi);
  } else {
    detail::CubicFit fa = detail::fit_cubic(a);
    detail::CubicFit ft = detail::fit_cubic(t);
    int_a = fa.eval_antiderivative(hi) - fa.eval_antiderivative(lo);
    int_t = ft.eval_antiderivative(hi) - ft.eval_antiderivative(lo);
  }
  double mean_diff = (int_t - int_a) / (hi - lo);
  return (std::pow(10.0, mean_diff) - 1.0) * 100.0;
}

}  // namespace tvqe
