#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tvqe/bdrate.hpp"
#include "tvqe/csvio.hpp"
#include "tvqe/degrade.hpp"
#include "tvqe/metrics.hpp"

using namespace tvqe;

namespace {

// tensors share storage on copy; tests that perturb a plane need their own
Tensor<double> copy_of(const Tensor<double>& t) {
  return Tensor<double>::from_data(
      t.shape(), std::vector<double>(t.data(), t.data() + t.numel()));
}

// Direct-formula SSIM over centered sums. The library accumulates raw second
// moments instead, so agreement checks two algebraic routes, not one.
double ssim_reference(const Tensor<double>& a, const Tensor<double>& b) {
  const int win = 11;
  const double sigma = 1.5;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double g[win][win], sum = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double di = i - 5, dj = j - 5;
      g[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      sum += g[i][j];
    }
  const long h = a.dim(0), w = a.dim(1);
  double acc = 0;
  long count = 0;
  for (long y = 0; y + win <= h; ++y)
    for (long x = 0; x + win <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          ma += g[i][j] / sum * a.at({y + i, x + j});
          mb += g[i][j] / sum * b.at({y + i, x + j});
        }
      double vaa = 0, vbb = 0, vab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double da = a.at({y + i, x + j}) - ma;
          double db = b.at({y + i, x + j}) - mb;
          vaa += g[i][j] / sum * da * da;
          vbb += g[i][j] / sum * db * db;
          vab += g[i][j] / sum * da * db;
        }
      acc += ((2 * ma * mb + c1) * (2 * vab + c2)) /
             ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
      ++count;
    }
  return acc / double(count);
}

// trapezoid quadrature over the fitted interpolants, checking the closed-form
// segment integrals from the outside
double bd_rate_quadrature(const std::vector<RDPoint>& anchor,
                          const std::vector<RDPoint>& test) {
  auto curve = [](const std::vector<RDPoint>& pts) {
    std::vector<double> x, y;
    for (const auto& p : pts) {
      x.push_back(p.psnr);
      y.push_back(std::log10(p.rate));
    }
    return detail::Pchip(std::move(x), std::move(y));
  };
  detail::Pchip pa = curve(anchor), pt = curve(test);
  double lo = std::max(anchor.front().psnr, test.front().psnr);
  double hi = std::min(anchor.back().psnr, test.back().psnr);
  const int n = 10000;
  double ia = 0, it = 0;
  for (int k = 0; k < n; ++k) {
    double x0 = lo + (hi - lo) * k / n;
    double x1 = lo + (hi - lo) * (k + 1) / n;
    ia += 0.5 * (pa.eval(x0) + pa.eval(x1)) * (x1 - x0);
    it += 0.5 * (pt.eval(x0) + pt.eval(x1)) * (x1 - x0);
  }
  return (std::pow(10.0, (it - ia) / (hi - lo)) - 1.0) * 100.0;
}

std::vector<RDPoint> scale_rates(std::vector<RDPoint> pts, double f) {
  for (auto& p : pts) p.rate *= f;
  return pts;
}

}  // namespace

TEST_CASE("psnr closed forms and symmetry") {
  Rng rng(61);
  auto a = uniform<double>({16, 16}, rng, 0.1, 0.9);

  auto b = copy_of(a);
  for (long i = 0; i < b.numel(); ++i) b.data()[i] += 1.0 / 255.0;
  auto p = psnr(a, b);
  REQUIRE(p.has_value());
  CHECK(std::abs(*p - 10.0 * std::log10(255.0 * 255.0)) < 1e-3);
  CHECK(std::abs(*p - 48.1308) < 1e-3);

  auto q = psnr(b, a);
  REQUIRE(q.has_value());
  CHECK(*p == *q);

  CHECK_FALSE(psnr(a, a).has_value());

  CHECK_THROWS_AS(psnr(a, uniform<double>({16, 15}, rng, 0, 1)),
                  DimensionError);
  CHECK_THROWS_AS(psnr(a, b, 0.0), UsageError);
}

TEST_CASE("psnr strictly decreases as noise grows") {
  Rng rng(62);
  auto a = uniform<double>({20, 20}, rng, 0.2, 0.8);
  auto noise = uniform<double>({20, 20}, rng, -1, 1);
  double prev = 1e300;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    auto b = copy_of(a);
    for (long i = 0; i < b.numel(); ++i)
      b.data()[i] += amp * noise.data()[i];
    auto p = psnr(a, b);
    REQUIRE(p.has_value());
    CHECK(*p < prev);
    prev = *p;
  }
}

TEST_CASE("ssim identity, bound, symmetry") {
  Rng rng(63);
  auto a = uniform<double>({24, 17}, rng, 0, 1);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);

  for (int trial = 0; trial < 8; ++trial) {
    auto x = uniform<double>({13, 13}, rng, 0, 1);
    auto y = uniform<double>({13, 13}, rng, 0, 1);
    double s = ssim(x, y);
    CHECK(s <= 1.0 + 1e-12);
    CHECK(s >= -1.0 - 1e-12);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
    CHECK(ssim(x, y) < 1.0 - 1e-9);  // equals 1 only for identical planes
  }
}

TEST_CASE("ssim matches the direct-formula reference") {
  Rng rng(123);
  auto pattern = uniform<double>({16, 16}, rng, 0, 1);
  auto degraded = synth_degrade(pattern, DegradeProfile::from_qp(32));
  double got = ssim(pattern, degraded);
  double want = ssim_reference(pattern, degraded);
  CHECK(std::abs(got - want) < 1e-6);
  CHECK(got < 1.0);

  Rng rng2(64);
  auto a = uniform<double>({21, 14}, rng2, 0, 1);
  auto b = uniform<double>({21, 14}, rng2, 0, 1);
  CHECK(std::abs(ssim(a, b) - ssim_reference(a, b)) < 1e-6);
}

TEST_CASE("ssim rejects undersized planes") {
  Rng rng(65);
  CHECK_THROWS_AS(ssim(uniform<double>({10, 11}, rng, 0, 1),
                       uniform<double>({10, 11}, rng, 0, 1)),
                  DimensionError);
  CHECK_THROWS_AS(ssim(uniform<double>({11, 11}, rng, 0, 1),
                       uniform<double>({11, 12}, rng, 0, 1)),
                  DimensionError);
  CHECK_THROWS_AS(ssim(uniform<double>({2, 11, 11}, rng, 0, 1),
                       uniform<double>({2, 11, 11}, rng, 0, 1)),
                  DimensionError);
}

TEST_CASE("delta_metrics zero case is exact") {
  Rng rng(66);
  std::vector<Tensor<double>> raw, comp;
  for (int t = 0; t < 3; ++t) {
    raw.push_back(uniform<double>({16, 16}, rng, 0, 1));
    auto c = copy_of(raw.back());
    for (long i = 0; i < c.numel(); ++i) c.data()[i] += rng.uniform(-0.05, 0.05);
    comp.push_back(c);
  }
  auto rep = delta_metrics(raw, comp, comp);
  CHECK(rep.dpsnr == 0.0);
  CHECK(rep.dssim == 0.0);
  CHECK(rep.psnr_frames == 3);
  CHECK(rep.psnr_excluded == 0);
}

TEST_CASE("delta_metrics excludes and reports infinite frames") {
  Rng rng(67);
  std::vector<Tensor<double>> raw, comp, enh;
  for (int t = 0; t < 3; ++t) {
    raw.push_back(uniform<double>({16, 16}, rng, 0, 1));
    auto c = copy_of(raw.back());
    for (long i = 0; i < c.numel(); ++i) c.data()[i] += rng.uniform(-0.05, 0.05);
    comp.push_back(c);
    auto e = copy_of(raw.back());
    if (t != 1)
      for (long i = 0; i < e.numel(); ++i) e.data()[i] += rng.uniform(-0.02, 0.02);
    enh.push_back(e);  // frame 1 is a perfect restoration
  }
  auto rep = delta_metrics(raw, comp, enh);
  CHECK(rep.psnr_frames == 2);
  CHECK(rep.psnr_excluded == 1);
  CHECK(rep.dpsnr > 0);  // remaining frames sit closer to raw
  CHECK(std::isfinite(rep.dssim));

  std::vector<Tensor<double>> short_seq(raw.begin(), raw.begin() + 2);
  CHECK_THROWS_AS(delta_metrics(raw, comp, short_seq), DimensionError);
  CHECK_THROWS_AS(delta_metrics<double>({}, {}, {}), UsageError);
}

TEST_CASE("per_frame_series lengths, identity, zero fluctuation") {
  Rng rng(68);
  auto offset = uniform<double>({16, 16}, rng, -0.03, 0.03);
  std::vector<Tensor<double>> raw, comp;
  for (int t = 0; t < 4; ++t) {
    raw.push_back(uniform<double>({16, 16}, rng, 0.2, 0.8));
    auto c = copy_of(raw.back());
    for (long i = 0; i < c.numel(); ++i) c.data()[i] += offset.data()[i];
    comp.push_back(c);
  }
  auto series = per_frame_series(raw, comp, comp);
  CHECK(series.compressed_psnr.size() == 4);
  CHECK(series.enhanced_psnr.size() == 4);
  for (size_t t = 0; t < 4; ++t) {
    REQUIRE(series.compressed_psnr[t].has_value());
    CHECK(*series.compressed_psnr[t] == *series.enhanced_psnr[t]);
  }
  // same additive error pattern each frame: per-frame PSNR is constant
  CHECK(series.compressed_std <= 1e-9);
  CHECK(series.enhanced_std <= 1e-9);

  CHECK_THROWS_AS(per_frame_series(raw, comp, {comp[0]}), DimensionError);
}

TEST_CASE("bd_rate of a curve against itself is zero") {
  std::vector<RDPoint> a = {
      {312.4, 30.92}, {501.7, 33.18}, {842.6, 35.40}, {1460.2, 37.65}};
  CHECK(std::abs(bd_rate(a, a)) < 1e-9);
  CHECK(std::abs(bd_rate(a, a, BdFit::kGlobalCubic)) < 1e-9);
}

TEST_CASE("uniform rate scaling has a closed form") {
  std::vector<RDPoint> a = {
      {250.0, 29.8}, {420.0, 32.1}, {700.0, 34.6}, {1180.0, 36.9}};
  auto t = scale_rates(a, 0.9);
  CHECK(std::abs(bd_rate(a, t) - (-10.0)) < 1e-6);
  CHECK(std::abs(bd_rate(a, t, BdFit::kGlobalCubic) - (-10.0)) < 1e-6);
  // savings compound in the log domain
  CHECK(std::abs(bd_rate(a, scale_rates(a, 0.81)) -
                 ((0.81 - 1.0) * 100.0)) < 1e-6);
}

TEST_CASE("bd_rate antisymmetry in the log domain") {
  std::vector<RDPoint> a = {
      {312.4, 30.92}, {501.7, 33.18}, {842.6, 35.40}, {1460.2, 37.65}};
  std::vector<RDPoint> b = {
      {266.1, 31.30}, {455.9, 33.57}, {779.0, 35.72}, {1388.4, 37.90}};
  double ab = bd_rate(a, b);
  double ba = bd_rate(b, a);
  CHECK(std::abs((1 + ab / 100.0) * (1 + ba / 100.0) - 1.0) < 1e-6);
  CHECK(ab < 0);
  CHECK(ba > 0);
}

TEST_CASE("bd_rate matches dense quadrature over the interpolants") {
  std::vector<RDPoint> a = {
      {312.4, 30.92}, {501.7, 33.18}, {842.6, 35.40}, {1460.2, 37.65}};
  std::vector<RDPoint> b = {
      {266.1, 31.30}, {455.9, 33.57}, {779.0, 35.72}, {1388.4, 37.90}};
  CHECK(std::abs(bd_rate(a, b) - bd_rate_quadrature(a, b)) < 0.05);

  std::vector<RDPoint> c = {{98.0, 28.40}, {175.0, 31.05}, {305.0, 33.30},
                            {560.0, 35.10}, {1010.0, 36.55}};
  std::vector<RDPoint> d = {{90.5, 28.95}, {158.0, 31.60}, {280.0, 33.75},
                            {530.0, 35.42}, {985.0, 36.80}};
  CHECK(std::abs(bd_rate(c, d) - bd_rate_quadrature(c, d)) < 0.05);
}

TEST_CASE("bd_rate fit flag switches the interpolation model") {
  // five points with curvature: the least-squares cubic no longer
  // interpolates, so the two fits must disagree slightly
  std::vector<RDPoint> a = {{100.0, 28.0}, {180.0, 30.9}, {330.0, 33.1},
                            {620.0, 35.6}, {1200.0, 37.2}};
  std::vector<RDPoint> b = {{88.0, 28.5}, {150.0, 31.5}, {290.0, 33.5},
                            {560.0, 36.0}, {1120.0, 37.5}};
  double p = bd_rate(a, b, BdFit::kPchip);
  double c = bd_rate(a, b, BdFit::kGlobalCubic);
  CHECK(std::isfinite(p));
  CHECK(std::isfinite(c));
  CHECK(p != c);
  CHECK(std::abs(p - c) < 2.0);  // same data, same sign and scale
  CHECK(p * c > 0);
}

TEST_CASE("bd_rate validation") {
  std::vector<RDPoint> ok = {
      {100.0, 30.0}, {200.0, 32.0}, {400.0, 34.0}, {800.0, 36.0}};

  std::vector<RDPoint> two = {{100.0, 30.0}, {200.0, 32.0}};
  CHECK_THROWS_AS(bd_rate(two, ok), UsageError);
  CHECK_THROWS_AS(bd_rate(ok, two), UsageError);

  auto bad_rate = ok;
  bad_rate[2].rate = 150.0;  // out of order
  CHECK_THROWS_AS(bd_rate(bad_rate, ok), UsageError);

  auto bad_psnr = ok;
  bad_psnr[1].psnr = 29.0;
  CHECK_THROWS_AS(bd_rate(ok, bad_psnr), UsageError);

  auto zero_rate = ok;
  zero_rate[0].rate = 0.0;
  CHECK_THROWS_AS(bd_rate(zero_rate, ok), UsageError);

  std::vector<RDPoint> high = {{100.0, 40.0}, {200.0, 42.0}, {400.0, 44.0}};
  std::vector<RDPoint> low = {{100.0, 30.0}, {200.0, 32.0}, {400.0, 34.0}};
  CHECK_THROWS_AS(bd_rate(high, low), NumericError);
}

TEST_CASE("pchip interpolates knots and preserves monotonicity") {
  std::vector<double> x = {28.0, 30.9, 33.1, 35.6, 37.2};
  std::vector<double> y = {2.0, 2.2553, 2.5185, 2.7924, 3.0792};
  detail::Pchip p(x, y);
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(p.eval(x[i]) == doctest::Approx(y[i]).epsilon(1e-12));
  double prev = p.eval(x.front());
  for (int k = 1; k <= 1000; ++k) {
    double v = p.eval(x.front() + (x.back() - x.front()) * k / 1000.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  CHECK_THROWS_AS(p.eval(27.9), UsageError);
  CHECK_THROWS_AS(p.integral(30.0, 38.0), UsageError);
}

TEST_CASE("quality csv emitter") {
  std::ostringstream os;
  write_quality_csv(
      os, {{"BQMall", 37, 0.5, 0.25}, {"Kimono,1", 32, -0.125, 0.0}});
  CHECK(os.str() ==
        "sequence,q,dpsnr,dssim\n"
        "BQMall,37,0.500000,0.250000\n"
        "\"Kimono,1\",32,-0.125000,0.000000\n");
}

TEST_CASE("bd-rate csv emitter") {
  std::ostringstream os;
  write_bdrate_csv(os, {{"BasketballPass", -23.04}});
  CHECK(os.str() ==
        "sequence,bd_rate_percent\n"
        "BasketballPass,-23.0400\n");
}

TEST_CASE("rd table is gnuplot addressable") {
  std::ostringstream os;
  write_rd_table(os, {{"anchor", {{100.0, 30.0}, {200.0, 32.0}}},
                      {"enhanced", {{95.0, 30.5}, {190.0, 32.4}}}});
  std::string s = os.str();
  CHECK(s.find("# rate_kbps psnr_db\n") == 0);
  CHECK(s.find("# curve: anchor\n") != std::string::npos);
  CHECK(s.find("\n\n\n# curve: enhanced\n") != std::string::npos);
  CHECK(s.find("100.000000 30.000000\n") != std::string::npos);
  CHECK(s.find("190.000000 32.400000\n") != std::string::npos);
}

TEST_CASE("fluctuation table marks infinite frames as nan") {
  QualitySeries series;
  series.compressed_psnr = {33.5, std::nullopt, 34.25};
  series.enhanced_psnr = {34.0, 35.0, std::nullopt};
  series.compressed_std = 0.375;
  series.enhanced_std = 0.5;
  std::ostringstream os;
  write_fluctuation_table(os, series);
  std::string s = os.str();
  CHECK(s.find("# frame compressed_psnr enhanced_psnr\n") == 0);
  CHECK(s.find("# std compressed=0.375000 enhanced=0.500000\n") !=
        std::string::npos);
  CHECK(s.find("0 33.500000 34.000000\n") != std::string::npos);
  CHECK(s.find("1 nan 35.000000\n") != std::string::npos);
  CHECK(s.find("2 34.250000 nan\n") != std::string::npos);
}
