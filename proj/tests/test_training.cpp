#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tvqe/gradcheck.hpp"
#include "tvqe/train.hpp"

using namespace tvqe;
using T = Tensor<double>;

namespace {

bool same_bits(const T& a, const T& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(),
                     size_t(a.numel()) * sizeof(double)) == 0;
}

double max_abs_diff(const T& a, const T& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (long i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.radius = 1;
  cfg.window_size = 4;
  cfg.depths = {1, 1, 1};
  cfg.heads = {2, 2, 2};
  cfg.embed_dim = 8;
  cfg.num_restormers = 1;
  cfg.patch = 2;
  cfg.mdta_heads = 2;
  cfg.dtype = "f64";
  cfg.validate();
  return cfg;
}

std::vector<TrainSample<double>> synth_dataset(const ModelConfig& cfg,
                                               long count, long side,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainSample<double>> out;
  for (long i = 0; i < count; ++i) {
    TrainSample<double> s;
    s.target = uniform<double>({side, side}, rng, 0, 1);
    s.frames = T({cfg.frames(), side, side});
    for (long f = 0; f < cfg.frames(); ++f)
      for (long p = 0; p < side * side; ++p)
        s.frames.data()[f * side * side + p] =
            std::clamp(s.target.data()[p] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("charbonnier loss of identical tensors is sqrt(epsilon) exactly") {
  Rng rng(1);
  auto x = uniform<double>({3, 5}, rng, -1, 1);
  auto loss = charbonnier_loss(x, x, 1e-6);
  CHECK(loss.item() == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("charbonnier loss approaches mean absolute difference for large gaps") {
  T a({2, 2}), b({2, 2});
  for (long i = 0; i < 4; ++i) {
    a.data()[i] = 5.0;
    b.data()[i] = 2.0;
  }
  // |diff| = 3 >> sqrt(1e-6)
  auto loss = charbonnier_loss(a, b, 1e-6);
  CHECK(std::abs(loss.item() - 3.0) < 1e-6);
}

TEST_CASE("charbonnier loss closed form at uniform difference 3e-3") {
  T a({4}), b({4});
  for (long i = 0; i < 4; ++i) {
    a.data()[i] = 0.5 + 3e-3;
    b.data()[i] = 0.5;
  }
  auto loss = charbonnier_loss(a, b, 1e-6);
  CHECK(loss.item() == doctest::Approx(std::sqrt(10e-6)).epsilon(1e-10));
  CHECK(loss.item() == doctest::Approx(3.1623e-3).epsilon(1e-4));
}

TEST_CASE("charbonnier loss lower bound sqrt(epsilon), equality iff equal") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = uniform<double>({7}, rng, -2, 2);
    auto b = uniform<double>({7}, rng, -2, 2);
    CHECK(charbonnier_loss(a, b, 1e-6).item() >= 1e-3);
    CHECK(charbonnier_loss(a, b, 1e-6).item() > 1e-3);  // a != b a.s.
    CHECK(charbonnier_loss(a, a, 1e-6).item() == doctest::Approx(1e-3));
  }
}

TEST_CASE("mse loss matches direct formula") {
  Rng rng(3);
  auto a = uniform<double>({6, 4}, rng, -1, 1);
  auto b = uniform<double>({6, 4}, rng, -1, 1);
  double acc = 0;
  for (long i = 0; i < a.numel(); ++i) {
    double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  CHECK(std::abs(mse_loss(a, b).item() - acc / double(a.numel())) < 1e-9);
  CHECK(mse_loss(a, a).item() == 0.0);
  T c({3}), d({3});
  for (long i = 0; i < 3; ++i) {
    c.data()[i] = 1.25;
    d.data()[i] = 1.0;
  }
  CHECK(mse_loss(c, d).item() == doctest::Approx(0.0625).epsilon(1e-12));
}

TEST_CASE("combined loss reproduces stage settings exactly") {
  Rng rng(4);
  auto a = uniform<double>({5, 5}, rng, 0, 1);
  auto b = uniform<double>({5, 5}, rng, 0, 1);
  LossConfig stage1{1.0, 0.0, 1e-6};
  LossConfig stage2{0.0, 1.0, 1e-6};
  CHECK(combined_loss(a, b, stage1).item() ==
        charbonnier_loss(a, b, 1e-6).item());
  CHECK(combined_loss(a, b, stage2).item() == mse_loss(a, b).item());
  LossConfig off{0.0, 0.0, 1e-6};
  CHECK(combined_loss(a, b, off).item() == 0.0);
}

TEST_CASE("combined loss with zero weights has zero gradients") {
  Rng rng(5);
  auto a = uniform<double>({4, 4}, rng, 0, 1).set_requires_grad(true);
  auto b = uniform<double>({4, 4}, rng, 0, 1);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(combined_loss(a, b, LossConfig{0.0, 0.0, 1e-6}));
  }
  for (double g : a.grad()) CHECK(g == 0.0);
}

TEST_CASE("loss validation errors") {
  T a({2, 2}), b({3, 2});
  CHECK_THROWS_AS(charbonnier_loss(a, b, 1e-6), DimensionError);
  CHECK_THROWS_AS(mse_loss(a, b), DimensionError);
  CHECK_THROWS_AS(charbonnier_loss(a, a, 0.0), ConfigError);
  CHECK_THROWS_AS(combined_loss(a, a, LossConfig{-1.0, 0.0, 1e-6}), ConfigError);
  CHECK_THROWS_AS(combined_loss(a, a, LossConfig{1.0, 0.0, -1e-6}), ConfigError);
}

TEST_CASE("loss gradients match finite differences at both stage settings") {
  Rng rng(6);
  auto target = uniform<double>({3, 7}, rng, 0, 1);
  for (LossConfig cfg : {LossConfig{1.0, 0.0, 1e-6}, LossConfig{0.0, 1.0, 1e-6}}) {
    auto x = uniform<double>({3, 7}, rng, 0, 1);
    auto rep = finite_diff_check<double>(
        [&](const T& t) { return combined_loss(t, target, cfg); }, x, 1e-6);
    CHECK(rep.max_rel < 1e-6);
  }
}

TEST_CASE("adam: zero gradient leaves parameters and moments unchanged") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 7);
  auto before = param_init<double>(cfg, 7);
  for (auto& [path, t] : P.tensors) t.zero_grad();
  OptimState<double> st(P, 1e-4);
  adam_step(P, st);
  CHECK(st.step == 1);
  for (auto& [path, t] : P.tensors) {
    INFO(path);
    CHECK(same_bits(t, before.tensors.at(path)));
    for (long i = 0; i < t.numel(); ++i) {
      CHECK(st.m.at(path).data()[i] == 0.0);
      CHECK(st.v.at(path).data()[i] == 0.0);
    }
  }
}

TEST_CASE("adam: first step with constant gradient moves each weight by ~lr") {
  // With m = (1-b1)g, v = (1-b2)g^2 and bias correction at t=1,
  // mhat = g and vhat = g^2, so the update is lr*g/(|g|+eps) = lr*sign(g).
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 8);
  auto before = param_init<double>(cfg, 8);
  for (auto& [path, t] : P.tensors) {
    t.zero_grad();
    for (auto& g : t.grad()) g = 0.25;
  }
  OptimState<double> st(P, 1e-4);
  adam_step(P, st);
  for (auto& [path, t] : P.tensors) {
    INFO(path);
    const T& b = before.tensors.at(path);
    for (long i = 0; i < t.numel(); ++i) {
      double moved = b.data()[i] - t.data()[i];
      CHECK(moved == doctest::Approx(1e-4).epsilon(1e-3));
    }
    // gradients consumed
    for (double g : t.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("adam: update direction sign pattern is gradient-scale invariant") {
  auto cfg = tiny_config();
  Rng rng(9);
  for (double scale_factor : {10.0, 0.01}) {
    auto Pa = param_init<double>(cfg, 10);
    auto Pb = param_init<double>(cfg, 10);
    Rng grad_rng(11);
    for (auto& [path, t] : Pa.tensors) {
      auto& tb = Pb.tensors.at(path);
      t.zero_grad();
      tb.zero_grad();
      for (long i = 0; i < t.numel(); ++i) {
        double g = grad_rng.uniform(-1, 1);
        t.grad()[size_t(i)] = g;
        tb.grad()[size_t(i)] = g * scale_factor;
      }
    }
    OptimState<double> sa(Pa, 1e-4), sb(Pb, 1e-4);
    adam_step(Pa, sa);
    adam_step(Pb, sb);
    auto P0 = param_init<double>(cfg, 10);
    for (auto& [path, t] : Pa.tensors) {
      auto& before = P0.tensors.at(path);
      auto& tb = Pb.tensors.at(path);
      for (long i = 0; i < t.numel(); ++i) {
        double da = t.data()[i] - before.data()[i];
        double db = tb.data()[i] - before.data()[i];
        if (da != 0.0 || db != 0.0) {
          INFO(path << " coord " << i);
          CHECK(std::signbit(da) == std::signbit(db));
        }
      }
    }
  }
}

TEST_CASE("adam: ten identical runs of ten steps are bit-identical") {
  auto cfg = tiny_config();
  auto run = [&]() {
    auto P = param_init<double>(cfg, 12);
    OptimState<double> st(P, 1e-3);
    Rng rng(13);
    for (int s = 0; s < 10; ++s) {
      for (auto& [path, t] : P.tensors) {
        t.zero_grad();
        for (auto& g : t.grad()) g = rng.uniform(-1, 1);
      }
      adam_step(P, st);
    }
    return P;
  };
  auto a = run();
  auto b = run();
  for (auto& [path, t] : a.tensors) CHECK(same_bits(t, b.tensors.at(path)));
}

TEST_CASE("adam: missing gradient names the parameter") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 14);
  OptimState<double> st(P, 1e-4);
  try {
    adam_step(P, st);
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("caqe.rec.bias") != std::string::npos);
  }
}

TEST_CASE("clip_grad_norm scales only above the threshold") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 15);
  for (auto& [path, t] : P.tensors) {
    t.zero_grad();
    for (auto& g : t.grad()) g = 1e-3;
  }
  double total = std::sqrt(1e-6 * double(P.total_scalars()));
  double norm = clip_grad_norm(P, total * 2);
  CHECK(norm == doctest::Approx(total).epsilon(1e-9));
  for (auto& [path, t] : P.tensors)
    for (double g : t.grad()) CHECK(g == 1e-3);  // untouched below threshold
  norm = clip_grad_norm(P, total / 2);
  CHECK(norm == doctest::Approx(total).epsilon(1e-9));
  double sq = 0;
  for (auto& [path, t] : P.tensors)
    for (double g : t.grad()) sq += g * g;
  CHECK(std::sqrt(sq) == doctest::Approx(total / 2).epsilon(1e-9));
  CHECK_THROWS_AS(clip_grad_norm(P, 0.0), UsageError);
}

TEST_CASE("augment: identity draw leaves the pair unchanged") {
  auto cfg = tiny_config();
  auto data = synth_dataset(cfg, 1, 8, 16);
  // find a seed whose first three draws are (0,0,0)
  std::uint64_t seed = 0;
  for (;; ++seed) {
    Rng probe(seed);
    if (probe.bounded(2) == 0 && probe.bounded(2) == 0 && probe.bounded(4) == 0)
      break;
  }
  Rng rng(seed);
  auto out = augment(data[0], rng);
  CHECK(same_bits(out.frames, data[0].frames));
  CHECK(same_bits(out.target, data[0].target));
}

TEST_CASE("augment transforms compose as involutions and full turns") {
  Rng rng(17);
  auto x = uniform<double>({3, 6, 6}, rng, 0, 1);
  CHECK(same_bits(detail::flip_h(detail::flip_h(x)), x));
  CHECK(same_bits(detail::flip_v(detail::flip_v(x)), x));
  auto r = detail::rot90(detail::rot90(detail::rot90(detail::rot90(x))));
  CHECK(same_bits(r, x));
  // one quarter turn moves the (0,0) corner to (n-1, 0)
  auto q = detail::rot90(x);
  CHECK(q.at({0, 5, 0}) == x.at({0, 0, 0}));
}

TEST_CASE("augment applies the same transform to frames and target") {
  auto cfg = tiny_config();
  auto data = synth_dataset(cfg, 1, 8, 18);
  TrainSample<double> s = data[0];
  // make the center frame equal the target so the pairing is visible
  std::memcpy(s.frames.data() + cfg.radius * 64, s.target.data(),
              64 * sizeof(double));
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    Rng rng(seed);
    auto out = augment(s, rng);
    T center({8, 8});
    std::memcpy(center.data(), out.frames.data() + cfg.radius * 64,
                64 * sizeof(double));
    CHECK(same_bits(center, out.target));
  }
}

TEST_CASE("augment rejects non-square and mismatched patches") {
  Rng rng(19);
  TrainSample<double> bad;
  bad.frames = T({3, 4, 6});
  bad.target = T({4, 6});
  CHECK_THROWS_AS(augment(bad, rng), UsageError);
  TrainSample<double> mixed;
  mixed.frames = T({3, 4, 4});
  mixed.target = T({6, 6});
  CHECK_THROWS_AS(augment(mixed, rng), DimensionError);
}

TEST_CASE("schedule validation") {
  TrainSchedule s;
  s.stage1_steps = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  s.lr = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("two_stage_train: zero-step schedule changes nothing") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 20);
  auto before = param_init<double>(cfg, 20);
  auto data = synth_dataset(cfg, 2, 8, 21);
  TrainSchedule sched;
  sched.seed = 22;
  auto res = two_stage_train(cfg, P, data, sched);
  CHECK(res.history.empty());
  CHECK(res.optim.step == 0);
  for (auto& [path, t] : P.tensors) CHECK(same_bits(t, before.tensors.at(path)));
}

TEST_CASE("two_stage_train: stage settings, loss records, and progress") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 23);
  auto data = synth_dataset(cfg, 4, 8, 24);
  TrainSchedule sched;
  sched.stage1_steps = 6;
  sched.stage2_steps = 4;
  sched.batch_size = 2;
  sched.lr = 1e-3;
  sched.seed = 25;
  auto res = two_stage_train(cfg, P, data, sched);
  REQUIRE(res.history.size() == 10);
  CHECK(res.optim.step == 10);
  for (const LossRow& r : res.history) {
    CHECK(r.step >= 1);
    CHECK(r.step <= 10);
    if (r.step <= 6) {
      CHECK(r.stage == 1);
      CHECK(r.alpha == 1.0);
      CHECK(r.beta == 0.0);
      CHECK(r.total == r.charbonnier);
    } else {
      CHECK(r.stage == 2);
      CHECK(r.alpha == 0.0);
      CHECK(r.beta == 1.0);
      CHECK(r.total == r.mse);
    }
    CHECK(std::isfinite(r.charbonnier));
    CHECK(std::isfinite(r.mse));
  }
}

TEST_CASE("two_stage_train: same seed reruns bit-identically") {
  auto cfg = tiny_config();
  auto data = synth_dataset(cfg, 3, 8, 26);
  TrainSchedule sched;
  sched.stage1_steps = 3;
  sched.stage2_steps = 2;
  sched.batch_size = 2;
  sched.seed = 27;
  auto Pa = param_init<double>(cfg, 28);
  auto Pb = param_init<double>(cfg, 28);
  auto ra = two_stage_train(cfg, Pa, data, sched);
  auto rb = two_stage_train(cfg, Pb, data, sched);
  REQUIRE(ra.history.size() == rb.history.size());
  for (size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].charbonnier == rb.history[i].charbonnier);
    CHECK(ra.history[i].mse == rb.history[i].mse);
    CHECK(ra.history[i].total == rb.history[i].total);
  }
  for (auto& [path, t] : Pa.tensors) CHECK(same_bits(t, Pb.tensors.at(path)));
  for (auto& [path, t] : ra.optim.m) {
    CHECK(same_bits(t, rb.optim.m.at(path)));
    CHECK(same_bits(ra.optim.v.at(path), rb.optim.v.at(path)));
  }
}

TEST_CASE("two_stage_train: checkpoint callback fires on schedule") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 29);
  auto data = synth_dataset(cfg, 2, 8, 30);
  TrainSchedule sched;
  sched.stage1_steps = 5;
  sched.batch_size = 1;
  sched.seed = 31;
  sched.checkpoint_every = 2;
  std::vector<long> seen;
  auto res = two_stage_train<double>(
      cfg, P, data, sched,
      [&](long step, const ModelParams<double>&, const OptimState<double>& st) {
        seen.push_back(step);
        CHECK(st.step == step);
      });
  CHECK(seen == std::vector<long>{2, 4});
  CHECK(res.history.size() == 5);
}

TEST_CASE("two_stage_train: validation and NaN handling") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 32);
  TrainSchedule sched;
  sched.stage1_steps = 1;
  CHECK_THROWS_AS(
      two_stage_train(cfg, P, std::vector<TrainSample<double>>{}, sched),
      UsageError);
  auto data = synth_dataset(cfg, 2, 8, 33);
  data[1].frames = T({cfg.frames(), 12, 12});
  data[1].target = T({12, 12});
  CHECK_THROWS_AS(two_stage_train(cfg, P, data, sched), DimensionError);
  // poisoned weights surface as a NumericError naming the step
  auto bad = synth_dataset(cfg, 2, 8, 34);
  P.tensors.at("caqe.rec.weight").data()[0] =
      std::numeric_limits<double>::quiet_NaN();
  try {
    two_stage_train(cfg, P, bad, sched);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("loss history CSV uses the documented columns") {
  std::vector<LossRow> rows{{1, 1, 1.0, 0.0, 0.5, 0.25, 0.5},
                            {2, 2, 0.0, 1.0, 0.375, 0.125, 0.125}};
  std::ostringstream os;
  write_loss_csv(os, rows);
  std::string text = os.str();
  CHECK(text.rfind("step,stage,alpha,beta,charbonnier,mse,total\n", 0) == 0);
  CHECK(text.find("\n1,1,1,0,0.5,0.25,0.5\n") != std::string::npos);
  CHECK(text.find("\n2,2,0,1,0.375,0.125,0.125\n") != std::string::npos);
}

TEST_CASE("short overfit run reduces charbonnier loss on a fixed batch") {
  auto cfg = tiny_config();
  auto P = param_init<double>(cfg, 35);
  auto data = synth_dataset(cfg, 2, 8, 36);
  TrainSchedule sched;
  sched.stage1_steps = 40;
  sched.batch_size = 2;
  sched.lr = 1e-3;
  sched.seed = 37;
  auto res = two_stage_train(cfg, P, data, sched);
  double first = res.history.front().charbonnier;
  double last = res.history.back().charbonnier;
  CHECK(last < first);
}
