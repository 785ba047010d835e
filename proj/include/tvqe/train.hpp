#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <ostream>

#include <json.hpp>

#include "tvqe/loss.hpp"
#include "tvqe/optim.hpp"

namespace tvqe {

// One training pair: the 2R+1 compressed frames of a clip window and the
// raw center frame, spatially co-located crops.
template <class S>
struct TrainSample {
  Tensor<S> frames;  // [2R+1, h, w]
  Tensor<S> target;  // [h, w]
};

namespace detail {

// Applies a coordinate remap to the last two axes of every leading slice.
template <class S, class F>
Tensor<S> remap_hw(const Tensor<S>& x, long oh, long ow, F src) {
  Shape s = x.shape();
  long h = s[s.size() - 2], w = s[s.size() - 1];
  long planes = x.numel() / (h * w);
  Shape os = s;
  os[os.size() - 2] = oh;
  os[os.size() - 1] = ow;
  Tensor<S> y(os);
  const S* in = x.data();
  S* out = y.data();
  for (long p = 0; p < planes; ++p)
    for (long i = 0; i < oh; ++i)
      for (long j = 0; j < ow; ++j) {
        auto [si, sj] = src(i, j);
        out[(p * oh + i) * ow + j] = in[(p * h + si) * w + sj];
      }
  return y;
}

template <class S>
Tensor<S> flip_h(const Tensor<S>& x) {
  long h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  return remap_hw(x, h, w,
                  [&](long i, long j) { return std::pair(i, w - 1 - j); });
}

template <class S>
Tensor<S> flip_v(const Tensor<S>& x) {
  long h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  return remap_hw(x, h, w,
                  [&](long i, long j) { return std::pair(h - 1 - i, j); });
}

// Quarter turn counterclockwise; square planes only.
template <class S>
Tensor<S> rot90(const Tensor<S>& x) {
  long n = x.dim(x.rank() - 1);
  return remap_hw(x, n, n,
                  [&](long i, long j) { return std::pair(j, n - 1 - i); });
}

}  // namespace detail

// Same random flip and quarter-turn rotation applied to the compressed
// frames and the raw target jointly, so the pairing is preserved. Draw
// order is fixed: horizontal flip, vertical flip, rotation count.
template <class S>
TrainSample<S> augment(const TrainSample<S>& sample, Rng& rng) {
  if (sample.frames.rank() != 3 || sample.target.rank() != 2)
    throw DimensionError("augment: expects frames [f, h, w] and target [h, w]");
  long h = sample.frames.dim(1), w = sample.frames.dim(2);
  if (h != w)
    throw UsageError("augment: rotations require square patches, got " +
                     std::to_string(h) + "x" + std::to_string(w));
  if (sample.target.dim(0) != h || sample.target.dim(1) != w)
    throw DimensionError("augment: target extent differs from frames");
  bool fh = rng.bounded(2) == 1;
  bool fv = rng.bounded(2) == 1;
  long quarter_turns = rng.bounded(4);
  auto apply = [&](Tensor<S> t) {
    if (fh) t = detail::flip_h(t);
    if (fv) t = detail::flip_v(t);
    for (long k = 0; k < quarter_turns; ++k) t = detail::rot90(t);
    return t;
  };
  return {apply(sample.frames), apply(sample.target)};
}

// Stage 1 trains with (alpha, beta) = (1, 0), stage 2 with (0, 1); the
// learning rate is constant throughout. crop is consumed by patch
// sampling, not by the step loop (samples arrive pre-cropped).
struct TrainSchedule {
  long stage1_steps = 0;
  long stage2_steps = 0;
  double lr = 1e-4;
  long batch_size = 4;
  long crop = 32;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;
  double clip_norm = 0;       // 0 disables gradient clipping
  long checkpoint_every = 0;  // 0 disables periodic checkpoints

  void validate() const {
    if (stage1_steps < 0 || stage2_steps < 0)
      throw ConfigError("TrainSchedule: step counts must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainSchedule: batch_size must be >= 1");
    if (crop < 1) throw ConfigError("TrainSchedule: crop must be >= 1");
    if (!(lr > 0)) throw ConfigError("TrainSchedule: lr must be > 0");
    if (!(epsilon > 0)) throw ConfigError("TrainSchedule: epsilon must be > 0");
    if (clip_norm < 0) throw ConfigError("TrainSchedule: clip_norm must be >= 0");
    if (checkpoint_every < 0)
      throw ConfigError("TrainSchedule: checkpoint_every must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainSchedule& s) {
  j = nlohmann::json{{"stage1_steps", s.stage1_steps},
                     {"stage2_steps", s.stage2_steps},
                     {"lr", s.lr},
                     {"batch_size", s.batch_size},
                     {"crop", s.crop},
                     {"seed", s.seed},
                     {"epsilon", s.epsilon},
                     {"clip_norm", s.clip_norm},
                     {"checkpoint_every", s.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainSchedule& s) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (auto& [key, val] : j.items()) {
    if (key == "stage1_steps") s.stage1_steps = val.get<long>();
    else if (key == "stage2_steps") s.stage2_steps = val.get<long>();
    else if (key == "lr") s.lr = val.get<double>();
    else if (key == "batch_size") s.batch_size = val.get<long>();
    else if (key == "crop") s.crop = val.get<long>();
    else if (key == "seed") s.seed = val.get<std::uint64_t>();
    else if (key == "epsilon") s.epsilon = val.get<double>();
    else if (key == "clip_norm") s.clip_norm = val.get<double>();
    else if (key == "checkpoint_every") s.checkpoint_every = val.get<long>();
    else throw ConfigError("unknown train config key: " + key);
  }
}

struct LossRow {
  long step = 0;
  int stage = 0;
  double alpha = 0;
  double beta = 0;
  double charbonnier = 0;
  double mse = 0;
  double total = 0;
};

inline void write_loss_csv(std::ostream& os, const std::vector<LossRow>& rows) {
  os << "step,stage,alpha,beta,charbonnier,mse,total\n";
  char buf[160];
  for (const LossRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.step, r.stage, r.alpha, r.beta, r.charbonnier, r.mse,
                  r.total);
    os << buf;
  }
}

template <class S>
struct TrainResult {
  std::vector<LossRow> history;
  OptimState<S> optim;
};

template <class S>
using CheckpointFn =
    std::function<void(long step, const ModelParams<S>&, const OptimState<S>&)>;

// Runs the two-stage schedule over random batches of dataset samples,
// updating params in place. Deterministic for a fixed seed: one generator
// drives sample choice and augmentation in a fixed order, and parameters
// update in canonical path order.
template <class S>
TrainResult<S> two_stage_train(const ModelConfig& cfg, ModelParams<S>& params,
                               const std::vector<TrainSample<S>>& dataset,
                               const TrainSchedule& sched,
                               const CheckpointFn<S>& on_checkpoint = {}) {
  sched.validate();
  if (dataset.empty()) throw UsageError("two_stage_train: empty dataset");
  const long F = cfg.frames();
  const long h = dataset[0].frames.dim(1), w = dataset[0].frames.dim(2);
  for (const auto& s : dataset) {
    if (s.frames.rank() != 3 || s.frames.dim(0) != F)
      throw DimensionError("two_stage_train: sample frames must be [" +
                           std::to_string(F) + ", h, w], got " +
                           shape_str(s.frames.shape()));
    if (s.frames.dim(1) != h || s.frames.dim(2) != w ||
        s.target.rank() != 2 || s.target.dim(0) != h || s.target.dim(1) != w)
      throw DimensionError("two_stage_train: mixed sample extents");
  }

  Rng rng(sched.seed);
  TrainResult<S> result;
  result.optim = OptimState<S>(params, sched.lr);
  params.set_requires_grad(true);

  const long total_steps = sched.stage1_steps + sched.stage2_steps;
  const long B = sched.batch_size;
  for (long step = 1; step <= total_steps; ++step) {
    const int stage = step <= sched.stage1_steps ? 1 : 2;
    const double alpha = stage == 1 ? 1.0 : 0.0;
    const double beta = stage == 1 ? 0.0 : 1.0;

    Tensor<S> batch({B, F, h, w});
    Tensor<S> target({B, 1, h, w});
    for (long b = 0; b < B; ++b) {
      long pick = rng.bounded(long(dataset.size()));
      TrainSample<S> s = augment(dataset[size_t(pick)], rng);
      std::memcpy(batch.data() + b * F * h * w, s.frames.data(),
                  size_t(F * h * w) * sizeof(S));
      std::memcpy(target.data() + b * h * w, s.target.data(),
                  size_t(h * w) * sizeof(S));
    }

    LossRow row;
    row.step = step;
    row.stage = stage;
    row.alpha = alpha;
    row.beta = beta;
    try {
      Tape<S> tape;
      TapeScope<S> scope(tape);
      Tensor<S> out = tvqe_forward(batch, params, cfg);
      Tensor<S> charb = charbonnier_loss(out, target, sched.epsilon);
      Tensor<S> msel = mse_loss(out, target);
      Tensor<S> total = add(scale(charb, alpha), scale(msel, beta));
      row.charbonnier = double(charb.item());
      row.mse = double(msel.item());
      row.total = double(total.item());
      if (!std::isfinite(row.total))
        throw NumericError("non-finite loss (charbonnier " +
                           std::to_string(row.charbonnier) + ", mse " +
                           std::to_string(row.mse) + ")");
      tape.backward(total);
    } catch (const NumericError& e) {
      // op-level guards fire without step context; attach it here
      throw NumericError("two_stage_train: aborted at step " +
                         std::to_string(step) + " (lr " +
                         std::to_string(sched.lr) + "): " + e.what());
    }
    if (sched.clip_norm > 0) clip_grad_norm(params, sched.clip_norm);
    adam_step(params, result.optim);
    result.history.push_back(row);

    if (on_checkpoint && sched.checkpoint_every > 0 &&
        step % sched.checkpoint_every == 0)
      on_checkpoint(step, params, result.optim);
  }
  return result;
}

}  // namespace tvqe
