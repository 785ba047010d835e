#include "commands.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tvqe/checkpoint.hpp"
#include "tvqe/csvio.hpp"
#include "tvqe/dataset.hpp"
#include "tvqe/gradcheck.hpp"
#include "tvqe/metrics.hpp"
#include "tvqe/opcheck.hpp"
#include "tvqe/swin.hpp"
#include "tvqe/yuv.hpp"

namespace tvqe::cli {
namespace {

namespace fs = std::filesystem;

void need(const std::string& value, const char* what) {
  if (value.empty())
    throw UsageError(std::string("missing ") + what);
}

void need_dims(const RunConfig& cfg) {
  if (cfg.io.width <= 0 || cfg.io.height <= 0)
    throw UsageError("raw sequences are headerless; pass --dims WxH");
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::vector<std::uint8_t> quantize_plane(const Tensor<double>& plane) {
  std::vector<std::uint8_t> bytes(size_t(plane.numel()));
  for (long i = 0; i < plane.numel(); ++i)
    bytes[size_t(i)] = quantize_luma(plane.data()[i]);
  return bytes;
}

}  // namespace

int cmd_synth(const RunConfig& cfg) {
  need(cfg.io.raw, "io.raw (--in)");
  need(cfg.io.out, "io.out (--out)");
  need_dims(cfg);
  if (cfg.io.q_list.empty()) throw UsageError("io.q_list is empty");
  auto in = open_yuv(cfg.io.raw, cfg.io.width, cfg.io.height);
  echo_config(cfg, cfg.io.out);
  for (long qp : cfg.io.q_list) {
    if (qp < 0) throw UsageError("q values must be >= 0");
    DegradeProfile prof = cfg.degrade;  // block and deadzone carry over
    prof.q = qp == 0 ? 0.0 : DegradeProfile::from_qp(int(qp)).q;
    std::string path = join(cfg.io.out, "q" + std::to_string(qp) + ".yuv");
    YuvWriter writer(path, in.width, in.height);
    for (long t = 0; t < in.frame_count; ++t) {
      auto plane = read_y_plane<double>(in, t);
      auto degraded = synth_degrade(plane, prof);
      writer.append_frame(quantize_plane(degraded), read_chroma_bytes(in, t));
    }
    std::printf("wrote %s (%ld frames)\n", path.c_str(),
                writer.frames_written());
  }
  return 0;
}

namespace {

template <class S>
int run_train(const RunConfig& cfg) {
  auto raw = open_yuv(cfg.io.raw, cfg.io.width, cfg.io.height);
  auto comp = open_yuv(cfg.io.compressed, cfg.io.width, cfg.io.height);
  auto dataset =
      sample_patches<S>(comp, raw, cfg.train.crop, cfg.io.samples,
                        cfg.model.radius, cfg.train.seed);
  auto params = param_init<S>(cfg.model, cfg.train.seed);
  echo_config(cfg, cfg.io.out);

  CheckpointFn<S> on_checkpoint;
  if (cfg.train.checkpoint_every > 0)
    on_checkpoint = [&cfg](long step, const ModelParams<S>& p,
                           const OptimState<S>& o) {
      char name[32];
      std::snprintf(name, sizeof(name), "step%06ld.ckpt", step);
      save_checkpoint<S>(join(cfg.io.out, name), cfg.model, p, &o);
    };

  auto result =
      two_stage_train(cfg.model, params, dataset, cfg.train, on_checkpoint);

  std::string ckpt = join(cfg.io.out, "model.ckpt");
  save_checkpoint<S>(ckpt, cfg.model, params, &result.optim);
  std::ofstream csv(join(cfg.io.out, "loss.csv"));
  if (!csv) throw IoError("cannot write " + join(cfg.io.out, "loss.csv"));
  write_loss_csv(csv, result.history);

  if (result.history.empty()) {
    std::printf("0 steps; wrote initialized %s\n", ckpt.c_str());
  } else {
    const auto& last = result.history.back();
    std::printf("step %ld stage %d total %.6g; wrote %s\n", last.step,
                last.stage, last.total, ckpt.c_str());
  }
  return 0;
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
  need(cfg.io.raw, "io.raw (--raw)");
  need(cfg.io.compressed, "io.compressed (--compressed)");
  need(cfg.io.out, "io.out (--out)");
  need_dims(cfg);
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.io.samples < 1) throw UsageError("io.samples must be >= 1");
  return cfg.model.dtype == "f64" ? run_train<double>(cfg)
                                  : run_train<float>(cfg);
}

namespace {

template <class S>
int run_enhance(const RunConfig& cfg) {
  auto loaded = cfg.sections.count("model")
                    ? load_checkpoint<S>(cfg.io.checkpoint, cfg.model)
                    : load_checkpoint<S>(cfg.io.checkpoint);
  const ModelConfig& mc = loaded.config;
  auto in = open_yuv(cfg.io.compressed, cfg.io.width, cfg.io.height);
  std::string dir = fs::path(cfg.io.enhanced).parent_path().string();
  echo_config(cfg, dir.empty() ? "." : dir);
  YuvWriter writer(cfg.io.enhanced, in.width, in.height);
  for (long t = 0; t < in.frame_count; ++t) {
    auto clip = clip_window<S>(in, t, mc.radius);
    auto plane = tvqe_forward(clip, loaded.params, mc);
    std::vector<std::uint8_t> luma(size_t(plane.numel()));
    for (long i = 0; i < plane.numel(); ++i)
      luma[size_t(i)] = quantize_luma(double(plane.data()[i]));
    writer.append_frame(luma, read_chroma_bytes(in, t));
  }
  std::printf("wrote %s (%ld frames)\n", cfg.io.enhanced.c_str(),
              writer.frames_written());
  return 0;
}

}  // namespace

int cmd_enhance(const RunConfig& cfg) {
  need(cfg.io.checkpoint, "io.checkpoint (--checkpoint)");
  need(cfg.io.compressed, "io.compressed (--in)");
  need(cfg.io.enhanced, "io.enhanced (--out)");
  need_dims(cfg);
  auto raw = ckpt::load_raw(cfg.io.checkpoint);
  auto stored = nlohmann::json::parse(raw.config_json).get<ModelConfig>();
  return stored.dtype == "f64" ? run_enhance<double>(cfg)
                               : run_enhance<float>(cfg);
}

namespace {

std::vector<RDPoint> read_rd_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open RD curve " + path);
  std::string line;
  if (!std::getline(is, line)) throw UsageError(path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "rate,psnr")
    throw UsageError(path + ": first line must be the header rate,psnr");
  std::vector<RDPoint> points;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    RDPoint p;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf%c", &p.rate, &p.psnr, &tail) < 2)
      throw UsageError(path + ":" + std::to_string(lineno) +
                       ": expected rate,psnr");
    points.push_back(p);
  }
  return points;
}

}  // namespace

int cmd_eval(const RunConfig& cfg) {
  need(cfg.io.raw, "io.raw (--raw)");
  need(cfg.io.compressed, "io.compressed (--compressed)");
  need(cfg.io.enhanced, "io.enhanced (--enhanced)");
  need(cfg.io.out, "io.out (--out)");
  need_dims(cfg);

  auto raw_seq = open_yuv(cfg.io.raw, cfg.io.width, cfg.io.height);
  auto comp_seq = open_yuv(cfg.io.compressed, cfg.io.width, cfg.io.height);
  auto enh_seq = open_yuv(cfg.io.enhanced, cfg.io.width, cfg.io.height);

  auto load = [](const YuvSequence& seq) {
    std::vector<Tensor<double>> frames;
    for (long t = 0; t < seq.frame_count; ++t)
      frames.push_back(read_y_plane<double>(seq, t));
    return frames;
  };
  auto raw = load(raw_seq);
  auto comp = load(comp_seq);
  auto enh = load(enh_seq);

  auto rep = delta_metrics(raw, comp, enh);
  auto series = per_frame_series(raw, comp, enh);

  echo_config(cfg, cfg.io.out);
  {
    std::ofstream os(join(cfg.io.out, "quality.csv"));
    if (!os) throw IoError("cannot write quality.csv");
    write_quality_csv(
        os, {{cfg.io.sequence, int(cfg.io.q), rep.dpsnr, rep.dssim}});
  }
  {
    std::ofstream os(join(cfg.io.out, "series.dat"));
    if (!os) throw IoError("cannot write series.dat");
    write_fluctuation_table(os, series);
  }

  std::printf("frames %zu (dpsnr over %ld, excluded %ld)\n", raw.size(),
              rep.psnr_frames, rep.psnr_excluded);
  std::printf("dpsnr %.6f dB\n", rep.dpsnr);
  std::printf("dssim %.6f\n", rep.dssim);
  std::printf("fluctuation std: compressed %.6f, enhanced %.6f\n",
              series.compressed_std, series.enhanced_std);

  if (!cfg.io.rd_anchor.empty() || !cfg.io.rd_test.empty()) {
    if (cfg.io.rd_anchor.empty() || cfg.io.rd_test.empty())
      throw UsageError("BD-rate needs both io.rd_anchor and io.rd_test");
    auto anchor = read_rd_csv(cfg.io.rd_anchor);
    auto test = read_rd_csv(cfg.io.rd_test);
    BdFit fit =
        cfg.io.bd_fit == "cubic" ? BdFit::kGlobalCubic : BdFit::kPchip;
    double bd = bd_rate(anchor, test, fit);
    {
      std::ofstream os(join(cfg.io.out, "bdrate.csv"));
      if (!os) throw IoError("cannot write bdrate.csv");
      write_bdrate_csv(os, {{cfg.io.sequence, bd}});
    }
    {
      std::ofstream os(join(cfg.io.out, "rd.dat"));
      if (!os) throw IoError("cannot write rd.dat");
      write_rd_table(os, {{"anchor", anchor}, {"test", test}});
    }
    std::printf("bd-rate (%s): %.4f%%\n", cfg.io.bd_fit.c_str(), bd);
  }
  return 0;
}

namespace {

// Matches the documented toy scale: two frames either side collapse to one,
// 16-channel embedding, 4x4 windows, single block per stage.
ModelConfig gradcheck_default_model() {
  ModelConfig cfg;
  cfg.radius = 1;
  cfg.window_size = 4;
  cfg.depths = {1, 1, 1};
  cfg.heads = {2, 2, 2};
  cfg.embed_dim = 16;
  cfg.mlp_ratio = 1.0;
  cfg.num_restormers = 1;
  cfg.patch = 2;
  cfg.mdta_heads = 2;
  cfg.gdfn_expansion = 2.0;
  cfg.dtype = "f64";
  return cfg;
}

const char* verdict(bool ok) { return ok ? "ok" : "FAIL"; }

}  // namespace

int cmd_gradcheck(const RunConfig& cfg, const GradcheckOptions& opt) {
  if (!opt.inject.empty()) backward_sign_flip_op() = opt.inject;

  bool all_ok = true;
  std::vector<std::string> failures;

  auto suite = op_check_suite<double>(7 + cfg.train.seed);
  std::printf("op checks (step %g, tol %g):\n", opt.op_step, opt.op_tol);
  for (auto& check : suite) {
    auto rep = check.run(opt.op_step);
    bool ok = rep.max_rel < opt.op_tol;
    std::printf("  %-28s %4ld coords   max rel %.3e   %s\n",
                check.name.c_str(), rep.checked, rep.max_rel, verdict(ok));
    if (!ok) {
      all_ok = false;
      failures.push_back(check.name);
    }
  }

  ModelConfig mc =
      cfg.sections.count("model") ? cfg.model : gradcheck_default_model();
  mc.validate();
  if (mc.dtype != "f64")
    throw ConfigError("gradient checks need model.dtype f64");
  cfg.loss.validate();

  auto params = param_init<double>(mc, cfg.train.seed);
  Rng rng(cfg.train.seed + 1);
  spread_params(params, rng);
  auto frames = uniform<double>({1, mc.frames(), 16, 16}, rng, 0, 1);
  auto target = uniform<double>({1, 1, 16, 16}, rng, 0, 1);
  std::vector<std::pair<std::string, Tensor<double>>> probe;
  for (auto& [path, t] : params.tensors) probe.emplace_back(path, t);
  std::function<Tensor<double>()> loss = [&]() {
    return charbonnier_loss(tvqe_forward(frames, params, mc),
                            target, cfg.loss.epsilon);
  };
  std::printf(
      "end-to-end charbonnier composite (step %g, tol %g, floor %g%s):\n",
      opt.model_step, opt.model_tol, opt.model_floor,
      opt.richardson ? ", richardson" : "");
  auto rows = finite_diff_check_params<double>(loss, probe, opt.model_step,
                                               opt.coords, cfg.train.seed + 2,
                                               opt.richardson,
                                               opt.model_floor);
  for (auto& row : rows) {
    bool ok = row.report.max_rel < opt.model_tol;
    std::printf("  %-28s %4ld coords   max rel %.3e   %s\n", row.name.c_str(),
                row.report.checked, row.report.max_rel, verdict(ok));
    if (!ok) {
      all_ok = false;
      failures.push_back(row.name);
    }
  }

  if (!opt.inject.empty()) backward_sign_flip_op().clear();

  if (all_ok) {
    std::printf("gradcheck: PASS (%zu ops, %zu parameters)\n", suite.size(),
                rows.size());
    return 0;
  }
  std::printf("gradcheck: FAIL (%zu rows):", failures.size());
  for (auto& f : failures) std::printf(" %s", f.c_str());
  std::printf("\n");
  return 3;
}

namespace {

template <class F>
double time_ms(F&& body) {
  using clock = std::chrono::steady_clock;
  body();  // warm caches and allocators
  long reps = 1;
  for (;;) {
    auto t0 = clock::now();
    for (long r = 0; r < reps; ++r) body();
    double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (ms >= 25.0 || reps >= (1L << 20)) return ms / double(reps);
    long next = ms > 0.01 ? long(double(reps) * 30.0 / ms) + 1 : reps * 16;
    reps = std::max(reps * 2, next);
  }
}

double loglog_slope(const std::vector<double>& xs,
                    const std::vector<double>& ys) {
  double mx = 0, my = 0;
  size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (size_t i = 0; i < n; ++i) {
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= double(n);
  my /= double(n);
  double num = 0, den = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

}  // namespace

int cmd_bench(const RunConfig& cfg, const BenchOptions& opt) {
  if (opt.sizes.size() < 2)
    throw UsageError("bench needs at least two sizes for a slope");
  const long c = 16, heads = 2, ws = 4;

  ModelConfig mc = gradcheck_default_model();
  mc.radius = 0;
  mc.dtype = "f32";
  auto P = param_init<float>(mc, cfg.train.seed);

  Rng rng(cfg.train.seed + 1);
  WmsaParams<float> wp;
  wp.qkv_w = uniform<float>({c, 3 * c}, rng, -0.1, 0.1);
  wp.qkv_b = uniform<float>({3 * c}, rng, -0.1, 0.1);
  wp.proj_w = uniform<float>({c, c}, rng, -0.1, 0.1);
  wp.proj_b = uniform<float>({c}, rng, -0.1, 0.1);
  wp.rel_pos_table =
      uniform<float>({(2 * ws - 1) * (2 * ws - 1), heads}, rng, -0.1, 0.1);

  std::vector<double> pixels, mdta_ms, wmsa_ms;
  std::printf("# extent pixels mdta_ms wmsa_ms\n");
  for (auto [w, h] : opt.sizes) {
    if (w % ws != 0 || h % ws != 0)
      throw UsageError("bench extents must be multiples of " +
                       std::to_string(ws));
    auto x = uniform<float>({1, c, h, w}, rng, 0, 1);
    double tm = time_ms([&] { mdta_forward(x, P, "caqe.res0.attn", heads); });
    long nw = (h / ws) * (w / ws);
    auto tokens = uniform<float>({nw, ws * ws, c}, rng, 0, 1);
    double tw = time_ms([&] { wmsa(tokens, wp, heads); });
    pixels.push_back(double(h * w));
    mdta_ms.push_back(tm);
    wmsa_ms.push_back(tw);
    std::printf("%ldx%ld %ld %.4f %.4f\n", w, h, h * w, tm, tw);
  }
  std::printf("mdta log-log slope vs pixels: %.3f\n",
              loglog_slope(pixels, mdta_ms));
  std::printf("wmsa log-log slope vs tokens: %.3f\n",
              loglog_slope(pixels, wmsa_ms));
  return 0;
}

}  // namespace tvqe::cli
