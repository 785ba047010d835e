#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using tvqe::cli::RunConfig;

// Flags are sugar for overrides. They land after the positional overrides so
// an explicit flag always wins, and they only touch io.* and train.seed,
// which keeps section tracking meaningful for the model block.
struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("overrides", overrides,
                    "section.key=value settings applied over the file");
  }

  void push(const std::string& key, const std::string& value) {
    overrides.push_back(key + "=" + value);
  }

  RunConfig resolve() const {
    return tvqe::cli::resolve_config(config_path, overrides);
  }
};

void add_dims(CLI::App* cmd, std::string& dims) {
  cmd->add_option("--dims", dims,
                  "frame extent WxH (required, .yuv files are headerless)");
}

void add_seed(CLI::App* cmd, std::string& seed) {
  cmd->add_option("--seed", seed, "run seed (default 0)");
}

void apply_dims(CommonArgs& args, const std::string& dims) {
  if (dims.empty()) return;
  auto [w, h] = tvqe::cli::parse_dims(dims);
  args.push("io.width", std::to_string(w));
  args.push("io.height", std::to_string(h));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compressed-video quality enhancement pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string dims, seed;
  std::string in_path, out_path, raw_path, comp_path, enh_path, ckpt_path;
  std::string q_list, sequence, q_label, rd_anchor, rd_test, fit, sizes;
  tvqe::cli::GradcheckOptions gopt;

  auto* synth = app.add_subcommand("synth", "degrade a pristine sequence");
  synth->add_option("--in", in_path, "pristine .yuv");
  synth->add_option("--out", out_path, "output directory");
  synth->add_option("--q", q_list, "comma list of q presets (0 = lossless)");

  auto* train = app.add_subcommand("train", "fit a model to paired sequences");
  train->add_option("--raw", raw_path, "pristine .yuv");
  train->add_option("--compressed", comp_path, "degraded .yuv");
  train->add_option("--out", out_path, "output directory");

  auto* enhance = app.add_subcommand("enhance", "run a trained model");
  enhance->add_option("--checkpoint", ckpt_path, "model weights");
  enhance->add_option("--in", in_path, "degraded .yuv");
  enhance->add_option("--out", out_path, "enhanced .yuv");

  auto* eval = app.add_subcommand("eval", "quality deltas and BD-rate");
  eval->add_option("--raw", raw_path, "pristine .yuv");
  eval->add_option("--compressed", comp_path, "degraded .yuv");
  eval->add_option("--enhanced", enh_path, "enhanced .yuv");
  eval->add_option("--out", out_path, "output directory");
  eval->add_option("--sequence", sequence, "report row name");
  eval->add_option("--q", q_label, "report q label");
  eval->add_option("--rd-anchor", rd_anchor, "anchor rate,psnr CSV");
  eval->add_option("--rd-test", rd_test, "test rate,psnr CSV");
  eval->add_option("--fit", fit, "BD-rate interpolation: pchip or cubic");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--op-step", gopt.op_step, "per-op probe step");
  gradcheck->add_option("--op-tol", gopt.op_tol, "per-op rel error bound");
  gradcheck->add_option("--step", gopt.model_step, "composite probe step");
  gradcheck->add_option("--tol", gopt.model_tol, "composite rel error bound");
  gradcheck->add_option("--floor", gopt.model_floor,
                        "composite denominator floor");
  gradcheck->add_option("--coords", gopt.coords,
                        "coordinates probed per tensor");
  gradcheck->add_flag("--richardson", gopt.richardson,
                      "extrapolated differences for the composite");
  gradcheck->add_option("--inject-sign-flip", gopt.inject,
                        "flip the named op's backward (audit canary)");

  auto* bench = app.add_subcommand("bench", "attention runtime scaling");
  bench->add_option("--sizes", sizes, "comma list of WxH extents");

  for (auto* cmd : {synth, train, enhance, eval, gradcheck, bench}) {
    args.attach(cmd);
    add_dims(cmd, dims);
    add_seed(cmd, seed);
  }

  try {
    app.parse(argc, argv);

    apply_dims(args, dims);
    if (!seed.empty()) args.push("train.seed", seed);
    if (!in_path.empty())
      args.push(synth->parsed() ? "io.raw" : "io.compressed", in_path);
    if (!out_path.empty())
      args.push(enhance->parsed() ? "io.enhanced" : "io.out", out_path);
    if (!raw_path.empty()) args.push("io.raw", raw_path);
    if (!comp_path.empty()) args.push("io.compressed", comp_path);
    if (!enh_path.empty()) args.push("io.enhanced", enh_path);
    if (!ckpt_path.empty()) args.push("io.checkpoint", ckpt_path);
    if (!sequence.empty()) args.push("io.sequence", sequence);
    if (!q_label.empty()) args.push("io.q", q_label);
    if (!rd_anchor.empty()) args.push("io.rd_anchor", rd_anchor);
    if (!rd_test.empty()) args.push("io.rd_test", rd_test);
    if (!fit.empty()) args.push("io.bd_fit", fit);
    if (!q_list.empty()) {
      std::string json = "[";
      for (long v : tvqe::cli::parse_long_list(q_list)) {
        if (json.size() > 1) json += ",";
        json += std::to_string(v);
      }
      args.push("io.q_list", json + "]");
    }

    RunConfig cfg = args.resolve();
    if (synth->parsed()) return tvqe::cli::cmd_synth(cfg);
    if (train->parsed()) return tvqe::cli::cmd_train(cfg);
    if (enhance->parsed()) return tvqe::cli::cmd_enhance(cfg);
    if (eval->parsed()) return tvqe::cli::cmd_eval(cfg);
    if (gradcheck->parsed()) return tvqe::cli::cmd_gradcheck(cfg, gopt);

    tvqe::cli::BenchOptions bopt;
    if (sizes.empty()) {
      bopt.sizes = {{16, 16}, {32, 16}, {32, 32}, {64, 32}, {64, 64}};
    } else {
      for (const std::string& item : tvqe::cli::split_list(sizes)) {
        auto [w, h] = tvqe::cli::parse_dims(item);
        bopt.sizes.emplace_back(w, h);
      }
    }
    return tvqe::cli::cmd_bench(cfg, bopt);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const tvqe::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const tvqe::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
