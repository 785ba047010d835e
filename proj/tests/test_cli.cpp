#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "tvqe/checkpoint.hpp"
#include "tvqe/model.hpp"
#include "tvqe/yuv.hpp"

namespace fs = std::filesystem;
using namespace tvqe;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

const fs::path& work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "tvqe_cli_work";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path log = work_dir() / ("cmd" + std::to_string(counter++) + ".log");
  std::string cmd =
      std::string(TVQE_BIN) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(bool(is));
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

long line_count(const std::string& text) {
  long n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// Deterministic moving pattern, mid-gray chroma off neutral so copy-through
// is distinguishable from the writer's 128 filler.
fs::path make_raw(const std::string& name, long w, long h, long frames) {
  fs::path path = work_dir() / name;
  YuvWriter writer(path.string(), w, h);
  for (long t = 0; t < frames; ++t) {
    std::vector<std::uint8_t> luma(size_t(w * h));
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double v = 128 + 70 * std::sin(0.31 * double(x) + 0.13 * double(t)) *
                             std::cos(0.27 * double(y) - 0.11 * double(t));
        luma[size_t(y * w + x)] =
            std::uint8_t(std::min(255.0, std::max(0.0, std::round(v))));
      }
    std::vector<std::uint8_t> chroma(size_t((w / 2) * (h / 2) * 2));
    for (size_t i = 0; i < chroma.size(); ++i)
      chroma[i] = std::uint8_t(96 + (i * 7 + size_t(t)) % 64);
    writer.append_frame(luma, chroma);
  }
  return path;
}

const std::string kToyModel =
    "model.radius=1 model.window_size=4 model.depths=[1,1,1] "
    "model.heads=[2,2,2] model.embed_dim=8 model.num_restormers=1 "
    "model.mdta_heads=2";

}  // namespace

TEST_CASE("rejects bad invocations with usage exits") {
  CHECK(run("").exit_code == 1);
  CHECK(run("frobnicate").exit_code == 1);

  auto r = run("synth --in missing.yuv --out " +
               (work_dir() / "x").string() + " --dims 32x32 io.bogus=1");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("bogus") != std::string::npos);

  CHECK(run("synth --out y --dims 8x8").exit_code == 1);   // no input
  CHECK(run("synth --in a.yuv --out y").exit_code == 1);   // no dims
  CHECK(run("synth --in a.yuv --out y --dims 0x8").exit_code == 1);

  // missing input file is an I/O failure, not a usage one
  auto io = run("synth --in missing.yuv --out " +
                (work_dir() / "x2").string() + " --dims 32x32");
  CHECK(io.exit_code == 2);
}

TEST_CASE("synth writes one sequence per preset and echoes its config") {
  fs::path raw = make_raw("synth_raw.yuv", 32, 32, 4);
  fs::path out = work_dir() / "synth_out";

  auto r = run("synth --in " + raw.string() + " --out " + out.string() +
               " --dims 32x32");
  REQUIRE(r.exit_code == 0);
  for (int q : {22, 27, 32, 37, 42})
    CHECK(fs::exists(out / ("q" + std::to_string(q) + ".yuv")));
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::file_size(out / "q37.yuv") == fs::file_size(raw));

  // stronger q degrades more
  std::string q22 = slurp(out / "q22.yuv"), q42 = slurp(out / "q42.yuv");
  std::string orig = slurp(raw);
  auto dist = [&](const std::string& s) {
    long d = 0;
    for (size_t i = 0; i < s.size(); ++i)
      d += std::labs(long(std::uint8_t(s[i])) - long(std::uint8_t(orig[i])));
    return d;
  };
  CHECK(dist(q42) > dist(q22));

  // chroma is copied through untouched
  long fb = 32 * 32 * 3 / 2;
  for (long t = 0; t < 4; ++t)
    CHECK(q42.substr(size_t(t * fb + 32 * 32), size_t(fb - 32 * 32)) ==
          orig.substr(size_t(t * fb + 32 * 32), size_t(fb - 32 * 32)));
}

TEST_CASE("synth q=0 passes the sequence through losslessly") {
  fs::path raw = make_raw("synth0_raw.yuv", 32, 32, 3);
  fs::path out = work_dir() / "synth0_out";
  auto r = run("synth --in " + raw.string() + " --out " + out.string() +
               " --dims 32x32 --q 0");
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(out / "q0.yuv") == slurp(raw));
}

TEST_CASE("synth reruns are bit-identical, including replay from the echo") {
  fs::path raw = make_raw("synth2_raw.yuv", 32, 32, 3);
  fs::path a = work_dir() / "synth_a", b = work_dir() / "synth_b";
  fs::path c = work_dir() / "synth_c";

  std::string base = "synth --in " + raw.string() + " --dims 32x32 --q 27,37";
  REQUIRE(run(base + " --out " + a.string()).exit_code == 0);
  REQUIRE(run(base + " --out " + b.string()).exit_code == 0);
  CHECK(slurp(a / "q27.yuv") == slurp(b / "q27.yuv"));
  CHECK(slurp(a / "q37.yuv") == slurp(b / "q37.yuv"));

  auto replay = run("synth --config " + (a / "config.json").string() +
                    " io.out=" + c.string());
  REQUIRE(replay.exit_code == 0);
  CHECK(slurp(a / "q27.yuv") == slurp(c / "q27.yuv"));
  CHECK(slurp(a / "q37.yuv") == slurp(c / "q37.yuv"));
}

namespace {

fs::path train_fixture(fs::path* raw_out = nullptr) {
  static fs::path raw = make_raw("train_raw.yuv", 32, 32, 5);
  static fs::path comp = [] {
    fs::path out = work_dir() / "train_comp";
    REQUIRE(run("synth --in " + raw.string() + " --out " + out.string() +
                " --dims 32x32 --q 37")
                .exit_code == 0);
    return out / "q37.yuv";
  }();
  if (raw_out) *raw_out = raw;
  return comp;
}

std::string train_cmd(const fs::path& raw, const fs::path& comp,
                      const fs::path& out) {
  return "train --raw " + raw.string() + " --compressed " + comp.string() +
         " --out " + out.string() + " --dims 32x32 " + kToyModel +
         " train.stage1_steps=3 train.stage2_steps=2 train.batch_size=2 "
         "train.crop=16 io.samples=6";
}

}  // namespace

TEST_CASE("train writes a checkpoint and a loss log with the stage switch") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);
  fs::path out = work_dir() / "train_run";

  REQUIRE(run(train_cmd(raw, comp, out)).exit_code == 0);
  REQUIRE(fs::exists(out / "model.ckpt"));
  REQUIRE(fs::exists(out / "config.json"));

  std::string csv = slurp(out / "loss.csv");
  CHECK(line_count(csv) == 6);  // header + 5 steps
  CHECK(csv.rfind("step,stage,alpha,beta,charbonnier,mse,total\n", 0) == 0);
  CHECK(csv.find("\n3,1,") != std::string::npos);
  CHECK(csv.find("\n4,2,") != std::string::npos);

  auto loaded = load_checkpoint<float>((out / "model.ckpt").string());
  CHECK(loaded.config.embed_dim == 8);
  CHECK(loaded.optim.has_value());
}

TEST_CASE("train is deterministic for a fixed seed") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);
  fs::path a = work_dir() / "train_da", b = work_dir() / "train_db";
  REQUIRE(run(train_cmd(raw, comp, a)).exit_code == 0);
  REQUIRE(run(train_cmd(raw, comp, b)).exit_code == 0);
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  CHECK(slurp(a / "loss.csv") == slurp(b / "loss.csv"));

  fs::path c = work_dir() / "train_dc";
  REQUIRE(run(train_cmd(raw, comp, c) + " --seed 9").exit_code == 0);
  CHECK(slurp(a / "model.ckpt") != slurp(c / "model.ckpt"));
}

TEST_CASE("train with zero steps leaves an initialized checkpoint") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);
  fs::path out = work_dir() / "train_zero";
  REQUIRE(run(train_cmd(raw, comp, out) +
              " train.stage1_steps=0 train.stage2_steps=0")
              .exit_code == 0);
  CHECK(fs::exists(out / "model.ckpt"));
  CHECK(line_count(slurp(out / "loss.csv")) == 1);  // header only
}

TEST_CASE("enhance with a zeroed reconstruct layer reproduces its input") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);

  // fresh init keeps the reconstruct layer at zero, so the model is exactly
  // the identity and quantization must round-trip every byte
  fs::path init = work_dir() / "train_init";
  REQUIRE(run(train_cmd(raw, comp, init) +
              " train.stage1_steps=0 train.stage2_steps=0")
              .exit_code == 0);

  fs::path enh = work_dir() / "enh" / "out.yuv";
  std::string cmd = "enhance --checkpoint " +
                    (init / "model.ckpt").string() + " --in " + comp.string() +
                    " --out " + enh.string() + " --dims 32x32";
  REQUIRE(run(cmd).exit_code == 0);
  CHECK(slurp(enh) == slurp(comp));
  CHECK(fs::exists(work_dir() / "enh" / "config.json"));

  fs::path enh2 = work_dir() / "enh2" / "out.yuv";
  REQUIRE(run("enhance --checkpoint " + (init / "model.ckpt").string() +
              " --in " + comp.string() + " --out " + enh2.string() +
              " --dims 32x32")
              .exit_code == 0);
  CHECK(slurp(enh) == slurp(enh2));
}

TEST_CASE("enhance runs a trained checkpoint over every frame") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);
  fs::path run_dir = work_dir() / "train_run2";
  REQUIRE(run(train_cmd(raw, comp, run_dir)).exit_code == 0);

  fs::path enh = work_dir() / "enh3" / "out.yuv";
  REQUIRE(run("enhance --checkpoint " + (run_dir / "model.ckpt").string() +
              " --in " + comp.string() + " --out " + enh.string() +
              " --dims 32x32")
              .exit_code == 0);
  CHECK(fs::file_size(enh) == fs::file_size(comp));

  // checkpoint config wins; a contradicting model override must be rejected
  auto clash = run("enhance --checkpoint " + (run_dir / "model.ckpt").string() +
                   " --in " + comp.string() + " --out " +
                   (work_dir() / "enh4.yuv").string() +
                   " --dims 32x32 model.embed_dim=16");
  CHECK(clash.exit_code == 1);
}

TEST_CASE("eval reports zero deltas when enhanced equals compressed") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);
  fs::path out = work_dir() / "eval_zero";

  auto r = run("eval --raw " + raw.string() + " --compressed " +
               comp.string() + " --enhanced " + comp.string() + " --out " +
               out.string() + " --dims 32x32 --sequence demo --q 37");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("dpsnr 0.000000") != std::string::npos);
  CHECK(r.output.find("dssim 0.000000") != std::string::npos);
  CHECK(r.output.find("bd-rate") == std::string::npos);

  std::string csv = slurp(out / "quality.csv");
  CHECK(csv == "sequence,q,dpsnr,dssim\ndemo,37,0.000000,0.000000\n");

  // one data row per frame after the two comment lines
  std::string series = slurp(out / "series.dat");
  CHECK(line_count(series) == 2 + 5);
}

TEST_CASE("eval computes bd-rate only when both curves are given") {
  fs::path raw;
  fs::path comp = train_fixture(&raw);
  fs::path anchor = work_dir() / "anchor.csv";
  fs::path test = work_dir() / "test.csv";
  {
    std::ofstream a(anchor);
    a << "rate,psnr\n1000,32.1\n1500,34.0\n2200,35.8\n3300,37.5\n";
    std::ofstream t(test);
    t << "rate,psnr\n900,32.1\n1350,34.0\n1980,35.8\n2970,37.5\n";
  }
  std::string base = "eval --raw " + raw.string() + " --compressed " +
                     comp.string() + " --enhanced " + comp.string() +
                     " --dims 32x32";

  fs::path out = work_dir() / "eval_bd";
  auto r = run(base + " --out " + out.string() + " --rd-anchor " +
               anchor.string() + " --rd-test " + test.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("bd-rate (pchip): -10.0000%") != std::string::npos);
  CHECK(slurp(out / "bdrate.csv") ==
        "sequence,bd_rate_percent\nclip,-10.0000\n");
  CHECK(slurp(out / "rd.dat").find("# curve: test") != std::string::npos);

  auto half = run(base + " --out " + (work_dir() / "eval_h").string() +
                  " --rd-anchor " + anchor.string());
  CHECK(half.exit_code == 1);

  fs::path two = work_dir() / "two.csv";
  std::ofstream(two) << "rate,psnr\n1000,32\n2000,36\n";
  auto degenerate = run(base + " --out " + (work_dir() / "eval_d").string() +
                        " --rd-anchor " + two.string() + " --rd-test " +
                        test.string());
  CHECK(degenerate.exit_code == 1);
}

TEST_CASE("gradcheck audits every op and the composite") {
  std::string fast = "gradcheck " + kToyModel + " model.dtype=f64 --coords 1";
  auto r = run(fast);
  REQUIRE(r.exit_code == 0);
  for (const char* op : {"matmul(lhs)", "softmax", "conv2d(input)",
                         "layer_norm", "roll2d", "pixel_shuffle"})
    CHECK(r.output.find(op) != std::string::npos);
  CHECK(r.output.find("end-to-end") != std::string::npos);
  CHECK(r.output.find("gradcheck: PASS") != std::string::npos);

  auto flipped = run(fast + " --inject-sign-flip gelu");
  CHECK(flipped.exit_code == 3);
  CHECK(flipped.output.find("gelu") != std::string::npos);
  CHECK(flipped.output.find("gradcheck: FAIL") != std::string::npos);
}

TEST_CASE("bench prints one row per extent and the scaling slopes") {
  auto r = run("bench --sizes 8x8,16x8,16x16");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("8x8 64") != std::string::npos);
  CHECK(r.output.find("16x8 128") != std::string::npos);
  CHECK(r.output.find("16x16 256") != std::string::npos);
  CHECK(r.output.find("mdta log-log slope vs pixels:") != std::string::npos);
  CHECK(r.output.find("wmsa log-log slope vs tokens:") != std::string::npos);

  CHECK(run("bench --sizes 16x16").exit_code == 1);
  CHECK(run("bench --sizes 10x16,16x16").exit_code == 1);
}
