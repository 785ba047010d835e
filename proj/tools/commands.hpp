#pragma once

#include <string>
#include <utility>
#include <vector>

#include "run_config.hpp"

namespace tvqe::cli {

int cmd_synth(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_enhance(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);

struct GradcheckOptions {
  double op_step = 1e-5;
  double op_tol = 1e-5;
  double model_step = 1e-4;   // composite check probes at this step
  double model_tol = 1e-4;
  double model_floor = 1e-4;  // rel-error denominator guard for the composite
  long coords = 2;            // coordinates probed per parameter tensor
  bool richardson = false;
  std::string inject;  // op whose backward gets sign-flipped (canary)
};
int cmd_gradcheck(const RunConfig& cfg, const GradcheckOptions& opt);

struct BenchOptions {
  std::vector<std::pair<long, long>> sizes;  // (width, height) per row
};
int cmd_bench(const RunConfig& cfg, const BenchOptions& opt);

}  // namespace tvqe::cli
