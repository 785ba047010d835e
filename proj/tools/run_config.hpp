#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tvqe/degrade.hpp"
#include "tvqe/loss.hpp"
#include "tvqe/model.hpp"
#include "tvqe/train.hpp"

namespace tvqe::cli {

// Paths and labels a run touches. Which ones must be set depends on the
// subcommand; extents are required whenever a raw .yuv is read.
struct IoConfig {
  std::string raw;         // pristine sequence
  std::string compressed;  // degraded sequence
  std::string enhanced;    // enhanced sequence (eval input, enhance output)
  std::string checkpoint;  // model weights
  std::string out;         // output directory
  long width = 0;
  long height = 0;
  long q = 0;                    // report label for quality rows
  std::vector<long> q_list{22, 27, 32, 37, 42};
  long samples = 64;             // training patches drawn from the inputs
  std::string sequence = "clip"; // report row name
  std::string rd_anchor;         // rate,psnr CSV feeding BD-rate
  std::string rd_test;
  std::string bd_fit = "pchip";  // or "cubic"
};

void to_json(nlohmann::json& j, const IoConfig& c);
void from_json(const nlohmann::json& j, IoConfig& c);

// Everything a run needs, assembled from defaults, an optional JSON config
// file, dotted key=value overrides, and explicit flags (in that order).
// `sections` records which top-level groups the user touched at all.
struct RunConfig {
  ModelConfig model;
  TrainSchedule train;
  LossConfig loss;
  DegradeProfile degrade;
  IoConfig io;
  std::set<std::string> sections;
};

void to_json(nlohmann::json& j, const RunConfig& c);

// Builds the config: reads `config_path` if nonempty, then applies
// "section.key=value" overrides. Unknown sections or keys are hard errors.
RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides);

// Writes the fully resolved config into dir/config.json so the run can be
// reproduced from its own output.
void echo_config(const RunConfig& cfg, const std::string& dir);

// "WxH" with positive integers.
std::pair<long, long> parse_dims(const std::string& dims);

// Comma-separated integer list, e.g. "22,27,32".
std::vector<long> parse_long_list(const std::string& text);

// Comma-separated fields, whitespace kept, empty fields rejected.
std::vector<std::string> split_list(const std::string& text);

}  // namespace tvqe::cli
