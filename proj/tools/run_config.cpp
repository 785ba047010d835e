#include "run_config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace tvqe::cli {

void to_json(nlohmann::json& j, const IoConfig& c) {
  j = nlohmann::json{{"raw", c.raw},
                     {"compressed", c.compressed},
                     {"enhanced", c.enhanced},
                     {"checkpoint", c.checkpoint},
                     {"out", c.out},
                     {"width", c.width},
                     {"height", c.height},
                     {"q", c.q},
                     {"q_list", c.q_list},
                     {"samples", c.samples},
                     {"sequence", c.sequence},
                     {"rd_anchor", c.rd_anchor},
                     {"rd_test", c.rd_test},
                     {"bd_fit", c.bd_fit}};
}

void from_json(const nlohmann::json& j, IoConfig& c) {
  if (!j.is_object()) throw ConfigError("io config must be a JSON object");
  for (auto& [key, val] : j.items()) {
    if (key == "raw") c.raw = val.get<std::string>();
    else if (key == "compressed") c.compressed = val.get<std::string>();
    else if (key == "enhanced") c.enhanced = val.get<std::string>();
    else if (key == "checkpoint") c.checkpoint = val.get<std::string>();
    else if (key == "out") c.out = val.get<std::string>();
    else if (key == "width") c.width = val.get<long>();
    else if (key == "height") c.height = val.get<long>();
    else if (key == "q") c.q = val.get<long>();
    else if (key == "q_list") c.q_list = val.get<std::vector<long>>();
    else if (key == "samples") c.samples = val.get<long>();
    else if (key == "sequence") c.sequence = val.get<std::string>();
    else if (key == "rd_anchor") c.rd_anchor = val.get<std::string>();
    else if (key == "rd_test") c.rd_test = val.get<std::string>();
    else if (key == "bd_fit") c.bd_fit = val.get<std::string>();
    else throw ConfigError("unknown io config key: " + key);
  }
  if (c.bd_fit != "pchip" && c.bd_fit != "cubic")
    throw ConfigError("io.bd_fit must be pchip or cubic, got " + c.bd_fit);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"train", c.train},
                     {"loss", c.loss},
                     {"degrade", c.degrade},
                     {"io", c.io}};
}

namespace {

void apply_sections(const nlohmann::json& doc, RunConfig& cfg) {
  for (auto& [key, val] : doc.items()) {
    if (key == "model") val.get_to(cfg.model);
    else if (key == "train") val.get_to(cfg.train);
    else if (key == "loss") val.get_to(cfg.loss);
    else if (key == "degrade") val.get_to(cfg.degrade);
    else if (key == "io") val.get_to(cfg.io);
    else throw ConfigError("unknown config section: " + key);
    cfg.sections.insert(key);
  }
}

}  // namespace

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw IoError("cannot open config file " + config_path);
    try {
      is >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + config_path + ": " + e.what());
    }
    if (!doc.is_object())
      throw ConfigError("config file " + config_path +
                        " must hold a JSON object");
  }

  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    auto dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq ||
        dot == 0 || dot + 1 == eq)
      throw UsageError("override must look like section.key=value, got " + ov);
    std::string section = ov.substr(0, dot);
    std::string key = ov.substr(dot + 1, eq - dot - 1);
    std::string text = ov.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      value = text;  // unquoted strings, e.g. paths
    }
    doc[section][key] = value;
  }

  RunConfig cfg;
  apply_sections(doc, cfg);
  return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string path = (std::filesystem::path(dir) / "config.json").string();
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config echo " + path);
  os << nlohmann::json(cfg).dump(2) << "\n";
}

std::pair<long, long> parse_dims(const std::string& dims) {
  long w = 0, h = 0;
  char tail = 0;
  if (std::sscanf(dims.c_str(), "%ldx%ld%c", &w, &h, &tail) != 2 || w <= 0 ||
      h <= 0)
    throw UsageError("--dims wants WxH with positive integers, got \"" + dims +
                     "\"");
  return {w, h};
}

std::vector<long> parse_long_list(const std::string& text) {
  std::vector<long> out;
  for (const std::string& item : split_list(text)) {
    try {
      size_t used = 0;
      long v = std::stol(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated integer list, got \"" +
                       text + "\"");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    std::string item = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (item.empty())
      throw UsageError("empty field in list \"" + text + "\"");
    out.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace tvqe::cli
