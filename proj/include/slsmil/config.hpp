#pragma once

// Every pipeline tunable in one place, plus a `key = value` config file
// reader (`#` starts a comment). Unknown keys and malformed values are
// rejected with the offending line number.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slsmil/bagging.hpp"
#include "slsmil/error.hpp"
#include "slsmil/linedet.hpp"
#include "slsmil/milnet.hpp"
#include "slsmil/postproc.hpp"
#include "slsmil/sls.hpp"

namespace slsmil {

struct PipelineConfig {
  DetectorParams detector;
  PairingParams pairing;
  LabelParams labels;
  int crop_size = 128;
  int input_size = 32;
  std::vector<int> conv_channels = {8, 16, 32};
  int dense_width = 64;
  TrainSchedule schedule{32, 3000, 1, 1e-3};
  double bag_max_asymmetry = 0.35;
  NmsParams nms{0.4, 0.9};
  double match_iou = 0.4;
  double ap_score_floor = 0.01;
  int folds = 3;
  std::uint64_t seed = 1;

  void validate() const {
    detector.validate();
    pairing.validate();
    labels.validate();
    nms.validate();
    if (crop_size < 8 || input_size <= 0 || crop_size % input_size != 0)
      throw Error(ErrorCode::ConfigError, "crop.size must be >= 8 and a multiple of model.input_size");
    if (conv_channels.empty() || dense_width <= 0)
      throw Error(ErrorCode::ConfigError, "network needs at least one conv layer and a positive dense width");
    for (int c : conv_channels)
      if (c <= 0) throw Error(ErrorCode::ConfigError, "conv channel counts must be positive");
    if (schedule.negative_batch_size <= 0 || schedule.max_steps < 0 || !(schedule.learning_rate >= 0.0))
      throw Error(ErrorCode::ConfigError, "invalid training schedule");
    if (!(bag_max_asymmetry >= 0.0)) throw Error(ErrorCode::ConfigError, "train.bag_max_asymmetry must be >= 0");
    if (!(match_iou > 0.0 && match_iou <= 1.0)) throw Error(ErrorCode::ConfigError, "eval.match_iou must lie in (0, 1]");
    if (!(ap_score_floor > 0.0 && ap_score_floor <= nms.score_threshold))
      throw Error(ErrorCode::ConfigError, "eval.ap_score_floor must lie in (0, nms.score_threshold]");
    if (folds < 2) throw Error(ErrorCode::ConfigError, "eval.folds must be >= 2");
  }

  NetworkSpec network(int channels) const {
    NetworkSpec spec;
    spec.input = {input_size, input_size, channels};
    spec.convs.clear();
    for (int c : conv_channels) spec.convs.push_back({c, 3, 2});
    spec.dense = {dense_width};
    return spec;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

template <class Int>
inline bool parse_integer(const std::string& s, Int& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ConfigKey {
  std::function<bool(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T>
ConfigKey real_key(T PipelineConfig::*group, double T::*field) {
  return {[=](PipelineConfig& c, const std::string& v) { return parse_number(v, c.*group.*field); },
          [=](const PipelineConfig& c) { return format_real(c.*group.*field); }};
}

inline ConfigKey real_key(double PipelineConfig::*field) {
  return {[=](PipelineConfig& c, const std::string& v) { return parse_number(v, c.*field); },
          [=](const PipelineConfig& c) { return format_real(c.*field); }};
}

inline ConfigKey int_key(int PipelineConfig::*field) {
  return {[=](PipelineConfig& c, const std::string& v) { return parse_integer(v, c.*field); },
          [=](const PipelineConfig& c) { return std::to_string(c.*field); }};
}

inline const std::map<std::string, ConfigKey>& config_keys() {
  static const std::map<std::string, ConfigKey> keys = [] {
    std::map<std::string, ConfigKey> k;
    k["detector.angle_tolerance"] = real_key(&PipelineConfig::detector, &DetectorParams::angle_tolerance);
    k["detector.gradient_threshold"] = real_key(&PipelineConfig::detector, &DetectorParams::gradient_threshold);
    k["detector.min_length"] = real_key(&PipelineConfig::detector, &DetectorParams::min_length);
    k["detector.density_threshold"] = real_key(&PipelineConfig::detector, &DetectorParams::density_threshold);
    k["detector.smoothing_sigma"] = real_key(&PipelineConfig::detector, &DetectorParams::smoothing_sigma);
    k["pairing.endpoint_distance_factor"] =
        real_key(&PipelineConfig::pairing, &PairingParams::endpoint_distance_factor);
    k["pairing.sym_threshold"] = real_key(&PipelineConfig::pairing, &PairingParams::sym_threshold);
    k["pairing.min_pair_span"] = real_key(&PipelineConfig::pairing, &PairingParams::min_pair_span);
    k["pairing.max_pair_span"] = real_key(&PipelineConfig::pairing, &PairingParams::max_pair_span);
    k["label.positive_iou"] = real_key(&PipelineConfig::labels, &LabelParams::positive_iou);
    k["label.negative_iou"] = real_key(&PipelineConfig::labels, &LabelParams::negative_iou);
    k["crop.size"] = int_key(&PipelineConfig::crop_size);
    k["model.input_size"] = int_key(&PipelineConfig::input_size);
    k["model.dense_width"] = int_key(&PipelineConfig::dense_width);
    k["model.conv_channels"] = {
        [](PipelineConfig& c, const std::string& v) {
          std::vector<int> out;
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            int n = 0;
            if (!parse_integer(trim(item), n)) return false;
            out.push_back(n);
          }
          if (out.empty()) return false;
          c.conv_channels = out;
          return true;
        },
        [](const PipelineConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.conv_channels.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.conv_channels[i]);
          return s;
        }};
    k["train.negative_batch_size"] = {
        [](PipelineConfig& c, const std::string& v) { return parse_integer(v, c.schedule.negative_batch_size); },
        [](const PipelineConfig& c) { return std::to_string(c.schedule.negative_batch_size); }};
    k["train.max_steps"] = {[](PipelineConfig& c, const std::string& v) { return parse_integer(v, c.schedule.max_steps); },
                            [](const PipelineConfig& c) { return std::to_string(c.schedule.max_steps); }};
    k["train.learning_rate"] = real_key(&PipelineConfig::schedule, &TrainSchedule::learning_rate);
    k["train.bag_max_asymmetry"] = real_key(&PipelineConfig::bag_max_asymmetry);
    k["nms.iou_threshold"] = real_key(&PipelineConfig::nms, &NmsParams::iou_threshold);
    k["nms.score_threshold"] = real_key(&PipelineConfig::nms, &NmsParams::score_threshold);
    k["eval.match_iou"] = real_key(&PipelineConfig::match_iou);
    k["eval.ap_score_floor"] = real_key(&PipelineConfig::ap_score_floor);
    k["eval.folds"] = int_key(&PipelineConfig::folds);
    k["seed"] = {[](PipelineConfig& c, const std::string& v) { return parse_integer(v, c.seed); },
                 [](const PipelineConfig& c) { return std::to_string(c.seed); }};
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Set one key; false if the key is unknown, throws ConfigError on a bad value.
inline bool set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto& keys = detail::config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) return false;
  if (!it->second.set(cfg, detail::trim(value)))
    throw Error(ErrorCode::ConfigError, "invalid value for " + key + ": '" + value + "'");
  return true;
}

/// Apply `key = value` lines on top of `cfg`, then validate.
inline void apply_config(PipelineConfig& cfg, std::istream& in, const std::string& source = "config") {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    try {
      if (!set_config_value(cfg, key, line.substr(eq + 1)))
        throw Error(ErrorCode::ConfigError, where + ": unknown key '" + key + "'");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError && std::string(e.what()).find(where) == std::string::npos)
        throw Error(ErrorCode::ConfigError, where + ": invalid value for " + key);
      throw;
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, source + ": " + e.what());
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
  PipelineConfig cfg;
  apply_config(cfg, in, path.string());
  return cfg;
}

/// Every key with its current value, sorted by key; parses back to `cfg`.
inline std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [key, k] : detail::config_keys()) out += key + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace slsmil
