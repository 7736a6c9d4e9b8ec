#pragma once

#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "darccn/common.hpp"
#include "darccn/model.hpp"
#include "darccn/training.hpp"

namespace darccn::config {

using KvMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Flat `key = value` lines; '#' starts a comment, blanks are skipped.
inline KvMap parse_kv_stream(std::istream& in) {
  KvMap out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw protocol_error("config line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty())
      throw protocol_error("config line " + std::to_string(lineno) + " has an empty key");
    if (out.count(key))
      throw protocol_error("duplicate config key: " + key);
    out[key] = value;
  }
  return out;
}

inline KvMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  return parse_kv_stream(in);
}

inline void parse_assignment(KvMap& into, const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0)
    throw protocol_error("expected key=value, got: " + arg);
  into[trim(arg.substr(0, eq))] = trim(arg.substr(eq + 1));
}

inline long kv_long(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long v = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw protocol_error("config key " + key + " needs an integer, got: " + value);
  return v;
}

inline double kv_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw protocol_error("config key " + key + " needs a number, got: " + value);
  return v;
}

// Applies settings onto a model config and, when given, a training config.
// Any key outside the known set is an error, so typos fail loudly.
inline void apply_settings(nn::ModelConfig& mc, nn::TrainConfig* tc, const KvMap& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "sample_rate") mc.sample_rate = kv_long(key, value);
    else if (key == "win_len") mc.win_len = kv_long(key, value);
    else if (key == "stages") mc.stages = kv_long(key, value);
    else if (key == "scale") mc.scale = kv_long(key, value);
    else if (key == "glu_blocks") mc.glu_blocks = kv_long(key, value);
    else if (key == "glu_width") mc.glu_width = kv_long(key, value);
    else if (key == "glu_kernel") mc.glu_kernel = kv_long(key, value);
    else if (tc && key == "epochs") tc->epochs = kv_long(key, value);
    else if (tc && key == "batch_size") tc->batch_size = kv_long(key, value);
    else if (tc && key == "lr") tc->lr = kv_double(key, value);
    else if (tc && key == "seed") tc->seed = static_cast<std::uint64_t>(kv_long(key, value));
    else throw protocol_error("unknown config key: " + key);
  }
  nn::validate(mc);
}

inline nn::ModelConfig preset_by_name(const std::string& name) {
  if (name == "full") return nn::ModelConfig::full_scale();
  if (name == "desk") return nn::ModelConfig::desk();
  if (name == "micro") return nn::ModelConfig::micro();
  throw protocol_error("unknown preset: " + name + " (expected full, desk, or micro)");
}

}  // namespace darccn::config
