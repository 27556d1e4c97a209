#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsp/synth.hpp"
#include "dsp/training.hpp"

namespace dsp {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything a run depends on. Loaded from a JSON file; unspecified keys keep
/// their defaults and command-line flags are applied on top.
struct Config {
  std::uint64_t seed = 0;
  int workers = 1;
  NetConfig network;
  GraphConfig graph;
  TrainConfig train;
  DecoderConfig decoder;
  SynthSpec synth;
};

Config config_from_json(const std::string& text);
std::string config_to_json(const Config& c);
Config load_config(const std::string& path);

struct RunManifest {
  Config config;
  std::string checkpoint;
  std::vector<std::string> train_scenarios;
  std::vector<std::string> eval_scenarios;
  std::string tool_version = kToolVersion;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);

}  // namespace dsp
