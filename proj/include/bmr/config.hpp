#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmr/data.hpp"
#include "bmr/model.hpp"

namespace bmr {

using Json = nlohmann::json;

/// Flat JSON form of a model configuration (encoder fields inlined).
Json config_to_json(const BmrConfig& cfg);

/// Reads the keys of `j` that belong to BmrConfig on top of `base`. Type
/// errors and bad enum names are appended to `problems`; unknown keys are left
/// for the caller.
BmrConfig config_from_json(const Json& j, std::vector<std::string>& problems, BmrConfig base = {});

/// Every key config_from_json understands.
const std::vector<std::string>& config_keys();

std::string to_string(ReweighMode m);
std::string to_string(GateMode m);
std::string to_string(GateInput m);
std::string to_string(RefineMode m);

/// Synthetic-corpus source used when a run has no dataset paths.
struct SynthSource {
  std::size_t n = 0;
  SignalSpec spec;
  std::uint64_t seed = 1;
};

/// Complete description of a training run as stored on disk.
struct RunConfig {
  BmrConfig model;
  /// Derive the decision threshold from the training set instead of model.threshold.
  bool auto_threshold = false;
  std::size_t epochs = 30;
  std::size_t batch = 24;
  double lr0 = 1e-4;
  std::vector<std::uint64_t> seeds{0};
  /// Stop after this many epochs without a better test accuracy (0 = never).
  std::size_t patience = 0;
  bool stop_at_perfect = false;
  /// Consistency-set size; 0 picks the largest valid size for the real pool.
  std::size_t consistency_k = 0;
  std::string train_path;
  std::string test_path;
  std::string out_dir = "out";
  SynthSource synth;
};

/// Parses and validates a run configuration. Throws ConfigError listing every
/// problem (unknown keys, type errors, out-of-range values).
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);
Json run_config_to_json(const RunConfig& rc);

}  // namespace bmr
