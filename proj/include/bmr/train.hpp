#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmr/config.hpp"
#include "bmr/data.hpp"
#include "bmr/metrics.hpp"
#include "bmr/model.hpp"

namespace bmr {

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch = 24;
  double lr0 = 1e-4;
  std::uint64_t seed = 0;  // minibatch order
  std::size_t patience = 0;
  bool stop_at_perfect = false;
  std::size_t eval_batch = 256;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_final = 0.0;
  double train_coarse = 0.0;
  double train_cc = 0.0;  // unweighted consistency loss
  Metrics test;
};

struct RunReport {
  Json config;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  Metrics initial;
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;  // empty: the initial weights were never beaten
  Metrics best;

  Json to_json() const;
};

Json metrics_to_json(const Metrics& m);

/// Alternates one consistency step (beta * L_CC) with one main step
/// (L_final + alpha * L_coarse) per iteration, evaluates on `test` after each
/// epoch and leaves the model holding its best-accuracy weights.
RunReport train(BmrModel& model, std::span<const RawNews> train_set, std::span<const RawNews> test_set,
                std::span<const ConsistencyPair> consistency_set, const TrainOptions& opts);

/// y_hat for every item, eval mode, no gradient.
std::vector<double> predict(BmrModel& model, std::span<const RawNews> items, std::size_t eval_batch = 256);
Metrics evaluate(BmrModel& model, std::span<const RawNews> items, double threshold,
                 std::size_t eval_batch = 256);
/// S_m for every pair and the matched-vs-mismatched accuracy at 0.5.
std::vector<double> consistency_scores(BmrModel& model, std::span<const ConsistencyPair> pairs,
                                       std::size_t eval_batch = 256);
double consistency_accuracy(BmrModel& model, std::span<const ConsistencyPair> pairs);

/// Full copy of the model state (parameters, frozen tables, running statistics).
std::vector<std::vector<double>> snapshot(BmrModel& model);
void restore(BmrModel& model, const std::vector<std::vector<double>>& snap);

struct Dataset {
  std::vector<RawNews> train;
  std::vector<RawNews> test;
};

struct RunResult {
  RunReport report;
  std::unique_ptr<BmrModel> model;
};

/// Builds a model for `cfg` with `seed`, the consistency set from the real
/// items of data.train, and trains it. The threshold is derived from the
/// training set when rc.auto_threshold is set.
RunResult run_once(const RunConfig& rc, const BmrConfig& cfg, const Dataset& data, std::uint64_t seed);

/// One grid row: a label and the JSON keys it overrides.
struct AblationDelta {
  std::string label;
  Json delta;
};

struct AblationRow {
  std::string label;
  std::vector<double> best_accuracy;  // per seed
  double mean_accuracy = 0.0;
  double mean_fake_f1 = 0.0;
  double mean_real_f1 = 0.0;
};

/// The seven single-switch ablations plus the full model.
std::vector<AblationDelta> ablation_preset();

/// Number of concurrent runs: BMR_NUM_THREADS if set, otherwise 1.
std::size_t grid_threads();

/// Trains every delta x seed (runs in parallel up to `threads`) and averages
/// the best-epoch metrics per delta. Deterministic for fixed inputs.
std::vector<AblationRow> run_ablation(const RunConfig& base, const Dataset& data,
                                      std::span<const AblationDelta> grid, std::span<const std::uint64_t> seeds,
                                      std::size_t threads);

std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace bmr
