#pragma once

#include <cstddef>
#include <span>

namespace bmr {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Confusion counts treat fake as the positive class.
struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  ClassScores fake;
  ClassScores real;

  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Decision is fake iff y_hat >= threshold; labels are 1 for fake, 0 for real.
Metrics compute_metrics(std::span<const double> y_hat, std::span<const double> labels, double threshold);

/// Metrics from confusion counts alone (0/0 counts as 0).
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

/// Fraction of real items, rounded to the nearest 0.05 and kept within
/// [0.05, 0.95]. Throws std::invalid_argument unless both classes are present.
double derive_threshold(std::size_t n_real, std::size_t n_fake);

}  // namespace bmr
