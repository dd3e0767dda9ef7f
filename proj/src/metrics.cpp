#include "bmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bmr {

namespace {

double ratio(std::size_t a, std::size_t b) {
  return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}

ClassScores scores(std::size_t hit, std::size_t false_pos, std::size_t miss) {
  ClassScores s;
  s.precision = ratio(hit, hit + false_pos);
  s.recall = ratio(hit, hit + miss);
  const double pr = s.precision + s.recall;
  s.f1 = pr == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / pr;
  return s;
}

}  // namespace

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.accuracy = ratio(tp + tn, m.total());
  m.fake = scores(tp, fp, fn);
  m.real = scores(tn, fn, fp);
  return m;
}

Metrics compute_metrics(std::span<const double> y_hat, std::span<const double> labels, double threshold) {
  if (y_hat.size() != labels.size())
    throw std::invalid_argument("metrics: " + std::to_string(y_hat.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const bool pred = y_hat[i] >= threshold;
    const bool fake = labels[i] >= 0.5;
    if (pred && fake) ++tp;
    else if (pred) ++fp;
    else if (fake) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

double derive_threshold(std::size_t n_real, std::size_t n_fake) {
  if (n_real == 0 || n_fake == 0)
    throw std::invalid_argument("threshold: training set needs both classes (real=" + std::to_string(n_real) +
                                ", fake=" + std::to_string(n_fake) + ")");
  const double frac = static_cast<double>(n_real) / static_cast<double>(n_real + n_fake);
  const double rounded = std::round(frac * 20.0) / 20.0;
  return std::clamp(rounded, 0.05, 0.95);
}

}  // namespace bmr
