#pragma once

#include <cstdint>
#include <vector>

#include "bmr/tensor.hpp"

namespace bmr {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter (same order as the
/// parameter list handed to adam_step).
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. Parameters without a gradient are skipped.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr,
               const AdamHyper& hyper = {});

/// lr0 * (1 + cos(pi * step / total)) / 2, with step clamped to [0, total].
double cosine_anneal(double lr0, std::int64_t step, std::int64_t total);

void zero_grads(std::vector<Tensor>& params);
/// Drops gradient buffers so the next adam_step skips untouched parameters.
void clear_grads(std::vector<Tensor>& params);

}  // namespace bmr
