#include "bmr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bmr {

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, const AdamHyper& hyper) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + hyper.eps);
    }
  }
}

double cosine_anneal(double lr0, std::int64_t step, std::int64_t total) {
  if (total <= 0) return lr0;
  const auto s = std::clamp<std::int64_t>(step, 0, total);
  return lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(s) / static_cast<double>(total))) / 2.0;
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

void clear_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.clear_grad();
}

}  // namespace bmr
