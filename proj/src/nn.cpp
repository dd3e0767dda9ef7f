#include "bmr/nn.hpp"

#include <cmath>

namespace bmr {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor sinusoidal_positions(std::size_t t, std::size_t d) {
  std::vector<double> v(t * d);
  for (std::size_t pos = 0; pos < t; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      v[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({t, d}, std::move(v));
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(init_uniform({in, out}, in, rng)), bias(init_uniform({out}, in, rng)) {}

void Linear::enumerate(const std::string& prefix, StateList& out) const {
  out.push_back({prefix + ".weight", StateEntry::Kind::kParam, weight, nullptr});
  out.push_back({prefix + ".bias", StateEntry::Kind::kParam, bias, nullptr});
}

BatchNorm1d::BatchNorm1d(std::size_t d)
    : gamma(Tensor::full({d}, 1.0, true)), beta(Tensor::zeros({d}, true)) {
  stats.mean.assign(d, 0.0);
  stats.var.assign(d, 1.0);
}

Tensor BatchNorm1d::operator()(const Tensor& x, NormMode mode) {
  const std::size_t d = x.shape().back();
  if (x.rank() == 2) return batchnorm1d(x, gamma, beta, stats, mode);
  Tensor flat = reshape(x, {x.numel() / d, d});
  return reshape(batchnorm1d(flat, gamma, beta, stats, mode), x.shape());
}

void BatchNorm1d::enumerate(const std::string& prefix, StateList& out) {
  out.push_back({prefix + ".gamma", StateEntry::Kind::kParam, gamma, nullptr});
  out.push_back({prefix + ".beta", StateEntry::Kind::kParam, beta, nullptr});
  out.push_back({prefix + ".running_mean", StateEntry::Kind::kBuffer, {}, &stats.mean});
  out.push_back({prefix + ".running_var", StateEntry::Kind::kBuffer, {}, &stats.var});
}

LayerNorm::LayerNorm(std::size_t d) : gamma(Tensor::full({d}, 1.0, true)), beta(Tensor::zeros({d}, true)) {}

void LayerNorm::enumerate(const std::string& prefix, StateList& out) const {
  out.push_back({prefix + ".gamma", StateEntry::Kind::kParam, gamma, nullptr});
  out.push_back({prefix + ".beta", StateEntry::Kind::kParam, beta, nullptr});
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : fc1(in, hidden, rng), norm(hidden), fc2(hidden, out, rng) {}

Mlp::Output Mlp::forward(const Tensor& x, NormMode mode) {
  Tensor h = elu(norm(fc1(x), mode));
  return {h, fc2(h)};
}

void Mlp::enumerate(const std::string& prefix, StateList& out) {
  fc1.enumerate(prefix + ".fc1", out);
  norm.enumerate(prefix + ".norm", out);
  fc2.enumerate(prefix + ".fc2", out);
}

std::vector<Tensor> trainable(const StateList& state) {
  std::vector<Tensor> out;
  for (const auto& e : state)
    if (e.kind == StateEntry::Kind::kParam && e.tensor.requires_grad()) out.push_back(e.tensor);
  return out;
}

}  // namespace bmr
