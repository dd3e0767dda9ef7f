#include "bmr/immoe.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bmr {

ExpertBlock::ExpertBlock(std::size_t d, Rng& rng)
    : d_(d), ln_attn_(d), query_(d, d, rng), key_(d, d, rng), value_(d, d, rng), out_(d, d, rng),
      ln_ff_(d), ff_in_(d, 4 * d, rng), ff_out_(4 * d, d, rng) {}

Tensor ExpertBlock::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != d_)
    throw DimensionError("expert: expected [B, t, " + std::to_string(d_) + "], got " +
                         to_string(x.shape()));
  Tensor h = ln_attn_(x);
  Tensor scores = scale(bmm(query_(h), transpose_last2(key_(h))), 1.0 / std::sqrt(static_cast<double>(d_)));
  Tensor attended = bmm(softmax_lastdim(scores), value_(h));
  Tensor x1 = add(x, out_(attended));
  return add(x1, ff_out_(elu(ff_in_(ln_ff_(x1)))));
}

void ExpertBlock::enumerate(const std::string& prefix, StateList& out) const {
  ln_attn_.enumerate(prefix + ".ln_attn", out);
  query_.enumerate(prefix + ".query", out);
  key_.enumerate(prefix + ".key", out);
  value_.enumerate(prefix + ".value", out);
  out_.enumerate(prefix + ".out", out);
  ln_ff_.enumerate(prefix + ".ln_ff", out);
  ff_in_.enumerate(prefix + ".ff_in", out);
  ff_out_.enumerate(prefix + ".ff_out", out);
}

// ---------------------------------------------------------------------------

GateHead::GateHead(std::size_t d, std::size_t n_experts, GateInput input, Rng& rng)
    : input_(input),
      scorer_(d, d, input == GateInput::kTokenAttention ? 1 : d, rng),
      gate_(d, n_experts, rng) {
  std::fill(gate_.bias.mutable_data().begin(), gate_.bias.mutable_data().end(), 0.0);
}

Tensor GateHead::aggregate(const Tensor& x, NormMode mode) {
  const std::size_t B = x.dim(0), t = x.dim(1), d = x.dim(2);
  Tensor flat = reshape(x, {B * t, d});
  if (input_ == GateInput::kTokenSum) {
    Tensor per_token = reshape(scorer_(flat, mode), {B, t, d});
    // sum over tokens: [B, 1, t] x [B, t, d] with all-ones weights
    Tensor ones = Tensor::full({B, 1, t}, 1.0);
    return reshape(bmm(ones, per_token), {B, d});
  }
  Tensor scores = reshape(scorer_(flat, mode), {B, t});
  Tensor attn = reshape(softmax_lastdim(scores), {B, 1, t});
  return reshape(bmm(attn, x), {B, d});
}

void GateHead::enumerate(const std::string& prefix, StateList& out) {
  scorer_.enumerate(prefix + ".token_attention", out);
  gate_.enumerate(prefix + ".gate", out);
}

// ---------------------------------------------------------------------------

ImmoeLayer::ImmoeLayer(const ImmoeOptions& opts, Rng& rng) : opts_(opts) {
  if (opts.experts == 0 || opts.tasks == 0)
    throw std::invalid_argument("immoe: need at least one expert and one task");
  for (std::size_t i = 0; i < opts.experts; ++i) experts_.emplace_back(opts.d, rng);
  for (std::size_t k = 0; k < opts.tasks; ++k) heads_.emplace_back(opts.d, opts.experts, opts.input, rng);
}

GateHead& ImmoeLayer::head(std::size_t task) {
  if (task >= heads_.size())
    throw std::out_of_range("immoe: task " + std::to_string(task) + " but layer has " +
                            std::to_string(heads_.size()) + " task(s)");
  return heads_[task];
}

std::vector<Tensor> ImmoeLayer::expert_outputs(const Tensor& x) const {
  std::vector<Tensor> outs;
  outs.reserve(experts_.size());
  for (const auto& e : experts_) outs.push_back(e.forward(x));
  return outs;
}

Tensor ImmoeLayer::gate_weights(const Tensor& x, std::size_t task, GateMode mode, NormMode norm) {
  GateHead& h = head(task);
  Tensor logits = h.logits(h.aggregate(x, norm));
  return mode == GateMode::kSoftmax ? softmax_lastdim(logits) : logits;
}

Tensor ImmoeLayer::mix(const std::vector<Tensor>& experts, const Tensor& weights) {
  if (weights.rank() != 2 || weights.dim(1) != experts.size())
    throw DimensionError("immoe mix: weights " + to_string(weights.shape()) + " for " +
                         std::to_string(experts.size()) + " experts");
  Tensor out;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    Tensor term = scale_batch(experts[i], slice(weights, 1, i, 1));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

Tensor ImmoeLayer::forward_with(const Tensor& x, std::size_t task, GateMode mode, NormMode norm) {
  Tensor w = gate_weights(x, task, mode, norm);
  return mix(expert_outputs(x), w);
}

Tensor ImmoeLayer::mmoe_forward(const Tensor& x, std::size_t task, NormMode norm) {
  return forward_with(x, task, GateMode::kSoftmax, norm);
}

Tensor ImmoeLayer::immoe_forward(const Tensor& x, std::size_t task, NormMode norm) {
  return forward_with(x, task, GateMode::kUnconstrained, norm);
}

Tensor ImmoeLayer::forward(const Tensor& x, std::size_t task, NormMode norm) {
  return forward_with(x, task, opts_.mode, norm);
}

std::vector<Tensor> ImmoeLayer::forward_all(const Tensor& x, NormMode norm) {
  auto experts = expert_outputs(x);
  std::vector<Tensor> outs;
  for (std::size_t k = 0; k < heads_.size(); ++k)
    outs.push_back(mix(experts, gate_weights(x, k, opts_.mode, norm)));
  return outs;
}

void ImmoeLayer::enumerate(const std::string& prefix, StateList& out) {
  for (std::size_t i = 0; i < experts_.size(); ++i)
    experts_[i].enumerate(prefix + ".expert" + std::to_string(i), out);
  for (std::size_t k = 0; k < heads_.size(); ++k)
    heads_[k].enumerate(prefix + ".head" + std::to_string(k), out);
}

Tensor fuse(const Tensor& a, const Tensor& b, ImmoeLayer& layer, NormMode norm) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw DimensionError("fuse: incompatible sequences " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  return layer.forward(concat({a, b}, 1), 0, norm);
}

}  // namespace bmr
