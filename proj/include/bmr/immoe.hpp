#pragma once

#include <vector>

#include "bmr/nn.hpp"

// Multi-gate mixture of experts over token sequences.
//
// Experts are single-layer pre-norm transformer blocks shared by every task of
// a layer. Each task owns a gate head: a token-attention MLP that collapses the
// sequence [B, t, d] to one vector per sample, and a linear gate d -> n. The
// baseline layer squashes the gate logits with a softmax; the improved layer
// uses them as they are, so expert weights may be negative or not sum to one.
namespace bmr {

enum class GateMode { kSoftmax, kUnconstrained };

/// How a gate head summarises its token sequence.
///  kTokenAttention: softmax over per-token scores, weighted sum of tokens.
///  kTokenSum:       plain sum over tokens of a per-token d -> d MLP.
enum class GateInput { kTokenAttention, kTokenSum };

class ExpertBlock {
 public:
  ExpertBlock() = default;
  ExpertBlock(std::size_t d, Rng& rng);

  /// [B, t, d] -> [B, t, d]
  Tensor forward(const Tensor& x) const;
  void enumerate(const std::string& prefix, StateList& out) const;

 private:
  std::size_t d_ = 0;
  LayerNorm ln_attn_;
  Linear query_, key_, value_, out_;
  LayerNorm ln_ff_;
  Linear ff_in_, ff_out_;
};

class GateHead {
 public:
  GateHead() = default;
  GateHead(std::size_t d, std::size_t n_experts, GateInput input, Rng& rng);

  /// [B, t, d] -> [B, d]
  Tensor aggregate(const Tensor& x, NormMode mode);
  /// [B, d] -> [B, n] raw gate outputs.
  Tensor logits(const Tensor& aggregated) const { return gate_(aggregated); }

  Linear& gate() { return gate_; }
  void enumerate(const std::string& prefix, StateList& out);

 private:
  GateInput input_ = GateInput::kTokenAttention;
  Mlp scorer_;  // d -> d -> 1 (attention) or d -> d -> d (sum)
  Linear gate_;
};

struct ImmoeOptions {
  std::size_t d = 32;
  std::size_t experts = 3;
  std::size_t tasks = 1;
  GateMode mode = GateMode::kUnconstrained;
  GateInput input = GateInput::kTokenAttention;
};

class ImmoeLayer {
 public:
  ImmoeLayer() = default;
  ImmoeLayer(const ImmoeOptions& opts, Rng& rng);

  /// Output of every expert on x, each [B, t, d].
  std::vector<Tensor> expert_outputs(const Tensor& x) const;

  /// Per-sample expert weights [B, n] for `task`, squashed according to `mode`.
  Tensor gate_weights(const Tensor& x, std::size_t task, GateMode mode, NormMode norm);

  /// sum_i weights[:, i] * experts[i]
  static Tensor mix(const std::vector<Tensor>& experts, const Tensor& weights);

  /// Baseline MMoE: softmax-normalised gates.
  Tensor mmoe_forward(const Tensor& x, std::size_t task, NormMode norm);
  /// Improved MMoE: unconstrained gates.
  Tensor immoe_forward(const Tensor& x, std::size_t task, NormMode norm);
  /// Uses the configured gate mode.
  Tensor forward(const Tensor& x, std::size_t task, NormMode norm);
  /// All tasks at once; experts are evaluated a single time.
  std::vector<Tensor> forward_all(const Tensor& x, NormMode norm);

  const ImmoeOptions& options() const { return opts_; }
  void set_mode(GateMode m) { opts_.mode = m; }
  GateHead& head(std::size_t task);
  void enumerate(const std::string& prefix, StateList& out);

 private:
  Tensor forward_with(const Tensor& x, std::size_t task, GateMode mode, NormMode norm);

  ImmoeOptions opts_;
  std::vector<ExpertBlock> experts_;
  std::vector<GateHead> heads_;
};

/// Concatenates two sequences along the token axis and runs task 0 of `layer`.
Tensor fuse(const Tensor& a, const Tensor& b, ImmoeLayer& layer, NormMode norm);

}  // namespace bmr
