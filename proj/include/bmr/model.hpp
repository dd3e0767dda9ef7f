#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bmr/encoders.hpp"
#include "bmr/immoe.hpp"
#include "bmr/nn.hpp"

namespace bmr {

/// Image pattern, image semantics, text, fused multimodal.
enum class View { kPattern, kSemantics, kText, kMultimodal };

struct ViewSet {
  bool pattern = true;
  bool semantics = true;
  bool text = true;
  bool multimodal = true;

  bool has(View v) const;
  bool empty() const { return !pattern && !semantics && !text && !multimodal; }
  /// "IP+IS+T+M" style label, in that order.
  std::string label() const;
  /// Parses "IP,IS,T,M" / "IP+IS+T" (case-insensitive); throws on unknown names.
  static ViewSet parse(const std::string& spec);
  static ViewSet all() { return {}; }
  bool operator==(const ViewSet&) const = default;
};

enum class ReweighMode { kLearned, kConfidence, kOff };
enum class RefineMode { kImmoe, kSeparateBlocks };

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct BmrConfig {
  EncoderConfig encoder;
  std::size_t n_experts = 3;
  ViewSet views;
  ReweighMode reweigh_mode = ReweighMode::kLearned;
  bool stop_grad_reweigh = true;
  bool coarse_loss = true;
  bool consistency_loss = true;
  bool sm_reweighs_multiview = false;
  /// w_x = (1 - sigmoid(F_m(S_m))) * e_x instead of sigmoid(F_m(S_m)) * e_x.
  bool complement_irrelevance = false;
  GateMode gate_mode = GateMode::kUnconstrained;
  GateInput gate_input = GateInput::kTokenAttention;
  RefineMode refine_mode = RefineMode::kImmoe;
  double alpha = 1.0;
  double beta = 4.0;
  double threshold = 0.5;
  std::size_t reweigh_hidden = 16;
  std::size_t min_image_side = 64;
  std::size_t min_words = 5;

  /// Every violated constraint, one message per field; empty when valid.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing problems().
  void validate() const;
  CleanRules clean_rules() const;
};

/// Intermediate results of one forward pass. Tensors for disabled views are
/// left undefined. Scores are [B, 1]; representations are [B, d].
struct ViewOutputs {
  Tensor s_ip, s_is, s_t, s_m;
  Tensor w_ip, w_is, w_t, w_m, w_x;
  Tensor e_f;     // [B, tokens, d]
  Tensor y_hat;   // [B, 1]
  // Penultimate (post-activation hidden) representations of each classifier.
  Tensor hidden_final, hidden_ip, hidden_is, hidden_t, hidden_m;
  std::size_t bootstrap_tokens = 0;
};

struct LossParts {
  Tensor total;
  double final_loss = 0.0;
  double coarse_loss = 0.0;
};

/// Mean binary cross-entropy -[y log p + (1-y) log(1-p)], p clamped to
/// [1e-7, 1 - 1e-7]. `y` holds one target per element of `p`.
Tensor bce(const Tensor& p, std::span<const double> y);
double bce(double y, double p);

class BmrModel {
 public:
  explicit BmrModel(const BmrConfig& cfg, std::uint64_t seed);

  const BmrConfig& config() const { return cfg_; }

  ViewOutputs forward(const Batch& batch, NormMode mode);
  /// Only the path to S_m (encoders, refinement, fusion, consistency predictor).
  /// Returns [B, 1]; `hidden` receives the predictor's penultimate layer.
  Tensor consistency_score(const Batch& batch, NormMode mode, Tensor* hidden = nullptr);

  /// sigmoid(MLP_view(e)); `hidden` receives the penultimate representation.
  Tensor single_view_score(const Tensor& e, View view, NormMode mode, Tensor* hidden = nullptr);
  /// Weight applied to a view representation, [B, 1] (S is [B, 1]).
  Tensor reweigh_factor(const Tensor& score, View view, NormMode mode);
  Tensor reweigh(const Tensor& e, const Tensor& score, View view, NormMode mode);
  /// w_x for a batch of consistency scores, [B, d].
  Tensor reweigh_irrelevance(const Tensor& s_m, NormMode mode);

  LossParts total_loss(const ViewOutputs& out, std::span<const double> labels) const;
  Tensor consistency_loss(const Tensor& s_m, std::span<const double> y_prime) const;

  /// sigmoid(F_view(s)) on a grid of scores, evaluated with running statistics.
  std::vector<double> reweigh_curve(View view, std::span<const double> scores);

  /// Restores the constrained-filter invariant; call after every optimiser step.
  void post_step();

  /// State of the modules this configuration actually uses.
  StateList state();
  std::vector<Tensor> parameters() { return trainable(state()); }

  Tensor& irrelevance_token() { return e_x_; }
  PatternEncoder& pattern_encoder() { return pattern_; }
  ImmoeLayer& fusion_layer() { return fusion_; }
  ImmoeLayer& bootstrap_layer() { return bootstrap_; }
  Mlp& predictor(View v);

 private:
  struct Refined {
    Tensor first;     // e^0, kept for single-view prediction
    Tensor for_fusion;  // e^1
  };
  Refined refine(const Tensor& tokens, View view, NormMode mode, bool need_fusion);
  Tensor fused_first_token(const Tensor& is_for_fusion, const Tensor& t_for_fusion, NormMode mode);
  Mlp& reweigher(View v);

  BmrConfig cfg_;
  PatternEncoder pattern_;
  SemanticsEncoder semantics_;
  TextEncoder text_;
  ImmoeLayer refine_is_, refine_t_;
  std::array<ExpertBlock, 2> blocks_is_, blocks_t_;  // separate-block refinement
  ImmoeLayer fusion_;
  ImmoeLayer bootstrap_;
  Mlp pred_ip_, pred_is_, pred_t_, pred_m_;
  Mlp f_ip_, f_is_, f_t_, f_m_;
  Tensor e_x_;
  Mlp classifier_;
};

/// Predictions at or above the threshold are fake.
inline bool predict_fake(double y_hat, double threshold) { return y_hat >= threshold; }

}  // namespace bmr
