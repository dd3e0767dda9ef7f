#include "bmr/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace bmr {

namespace {

constexpr double kBceEps = 1e-7;

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : "; ") + x;
  return out;
}

Tensor first_token(const Tensor& seq) {
  return reshape(slice(seq, 1, 0, 1), {seq.dim(0), seq.dim(2)});
}

}  // namespace

// ---------------------------------------------------------------------------

bool ViewSet::has(View v) const {
  switch (v) {
    case View::kPattern: return pattern;
    case View::kSemantics: return semantics;
    case View::kText: return text;
    case View::kMultimodal: return multimodal;
  }
  return false;
}

std::string ViewSet::label() const {
  std::vector<std::string> parts;
  if (pattern) parts.emplace_back("IP");
  if (semantics) parts.emplace_back("IS");
  if (text) parts.emplace_back("T");
  if (multimodal) parts.emplace_back("M");
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
  return out;
}

ViewSet ViewSet::parse(const std::string& spec) {
  ViewSet v{false, false, false, false};
  std::string tok;
  auto flush = [&] {
    if (tok.empty()) return;
    std::string up;
    for (char c : tok) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "IP") v.pattern = true;
    else if (up == "IS") v.semantics = true;
    else if (up == "T") v.text = true;
    else if (up == "M") v.multimodal = true;
    else throw ConfigError({"views: unknown view '" + tok + "' (expected IP, IS, T, M)"});
    tok.clear();
  };
  for (char c : spec) {
    if (c == ',' || c == '+' || std::isspace(static_cast<unsigned char>(c))) flush();
    else tok += c;
  }
  flush();
  return v;
}

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument("invalid configuration: " + join(problems)), problems_(std::move(problems)) {}

std::vector<std::string> BmrConfig::problems() const {
  std::vector<std::string> p;
  const auto& e = encoder;
  if (e.d == 0) p.emplace_back("d: must be >= 1");
  if (e.vocab <= static_cast<std::size_t>(token::kFirstWord))
    p.emplace_back("vocab: must exceed the " + std::to_string(token::kFirstWord) + " reserved ids");
  if (e.max_len == 0) p.emplace_back("max_len: must be >= 1");
  if (e.patch == 0 || e.image_rows % std::max<std::size_t>(e.patch, 1) != 0 ||
      e.image_cols % std::max<std::size_t>(e.patch, 1) != 0)
    p.emplace_back("patch: must divide image_rows and image_cols");
  if (e.image_rows < 3 || e.image_cols < 3) p.emplace_back("image_rows/image_cols: must be >= 3 (3x3 filter)");
  if (n_experts == 0) p.emplace_back("n_experts: must be >= 1");
  if (views.empty()) p.emplace_back("views: must not be empty");
  if (views.multimodal && !(views.semantics && views.text))
    p.emplace_back("views: M requires both IS and T");
  if (sm_reweighs_multiview && !views.multimodal)
    p.emplace_back("sm_reweighs_multiview: requires view M");
  if (!(alpha >= 0.0)) p.emplace_back("alpha: must be >= 0");
  if (!(beta >= 0.0)) p.emplace_back("beta: must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) p.emplace_back("threshold: must lie in (0, 1)");
  if (reweigh_hidden == 0) p.emplace_back("reweigh_hidden: must be >= 1");
  return p;
}

void BmrConfig::validate() const {
  if (auto p = problems(); !p.empty()) throw ConfigError(std::move(p));
}

CleanRules BmrConfig::clean_rules() const {
  return {min_image_side, min_words, encoder.image_rows, encoder.image_cols};
}

// ---------------------------------------------------------------------------

Tensor bce(const Tensor& p, std::span<const double> y) {
  if (y.size() != p.numel())
    throw DimensionError("bce: " + std::to_string(y.size()) + " targets for prediction " +
                         to_string(p.shape()));
  Tensor target = Tensor::from(p.shape(), std::vector<double>(y.begin(), y.end()));
  Tensor complement = Tensor::from(p.shape(), [&] {
    std::vector<double> c(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) c[i] = 1.0 - y[i];
    return c;
  }());
  Tensor pc = clamp(p, kBceEps, 1.0 - kBceEps);
  Tensor ll = add(mul(target, log(pc)), mul(complement, log(add_scalar(neg(pc), 1.0))));
  return neg(mean(ll));
}

double bce(double y, double p) {
  p = std::clamp(p, kBceEps, 1.0 - kBceEps);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// ---------------------------------------------------------------------------

BmrModel::BmrModel(const BmrConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto& e = cfg_.encoder;
  const std::size_t d = e.d;
  pattern_ = PatternEncoder(e, rng);
  semantics_ = SemanticsEncoder(e, rng);
  text_ = TextEncoder(e, rng);
  ImmoeOptions refine_opts{d, cfg_.n_experts, 2, cfg_.gate_mode, cfg_.gate_input};
  refine_is_ = ImmoeLayer(refine_opts, rng);
  refine_t_ = ImmoeLayer(refine_opts, rng);
  blocks_is_ = {ExpertBlock(d, rng), ExpertBlock(d, rng)};
  blocks_t_ = {ExpertBlock(d, rng), ExpertBlock(d, rng)};
  ImmoeOptions single_opts{d, cfg_.n_experts, 1, cfg_.gate_mode, cfg_.gate_input};
  fusion_ = ImmoeLayer(single_opts, rng);
  bootstrap_ = ImmoeLayer(single_opts, rng);
  pred_ip_ = Mlp(d, d, 1, rng);
  pred_is_ = Mlp(d, d, 1, rng);
  pred_t_ = Mlp(d, d, 1, rng);
  pred_m_ = Mlp(d, d, 1, rng);
  const std::size_t h = cfg_.reweigh_hidden;
  f_ip_ = Mlp(1, h, 1, rng);
  f_is_ = Mlp(1, h, 1, rng);
  f_t_ = Mlp(1, h, 1, rng);
  f_m_ = Mlp(1, h, 1, rng);
  std::normal_distribution<double> small(0.0, 0.02);
  std::vector<double> ex(d);
  for (auto& x : ex) x = small(rng);
  e_x_ = Tensor::from({d}, std::move(ex), true);
  classifier_ = Mlp(d, d, 1, rng);
}

Mlp& BmrModel::predictor(View v) {
  switch (v) {
    case View::kPattern: return pred_ip_;
    case View::kSemantics: return pred_is_;
    case View::kText: return pred_t_;
    case View::kMultimodal: return pred_m_;
  }
  throw std::logic_error("unknown view");
}

Mlp& BmrModel::reweigher(View v) {
  switch (v) {
    case View::kPattern: return f_ip_;
    case View::kSemantics: return f_is_;
    case View::kText: return f_t_;
    case View::kMultimodal: return f_m_;
  }
  throw std::logic_error("unknown view");
}

BmrModel::Refined BmrModel::refine(const Tensor& tokens, View view, NormMode mode, bool need_fusion) {
  if (cfg_.refine_mode == RefineMode::kSeparateBlocks) {
    auto& blocks = view == View::kSemantics ? blocks_is_ : blocks_t_;
    Refined r{blocks[0].forward(tokens), {}};
    if (need_fusion) r.for_fusion = blocks[1].forward(tokens);
    return r;
  }
  ImmoeLayer& layer = view == View::kSemantics ? refine_is_ : refine_t_;
  if (!need_fusion) return {layer.forward(tokens, 0, mode), {}};
  auto outs = layer.forward_all(tokens, mode);
  return {outs[0], outs[1]};
}

Tensor BmrModel::fused_first_token(const Tensor& is_for_fusion, const Tensor& t_for_fusion,
                                   NormMode mode) {
  return first_token(fuse(is_for_fusion, t_for_fusion, fusion_, mode));
}

Tensor BmrModel::single_view_score(const Tensor& e, View view, NormMode mode, Tensor* hidden) {
  const bool stop = cfg_.stop_grad_reweigh && view != View::kMultimodal;
  auto out = predictor(view).forward(stop ? stop_grad(e) : e, mode);
  if (hidden) *hidden = out.hidden;
  return sigmoid(out.out);
}

Tensor BmrModel::reweigh_factor(const Tensor& score, View view, NormMode mode) {
  Tensor s = cfg_.stop_grad_reweigh ? stop_grad(score) : score;
  switch (cfg_.reweigh_mode) {
    case ReweighMode::kLearned: return sigmoid(reweigher(view)(s, mode));
    case ReweighMode::kConfidence: return scale(abs(add_scalar(s, -0.5)), 2.0);
    case ReweighMode::kOff: return Tensor::full(score.shape(), 1.0);
  }
  throw std::logic_error("unknown reweigh mode");
}

Tensor BmrModel::reweigh(const Tensor& e, const Tensor& score, View view, NormMode mode) {
  if (cfg_.reweigh_mode == ReweighMode::kOff) return e;
  return scale_batch(e, reweigh_factor(score, view, mode));
}

Tensor BmrModel::reweigh_irrelevance(const Tensor& s_m, NormMode mode) {
  Tensor factor = reweigh_factor(s_m, View::kMultimodal, mode);
  if (cfg_.complement_irrelevance && cfg_.reweigh_mode != ReweighMode::kOff)
    factor = add_scalar(neg(factor), 1.0);
  return matmul(reshape(factor, {s_m.dim(0), 1}), reshape(e_x_, {1, e_x_.numel()}));
}

ViewOutputs BmrModel::forward(const Batch& batch, NormMode mode) {
  ViewOutputs o;
  const ViewSet& v = cfg_.views;
  const bool need_fusion = v.multimodal;

  Tensor e_ip, e_is, e_t, is_fuse, t_fuse, e_m;
  if (v.pattern) e_ip = pattern_.forward(image_tensor(batch), mode);
  if (v.semantics) {
    auto r = refine(semantics_.forward(batch), View::kSemantics, mode, need_fusion);
    e_is = first_token(r.first);
    is_fuse = r.for_fusion;
  }
  if (v.text) {
    auto r = refine(text_.forward(batch), View::kText, mode, need_fusion);
    e_t = first_token(r.first);
    t_fuse = r.for_fusion;
  }
  if (v.multimodal) {
    e_m = fused_first_token(is_fuse, t_fuse, mode);
    o.s_m = single_view_score(e_m, View::kMultimodal, mode, &o.hidden_m);
  }

  Tensor sm_factor;
  if (cfg_.sm_reweighs_multiview && cfg_.reweigh_mode != ReweighMode::kOff)
    sm_factor = reweigh_factor(o.s_m, View::kMultimodal, mode);
  auto view_weighing = [&](const Tensor& e, const Tensor& s, View view) {
    return sm_factor.defined() ? scale_batch(e, sm_factor) : reweigh(e, s, view, mode);
  };

  if (v.pattern) {
    o.s_ip = single_view_score(e_ip, View::kPattern, mode, &o.hidden_ip);
    o.w_ip = view_weighing(e_ip, o.s_ip, View::kPattern);
  }
  if (v.semantics) {
    o.s_is = single_view_score(e_is, View::kSemantics, mode, &o.hidden_is);
    o.w_is = view_weighing(e_is, o.s_is, View::kSemantics);
  }
  if (v.text) {
    o.s_t = single_view_score(e_t, View::kText, mode, &o.hidden_t);
    o.w_t = view_weighing(e_t, o.s_t, View::kText);
  }
  if (v.multimodal) {
    o.w_m = e_m;
    o.w_x = reweigh_irrelevance(o.s_m, mode);
  }

  std::vector<Tensor> tokens;
  for (const Tensor* t : {&o.w_is, &o.w_ip, &o.w_m, &o.w_x, &o.w_t})
    if (t->defined()) tokens.push_back(*t);
  o.bootstrap_tokens = tokens.size();
  o.e_f = bootstrap_.forward(stack(tokens, 1), 0, mode);
  auto head = classifier_.forward(first_token(o.e_f), mode);
  o.hidden_final = head.hidden;
  o.y_hat = sigmoid(head.out);
  return o;
}

Tensor BmrModel::consistency_score(const Batch& batch, NormMode mode, Tensor* hidden) {
  if (!cfg_.views.multimodal) throw ConfigError({"views: consistency scoring requires view M"});
  auto is = refine(semantics_.forward(batch), View::kSemantics, mode, true);
  auto t = refine(text_.forward(batch), View::kText, mode, true);
  Tensor e_m = fused_first_token(is.for_fusion, t.for_fusion, mode);
  return single_view_score(e_m, View::kMultimodal, mode, hidden);
}

LossParts BmrModel::total_loss(const ViewOutputs& out, std::span<const double> labels) const {
  LossParts parts;
  Tensor final_loss = bce(out.y_hat, labels);
  parts.final_loss = final_loss.item();
  parts.total = final_loss;
  Tensor coarse;
  std::size_t count = 0;
  for (const Tensor* s : {&out.s_is, &out.s_ip, &out.s_t}) {
    if (!s->defined()) continue;
    Tensor l = bce(*s, labels);
    coarse = coarse.defined() ? add(coarse, l) : l;
    ++count;
  }
  if (count > 0) {
    coarse = scale(coarse, 1.0 / static_cast<double>(count));
    parts.coarse_loss = coarse.item();
    if (cfg_.coarse_loss) parts.total = add(parts.total, scale(coarse, cfg_.alpha));
  }
  return parts;
}

Tensor BmrModel::consistency_loss(const Tensor& s_m, std::span<const double> y_prime) const {
  return scale(bce(s_m, y_prime), cfg_.beta);
}

std::vector<double> BmrModel::reweigh_curve(View view, std::span<const double> scores) {
  NoGradGuard no_grad;
  Tensor s = Tensor::from({scores.size(), 1}, std::vector<double>(scores.begin(), scores.end()));
  Tensor w = sigmoid(reweigher(view)(s, NormMode::kEval));
  return {w.data().begin(), w.data().end()};
}

void BmrModel::post_step() { pattern_.filter().project(); }

StateList BmrModel::state() {
  StateList s;
  const ViewSet& v = cfg_.views;
  const bool learned = cfg_.reweigh_mode == ReweighMode::kLearned;
  const bool own_f = learned && !cfg_.sm_reweighs_multiview;
  auto refine_state = [&](ImmoeLayer& layer, std::array<ExpertBlock, 2>& blocks, const std::string& name) {
    if (cfg_.refine_mode == RefineMode::kImmoe) {
      layer.enumerate(name, s);
    } else {
      blocks[0].enumerate(name + ".block0", s);
      if (v.multimodal) blocks[1].enumerate(name + ".block1", s);
    }
  };
  if (v.pattern) {
    pattern_.enumerate("pattern", s);
    pred_ip_.enumerate("predictor_ip", s);
    if (own_f) f_ip_.enumerate("reweigh_ip", s);
  }
  if (v.semantics) {
    semantics_.enumerate("semantics", s);
    refine_state(refine_is_, blocks_is_, "refine_is");
    pred_is_.enumerate("predictor_is", s);
    if (own_f) f_is_.enumerate("reweigh_is", s);
  }
  if (v.text) {
    text_.enumerate("text", s);
    refine_state(refine_t_, blocks_t_, "refine_t");
    pred_t_.enumerate("predictor_t", s);
    if (own_f) f_t_.enumerate("reweigh_t", s);
  }
  if (v.multimodal) {
    fusion_.enumerate("fusion", s);
    pred_m_.enumerate("predictor_m", s);
    if (learned) f_m_.enumerate("reweigh_m", s);
    s.push_back({"irrelevance_token", StateEntry::Kind::kParam, e_x_, nullptr});
  }
  bootstrap_.enumerate("bootstrap", s);
  classifier_.enumerate("classifier", s);
  return s;
}

}  // namespace bmr
