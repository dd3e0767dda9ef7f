#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "bmr/model.hpp"
#include "bmr/optim.hpp"
#include "gradcheck.hpp"
#include "tiny.hpp"

using namespace bmr;
using bmr::testing::any_nonzero_grad;
using bmr::testing::predictor_params;
using bmr::testing::tiny_batch;
using bmr::testing::tiny_config;

namespace {

std::set<std::string> state_names(BmrModel& m) {
  std::set<std::string> out;
  for (const auto& e : m.state()) out.insert(e.name);
  return out;
}

bool has_prefix(const std::set<std::string>& names, const std::string& prefix) {
  for (const auto& n : names)
    if (n.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST(Bce, KnownValues) {
  EXPECT_NEAR(bce(0.0, 0.5), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(1.0, 0.5), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(1.0, 0.9), -std::log(0.9), 1e-12);
  EXPECT_NEAR(bce(0.0, 0.9), -std::log(0.1), 1e-12);
  EXPECT_GE(bce(1.0, 1.0), 0.0);
  // clamped at 1e-7 so saturated predictions stay finite
  EXPECT_NEAR(bce(1.0, 0.0), -std::log(1e-7), 1e-9);
}

TEST(Bce, TensorFormIsMeanOfScalarForm) {
  Tensor p = Tensor::from({3, 1}, {0.2, 0.7, 0.5});
  std::vector<double> y{0.0, 1.0, 1.0};
  const double expected = (bce(0.0, 0.2) + bce(1.0, 0.7) + bce(1.0, 0.5)) / 3.0;
  EXPECT_NEAR(bce(p, y).item(), expected, 1e-12);
  EXPECT_THROW(bce(p, std::vector<double>{1.0}), DimensionError);
}

TEST(Config, LossWeightDefaults) {
  BmrConfig c;
  EXPECT_EQ(c.alpha, 1.0);
  EXPECT_EQ(c.beta, 4.0);
  EXPECT_EQ(c.n_experts, 3u);
  EXPECT_EQ(c.gate_mode, GateMode::kUnconstrained);
  EXPECT_TRUE(c.problems().empty());
}

TEST(Config, EveryProblemIsListed) {
  BmrConfig c;
  c.encoder.d = 0;
  c.alpha = -1.0;
  c.threshold = 1.5;
  c.views = {false, true, false, true};
  auto p = c.problems();
  EXPECT_EQ(p.size(), 4u);
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.problems().size(), 4u);
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
}

TEST(ViewSet, ParseAndLabel) {
  EXPECT_EQ(ViewSet::parse("ip,IS+t m").label(), "IP+IS+T+M");
  EXPECT_EQ(ViewSet::parse("T").label(), "T");
  EXPECT_THROW(ViewSet::parse("IP,X"), ConfigError);
  EXPECT_TRUE(ViewSet::parse("").empty());
}

TEST(Model, ScoresAndShapes) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 1);
  auto b = tiny_batch(cfg, 4, 2);
  auto o = m.forward(b, NormMode::kTrain);
  for (const Tensor* s : {&o.s_ip, &o.s_is, &o.s_t, &o.s_m, &o.y_hat}) {
    ASSERT_TRUE(s->defined());
    EXPECT_EQ(s->shape(), (Shape{4, 1}));
    for (double v : s->data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
  EXPECT_EQ(o.bootstrap_tokens, 5u);
  EXPECT_EQ(o.e_f.shape(), (Shape{4, 5, 8}));
  EXPECT_EQ(o.w_x.shape(), (Shape{4, 8}));
}

TEST(Model, DisabledViewsLeaveOutputsUndefined) {
  auto cfg = tiny_config();
  cfg.views = ViewSet::parse("IP+T");
  BmrModel m(cfg, 1);
  auto o = m.forward(tiny_batch(cfg, 3, 2), NormMode::kTrain);
  EXPECT_FALSE(o.s_is.defined());
  EXPECT_FALSE(o.s_m.defined());
  EXPECT_FALSE(o.w_x.defined());
  EXPECT_EQ(o.bootstrap_tokens, 2u);
  EXPECT_THROW(m.consistency_score(tiny_batch(cfg, 3, 2), NormMode::kEval), ConfigError);
}

TEST(Model, SameSeedSameModel) {
  auto cfg = tiny_config();
  BmrModel a(cfg, 5), b(cfg, 5), c(cfg, 6);
  auto batch = tiny_batch(cfg, 3, 1);
  auto ya = a.forward(batch, NormMode::kEval).y_hat;
  auto yb = b.forward(batch, NormMode::kEval).y_hat;
  auto yc = c.forward(batch, NormMode::kEval).y_hat;
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ya.data()[i], yb.data()[i]);
  EXPECT_NE(ya.data()[0], yc.data()[0]);
}

TEST(Model, BootstrapTokenOrder) {
  // tokens are stacked as [w_is, w_ip, w_m, w_x, w_t]
  auto cfg = tiny_config();
  BmrModel m(cfg, 3);
  auto b = tiny_batch(cfg, 2, 4);
  auto o = m.forward(b, NormMode::kEval);
  auto e_x = m.irrelevance_token().data();
  // w_x = F_m(S_m) * e_x, so it is parallel to e_x
  for (std::size_t s = 0; s < 2; ++s) {
    const double ratio = o.w_x.data()[s * 8] / e_x[0];
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(o.w_x.data()[s * 8 + k], ratio * e_x[k], 1e-12);
    EXPECT_GT(ratio, 0.0);
    EXPECT_LT(ratio, 1.0);
  }
}

TEST(Model, ComplementIrrelevance) {
  auto cfg = tiny_config();
  BmrModel plain(cfg, 3);
  cfg.complement_irrelevance = true;
  BmrModel comp(cfg, 3);
  auto b = tiny_batch(cfg, 2, 4);
  auto a = plain.forward(b, NormMode::kEval);
  auto c = comp.forward(b, NormMode::kEval);
  const auto e_x = plain.irrelevance_token().data();
  for (std::size_t s = 0; s < 2; ++s) {
    const double r1 = a.w_x.data()[s * 8] / e_x[0], r2 = c.w_x.data()[s * 8] / e_x[0];
    EXPECT_NEAR(r1 + r2, 1.0, 1e-12);
  }
}

TEST(Model, TotalLossIsFinalPlusAlphaCoarse) {
  auto cfg = tiny_config();
  cfg.alpha = 0.5;
  BmrModel m(cfg, 7);
  auto b = tiny_batch(cfg, 4, 8);
  auto o = m.forward(b, NormMode::kTrain);
  auto parts = m.total_loss(o, b.labels);
  const double coarse = (bce(o.s_is, b.labels).item() + bce(o.s_ip, b.labels).item() + bce(o.s_t, b.labels).item()) / 3;
  EXPECT_NEAR(parts.final_loss, bce(o.y_hat, b.labels).item(), 1e-12);
  EXPECT_NEAR(parts.coarse_loss, coarse, 1e-12);
  EXPECT_NEAR(parts.total.item(), parts.final_loss + 0.5 * coarse, 1e-12);

  cfg.coarse_loss = false;
  BmrModel no_coarse(cfg, 7);
  auto o2 = no_coarse.forward(b, NormMode::kTrain);
  auto p2 = no_coarse.total_loss(o2, b.labels);
  EXPECT_NEAR(p2.total.item(), p2.final_loss, 1e-12);
}

TEST(Model, ConsistencyLossIsBetaTimesBce) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 9);
  Tensor s = Tensor::from({2, 1}, {0.3, 0.8});
  std::vector<double> y{0.0, 1.0};
  EXPECT_NEAR(m.consistency_loss(s, y).item(), 4.0 * (bce(0.0, 0.3) + bce(1.0, 0.8)) / 2.0, 1e-12);
}

TEST(Model, StopGradientKeepsPredictorsOutOfFinalLoss) {
  auto cfg = tiny_config();
  cfg.coarse_loss = false;
  auto b = tiny_batch(cfg, 4, 10);
  for (bool stop : {true, false}) {
    cfg.stop_grad_reweigh = stop;
    BmrModel m(cfg, 11);
    auto o = m.forward(b, NormMode::kTrain);
    backward(m.total_loss(o, b.labels).total);
    bool nonzero = false;
    for (View v : {View::kPattern, View::kSemantics, View::kText}) {
      const bool nz = any_nonzero_grad(predictor_params(m, v));
      if (stop) EXPECT_FALSE(nz) << "view " << static_cast<int>(v);
      nonzero = nonzero || nz;
    }
    if (!stop) EXPECT_TRUE(nonzero);
  }
}

TEST(Model, CoarseLossTrainsPredictorsDespiteStopGradient) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 12);
  auto b = tiny_batch(cfg, 4, 13);
  auto o = m.forward(b, NormMode::kTrain);
  backward(m.total_loss(o, b.labels).total);
  for (View v : {View::kPattern, View::kSemantics, View::kText}) EXPECT_TRUE(any_nonzero_grad(predictor_params(m, v)));
}

TEST(Model, ConsistencyLossReachesFusion) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 14);
  auto b = tiny_batch(cfg, 4, 15);
  auto s = m.consistency_score(b, NormMode::kTrain);
  backward(m.consistency_loss(s, b.labels));
  StateList st;
  m.fusion_layer().enumerate("f", st);
  EXPECT_TRUE(any_nonzero_grad(trainable(st)));
  EXPECT_TRUE(any_nonzero_grad(predictor_params(m, View::kMultimodal)));
  // the final classifier is not on this path
  EXPECT_FALSE(any_nonzero_grad(predictor_params(m, View::kPattern)));
}

TEST(Model, EndToEndGradientCheck) {
  // stop_grad_reweigh is off: with it on, the reweighing path reads predictor
  // parameters as constants and finite differences disagree by construction.
  auto cfg = tiny_config();
  cfg.stop_grad_reweigh = false;
  cfg.encoder.frozen_semantics = false;
  cfg.encoder.frozen_text = false;
  BmrModel m(cfg, 21);
  auto b = tiny_batch(cfg, 4, 22);
  auto pairs = tiny_batch(cfg, 4, 23);
  auto loss = [&] {
    auto o = m.forward(b, NormMode::kTrain);
    auto s = m.consistency_score(pairs, NormMode::kTrain);
    return add(m.total_loss(o, b.labels).total, m.consistency_loss(s, pairs.labels));
  };
  std::vector<std::string> names;
  for (const auto& e : m.state())
    if (e.kind == StateEntry::Kind::kParam) names.push_back(e.name);
  const auto t0 = std::chrono::steady_clock::now();
  auto r = bmr::testing::check_gradients(m.parameters(), loss, 1e-3, 1e-5, names);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GT(r.checked, 1000u);
  EXPECT_EQ(r.failed, 0u) << r.worst;
  EXPECT_LT(secs, 60.0);
}

TEST(Model, PostStepRestoresFilterConstraint) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 30);
  auto b = tiny_batch(cfg, 4, 31);
  auto params = m.parameters();
  AdamState adam;
  auto o = m.forward(b, NormMode::kTrain);
  backward(m.total_loss(o, b.labels).total);
  adam_step(params, adam, 0.05);
  m.post_step();
  EXPECT_DOUBLE_EQ(m.pattern_encoder().filter().kernel.data()[4], -1.0);
  EXPECT_NEAR(m.pattern_encoder().filter().off_centre_sum(), 1.0, 1e-12);
}

TEST(Model, MemorisesTinyBatch) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 40);
  auto b = tiny_batch(cfg, 6, 41);
  auto params = m.parameters();
  AdamState adam;
  double last = 1.0;
  for (int step = 0; step < 300; ++step) {
    clear_grads(params);
    auto o = m.forward(b, NormMode::kTrain);
    auto loss = m.total_loss(o, b.labels);
    last = loss.final_loss;
    backward(loss.total);
    adam_step(params, adam, 1e-2);
    m.post_step();
  }
  EXPECT_LT(last, 0.05);
}

TEST(Model, ReweighCurveOfZeroedFunctionIsHalf) {
  auto cfg = tiny_config();
  BmrModel m(cfg, 50);
  // zero the last layer of F_t: sigmoid(0) everywhere
  for (auto& e : m.state())
    if (e.name.rfind("reweigh_t.fc2", 0) == 0)
      std::fill(e.tensor.mutable_data().begin(), e.tensor.mutable_data().end(), 0.0);
  std::vector<double> s{0.0, 0.25, 1.0};
  for (double w : m.reweigh_curve(View::kText, s)) EXPECT_EQ(w, 0.5);
}

TEST(Model, AblationSwitchesChangeState) {
  auto full_cfg = tiny_config();
  BmrModel full(full_cfg, 1);
  auto full_names = state_names(full);
  EXPECT_TRUE(has_prefix(full_names, "reweigh_ip"));
  EXPECT_TRUE(has_prefix(full_names, "refine_is.head1"));
  EXPECT_TRUE(has_prefix(full_names, "fusion"));

  auto c = tiny_config();
  c.reweigh_mode = ReweighMode::kOff;
  BmrModel off(c, 1);
  EXPECT_FALSE(has_prefix(state_names(off), "reweigh_"));

  c = tiny_config();
  c.sm_reweighs_multiview = true;
  BmrModel sm(c, 1);
  auto sm_names = state_names(sm);
  EXPECT_FALSE(has_prefix(sm_names, "reweigh_ip"));
  EXPECT_TRUE(has_prefix(sm_names, "reweigh_m"));

  c = tiny_config();
  c.views = ViewSet::parse("IP+IS+T");
  BmrModel no_m(c, 1);
  auto nm = state_names(no_m);
  EXPECT_FALSE(has_prefix(nm, "fusion"));
  EXPECT_FALSE(has_prefix(nm, "irrelevance_token"));

  c = tiny_config();
  c.refine_mode = RefineMode::kSeparateBlocks;
  BmrModel blocks(c, 1);
  auto bn = state_names(blocks);
  EXPECT_TRUE(has_prefix(bn, "refine_is.block1"));
  EXPECT_FALSE(has_prefix(bn, "refine_is.head"));
}

TEST(Model, SoftmaxGateAblationMatchesMmoe) {
  auto c = tiny_config();
  c.gate_mode = GateMode::kSoftmax;
  BmrModel m(c, 2);
  auto x = tiny_batch(c, 3, 3);
  EXPECT_EQ(m.fusion_layer().options().mode, GateMode::kSoftmax);
  EXPECT_EQ(m.bootstrap_layer().options().mode, GateMode::kSoftmax);
  auto o = m.forward(x, NormMode::kEval);
  for (double v : o.y_hat.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Model, ConfidenceReweighing) {
  auto c = tiny_config();
  c.reweigh_mode = ReweighMode::kConfidence;
  BmrModel m(c, 2);
  Tensor s = Tensor::from({3, 1}, {0.5, 0.9, 0.0});
  auto f = m.reweigh_factor(s, View::kText, NormMode::kEval);
  EXPECT_NEAR(f.data()[0], 0.0, 1e-12);
  EXPECT_NEAR(f.data()[1], 0.8, 1e-12);
  EXPECT_NEAR(f.data()[2], 1.0, 1e-12);
}

TEST(Model, PredictFakeThreshold) {
  EXPECT_TRUE(predict_fake(0.5, 0.5));
  EXPECT_FALSE(predict_fake(0.4999, 0.5));
}
