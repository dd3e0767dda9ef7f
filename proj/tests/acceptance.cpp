// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "bmr/checkpoint.hpp"
#include "bmr/exports.hpp"
#include "bmr/metrics.hpp"
#include "bmr/pipeline.hpp"
#include "bmr/train.hpp"
#include "gradcheck.hpp"
#include "tiny.hpp"

using namespace bmr;
using bmr::testing::any_nonzero_grad;
using bmr::testing::predictor_params;
using bmr::testing::random_news;
using bmr::testing::tiny_batch;
using bmr::testing::tiny_config;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

// --- 1 ----------------------------------------------------------------------

Outcome gradient_integrity() {
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
  const auto t0 = Clock::now();
  auto r = bmr::testing::check_gradients(m.parameters(), loss, 1e-3, 1e-5, names);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = r.checked > 0 && r.failed == 0 && secs < 60.0;
  o.detail = std::to_string(r.checked - r.failed) + "/" + std::to_string(r.checked) +
             " parameter entries within 1e-3 (max rel " + fmt(r.max_rel_error, 3) + "), " + fmt(secs, 3) + " s";
  return o;
}

// --- 2 ----------------------------------------------------------------------

Outcome reduction_oracle() {
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(500 + trial);
    ImmoeLayer layer({8, 3, 2, GateMode::kUnconstrained, GateInput::kTokenAttention}, rng);
    std::mt19937_64 g(9000 + trial);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(3 * 5 * 8);
    for (auto& x : v) x = n(g);
    auto x = Tensor::from({3, 5, 8}, v);
    const std::size_t task = trial % 2;
    auto raw = layer.gate_weights(x, task, GateMode::kUnconstrained, NormMode::kEval);
    auto via_immoe = ImmoeLayer::mix(layer.expert_outputs(x), softmax_lastdim(raw));
    auto mmoe = layer.mmoe_forward(x, task, NormMode::kEval);
    for (std::size_t i = 0; i < mmoe.numel(); ++i)
      worst = std::max(worst, std::abs(via_immoe.data()[i] - mmoe.data()[i]));
  }
  return {worst <= 1e-9, "100 inputs, max |diff| " + fmt(worst, 3)};
}

// --- 3 ----------------------------------------------------------------------

Outcome stop_gradient_contract() {
  auto cfg = tiny_config();
  cfg.coarse_loss = false;
  auto b = tiny_batch(cfg, 4, 10);
  bool zero_when_stopped = true, nonzero_when_open = false;
  double largest_stopped = 0.0;
  for (bool stop : {true, false}) {
    cfg.stop_grad_reweigh = stop;
    BmrModel m(cfg, 11);
    auto o = m.forward(b, NormMode::kTrain);
    backward(m.total_loss(o, b.labels).total);
    for (View v : {View::kPattern, View::kSemantics, View::kText}) {
      auto ps = predictor_params(m, v);
      if (stop) {
        for (const auto& p : ps)
          if (p.has_grad())
            for (double g : p.grad()) largest_stopped = std::max(largest_stopped, std::abs(g));
        zero_when_stopped = zero_when_stopped && !any_nonzero_grad(ps);
      } else {
        nonzero_when_open = nonzero_when_open || any_nonzero_grad(ps);
      }
    }
  }
  return {zero_when_stopped && nonzero_when_open,
          "stopped: max |grad| " + fmt(largest_stopped) + "; open: " +
              (nonzero_when_open ? "non-zero grads" : "all zero")};
}

// --- 4 ----------------------------------------------------------------------

Outcome consistency_dataset_law() {
  std::mt19937_64 rng(4);
  const auto cfg = tiny_config();
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 60)(rng);
    const std::size_t k = 4 * std::uniform_int_distribution<std::size_t>(0, n / 2)(rng);
    auto real = random_news(n, cfg, rng());
    auto set = build_consistency_set(real, k, rng());
    std::size_t pos = 0;
    bool ok = set.size() == k;
    for (const auto& p : set) {
      pos += p.matched;
      if (!p.matched && p.image_source == p.text_source) ok = false;
      if (p.matched && p.image_source != p.text_source) ok = false;
    }
    ok = ok && pos * 2 == k;
    bad += !ok;
  }
  return {bad == 0, std::to_string(1000 - bad) + "/1000 draws sized k, balanced, no self-paired negatives"};
}

// --- 5 ----------------------------------------------------------------------

Outcome threshold_rule() {
  const double a = derive_threshold(7974, 2036), b = derive_threshold(3749, 3783);
  return {a == 0.80 && b == 0.50, "(7974, 2036) -> " + fmt(a) + ", (3749, 3783) -> " + fmt(b)};
}

// --- 6 ----------------------------------------------------------------------

Outcome loss_constants(const RunConfig& desk) {
  const BmrConfig def;
  const double l = bce(0.0, 0.5);
  const double err = std::abs(l - std::log(2.0));
  const bool ok = def.alpha == 1.0 && def.beta == 4.0 && desk.model.alpha == 1.0 && desk.model.beta == 4.0 &&
                  err <= 1e-12;
  return {ok, "alpha " + fmt(def.alpha) + ", beta " + fmt(def.beta) + ", |bce(0,0.5) - ln2| " + fmt(err, 3)};
}

// --- 7 ----------------------------------------------------------------------

constexpr double kMultiBar = 0.90;
constexpr double kMatchBar = 0.85;
constexpr double kMismatchBar = 0.60;

Outcome planted_signals(const RunConfig& desk) {
  std::ostringstream detail;
  bool ok = true;

  const auto t0 = Clock::now();
  auto loaded = load_dataset(desk);
  std::vector<double> best;
  std::size_t max_epochs = 0;
  for (auto seed : desk.seeds) {
    auto r = run_once(desk, desk.model, loaded.data, seed);
    best.push_back(r.report.best.accuracy);
    max_epochs = std::max(max_epochs, r.report.epochs.size());
  }
  const double secs = seconds_since(t0);
  const double mean = std::accumulate(best.begin(), best.end(), 0.0) / static_cast<double>(best.size());
  ok = ok && best.size() == 5 && mean >= kMultiBar && max_epochs <= 30 && secs < 600.0;
  detail << "multi-signal mean best " << fmt(mean) << " over " << best.size() << " seeds [";
  for (std::size_t i = 0; i < best.size(); ++i) detail << (i ? " " : "") << fmt(best[i]);
  detail << "], " << fmt(secs, 3) << " s;";

  struct Probe {
    const char* signal;
    std::function<void(SignalSpec&)> enable;
    View matching;
  };
  const std::vector<Probe> probes{{"pattern", [](SignalSpec& s) { s.pattern = true; }, View::kPattern},
                                  {"semantics", [](SignalSpec& s) { s.semantics = true; }, View::kSemantics},
                                  {"text", [](SignalSpec& s) { s.text = true; }, View::kText}};
  const std::vector<View> single{View::kPattern, View::kSemantics, View::kText};
  for (const auto& p : probes) {
    RunConfig rc = desk;
    rc.synth.spec = SignalSpec{};
    rc.synth.spec.pattern = rc.synth.spec.semantics = rc.synth.spec.text = rc.synth.spec.consistency = false;
    p.enable(rc.synth.spec);
    rc.synth.spec.signal_noise = 0.0;
    rc.epochs = 15;
    auto data = load_dataset(rc).data;
    detail << " " << p.signal << ":";
    for (View v : single) {
      BmrConfig cfg = rc.model;
      cfg.views = ViewSet::parse(view_name(v));
      const double acc = run_once(rc, cfg, data, 0).report.best.accuracy;
      const bool pass = v == p.matching ? acc >= kMatchBar : acc <= kMismatchBar;
      ok = ok && pass;
      detail << " " << view_name(v) << "=" << fmt(acc, 3) << (pass ? "" : "!");
    }
  }
  return {ok, detail.str()};
}

// --- 8 ----------------------------------------------------------------------

constexpr std::size_t kConsistencyCorpus = 4000;
constexpr double kConsistencyLr = 3e-3;
constexpr std::size_t kConsistencyEpochs = 30;

Outcome consistency_learnable(const RunConfig& desk) {
  RunConfig rc = desk;
  rc.synth.n = kConsistencyCorpus;
  rc.synth.spec = SignalSpec{};
  rc.synth.spec.pattern = rc.synth.spec.semantics = rc.synth.spec.text = false;
  rc.synth.spec.consistency = true;
  rc.synth.spec.signal_noise = 0.0;
  rc.lr0 = kConsistencyLr;
  rc.epochs = kConsistencyEpochs;
  rc.patience = 0;
  const auto t0 = Clock::now();
  auto data = load_dataset(rc).data;
  auto r = run_once(rc, rc.model, data, 0);
  auto real = filter_label(data.test, Label::kReal);
  auto held = build_consistency_set(real, default_consistency_size(real.size()), 99);
  const double acc = consistency_accuracy(*r.model, held);
  return {acc >= 0.90, "S_m accuracy " + fmt(acc) + " on " + std::to_string(held.size()) +
                           " held-out pairs (corpus n=" + std::to_string(rc.synth.n) + "), " +
                           fmt(seconds_since(t0), 3) + " s"};
}

// --- 9 ----------------------------------------------------------------------

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

Outcome exports_well_formed(const RunConfig& desk) {
  RunConfig rc = desk;
  rc.synth.n = 200;
  rc.epochs = 2;
  auto data = load_dataset(rc).data;
  auto r = run_once(rc, rc.model, data, 0);
  BmrModel& m = *r.model;
  std::ostringstream detail;
  bool ok = true;

  auto curves = csv_rows(export_reweigh_curves(m));
  std::map<std::string, std::size_t> per_view;
  bool in_range = true;
  for (std::size_t i = 1; i < curves.size(); ++i) {
    ++per_view[curves[i][0]];
    const double w = std::stod(curves[i][2]);
    in_range = in_range && w > 0.0 && w < 1.0;
  }
  bool counts = !per_view.empty();
  for (const auto& [v, n] : per_view) counts = counts && n == 101;
  ok = ok && counts && in_range;
  detail << "curves: " << per_view.size() << " views x 101 rows" << (counts && in_range ? "" : " FAILED") << ";";

  auto hist = csv_rows(export_score_histogram(m, data.test));
  const std::vector<std::string> edges{"[0-0.1]",   "(0.1-0.2]", "(0.2-0.3]", "(0.3-0.4]", "(0.4-0.5]",
                                       "(0.5-0.6]", "(0.6-0.7]", "(0.7-0.8]", "(0.8-0.9]", "(0.9-1]"};
  bool edges_ok = hist[0].size() == 12 && std::equal(edges.begin(), edges.end(), hist[0].begin() + 2);
  double worst_sum = 0.0;
  for (std::size_t i = 1; i < hist.size(); ++i) {
    double total = 0.0;
    for (std::size_t k = 2; k < hist[i].size(); ++k) total += std::stod(hist[i][k]);
    worst_sum = std::max(worst_sum, std::abs(total - 100.0));
  }
  ok = ok && edges_ok && worst_sum <= 0.1 && hist.size() > 1;
  detail << " histogram: " << hist.size() - 1 << " rows, max |sum-100| " << fmt(worst_sum, 3)
         << (edges_ok ? "" : ", bad bin edges") << ";";

  auto maps = export_cosine_heatmap(m, data.test);
  double asym = 0.0, diag = 0.0;
  for (const auto& h : maps)
    for (std::size_t i = 0; i < h.cosine.size(); ++i) {
      diag = std::max(diag, std::abs(h.cosine[i][i] - 1.0));
      for (std::size_t j = 0; j < h.cosine.size(); ++j) asym = std::max(asym, std::abs(h.cosine[i][j] - h.cosine[j][i]));
    }
  ok = ok && !maps.empty() && asym == 0.0 && diag <= 1e-9;
  detail << " heatmaps: " << maps.size() << ", asymmetry " << fmt(asym, 3) << ", |diag-1| " << fmt(diag, 3);
  return {ok, detail.str()};
}

// --- 10 ---------------------------------------------------------------------

Outcome determinism(const RunConfig& desk) {
  RunConfig rc = desk;
  rc.synth.n = 200;
  rc.epochs = 3;
  auto data = load_dataset(rc).data;
  auto a = run_once(rc, rc.model, data, 42);
  auto b = run_once(rc, rc.model, data, 42);
  const std::string ra = a.report.to_json().dump(), rb = b.report.to_json().dump();
  const std::string ca = serialize_checkpoint(*a.model), cb = serialize_checkpoint(*b.model);
  auto c = run_once(rc, rc.model, data, 43);
  const bool seed_matters = serialize_checkpoint(*c.model) != ca;
  return {ra == rb && ca == cb && seed_matters,
          std::string("reports ") + (ra == rb ? "identical" : "differ") + " (" + std::to_string(ra.size()) +
              " bytes), checkpoints " + (ca == cb ? "identical" : "differ") + " (" + std::to_string(ca.size()) +
              " bytes), other seed " + (seed_matters ? "differs" : "identical")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string desk_path = BMR_SOURCE_DIR "/configs/desk.json";
  std::vector<int> only;
  app.add_option("--desk", desk_path, "desk-scale run configuration");
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const RunConfig desk = load_run_config(desk_path);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"reduction oracle", reduction_oracle},
      {"stop-gradient contract", stop_gradient_contract},
      {"consistency dataset law", consistency_dataset_law},
      {"threshold rule", threshold_rule},
      {"loss constants", [&] { return loss_constants(desk); }},
      {"planted-signal learning", [&] { return planted_signals(desk); }},
      {"consistency task learnable", [&] { return consistency_learnable(desk); }},
      {"exports well-formed", [&] { return exports_well_formed(desk); }},
      {"determinism", [&] { return determinism(desk); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
