#include "bmr/train.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <omp.h>

#include "bmr/optim.hpp"

namespace bmr {

namespace {

/// Shuffled index ranges of size `batch`; a trailing single item joins the
/// previous range (batch normalisation needs two samples).
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

template <typename T>
std::vector<const T*> gather(std::span<const T> items, const std::vector<std::size_t>& idx) {
  std::vector<const T*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&items[i]);
  return out;
}

void step(std::vector<Tensor>& params, AdamState& adam, const Tensor& loss, double lr, BmrModel& model) {
  clear_grads(params);
  backward(loss);
  adam_step(params, adam, lr);
  model.post_step();
}

}  // namespace

Json metrics_to_json(const Metrics& m) {
  auto cls = [](const ClassScores& s) { return Json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}; };
  return Json{{"accuracy", m.accuracy}, {"fake", cls(m.fake)}, {"real", cls(m.real)},
              {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
}

Json RunReport::to_json() const {
  Json eps = Json::array();
  for (const auto& e : epochs)
    eps.push_back(Json{{"epoch", e.epoch},
                       {"train_final", e.train_final},
                       {"train_coarse", e.train_coarse},
                       {"train_cc", e.train_cc},
                       {"test", metrics_to_json(e.test)}});
  return Json{{"config", config},
              {"seed", seed},
              {"threshold", threshold},
              {"initial", metrics_to_json(initial)},
              {"epochs", eps},
              {"best_epoch", best_epoch ? Json(*best_epoch) : Json(nullptr)},
              {"best", metrics_to_json(best)}};
}

std::vector<std::vector<double>> snapshot(BmrModel& model) {
  std::vector<std::vector<double>> out;
  for (auto& e : model.state()) {
    if (e.kind == StateEntry::Kind::kBuffer) out.push_back(*e.buffer);
    else out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  }
  return out;
}

void restore(BmrModel& model, const std::vector<std::vector<double>>& snap) {
  auto st = model.state();
  if (st.size() != snap.size()) throw std::invalid_argument("restore: snapshot does not match the model");
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st[i].kind == StateEntry::Kind::kBuffer) *st[i].buffer = snap[i];
    else std::copy(snap[i].begin(), snap[i].end(), st[i].tensor.mutable_data().begin());
  }
}

std::vector<double> predict(BmrModel& model, std::span<const RawNews> items, std::size_t eval_batch) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(items.size());
  const auto& cfg = model.config().encoder;
  for (std::size_t i = 0; i < items.size(); i += eval_batch) {
    auto part = items.subspan(i, std::min(eval_batch, items.size() - i));
    Batch b = Batch::from(part, cfg);
    auto y = model.forward(b, NormMode::kEval).y_hat;
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return out;
}

Metrics evaluate(BmrModel& model, std::span<const RawNews> items, double threshold, std::size_t eval_batch) {
  std::vector<double> labels;
  labels.reserve(items.size());
  for (const auto& n : items) labels.push_back(n.label == Label::kFake ? 1.0 : 0.0);
  return compute_metrics(predict(model, items, eval_batch), labels, threshold);
}

std::vector<double> consistency_scores(BmrModel& model, std::span<const ConsistencyPair> pairs,
                                       std::size_t eval_batch) {
  NoGradGuard no_grad;
  std::vector<double> out;
  const auto& cfg = model.config().encoder;
  for (std::size_t i = 0; i < pairs.size(); i += eval_batch) {
    std::vector<const ConsistencyPair*> ptrs;
    for (std::size_t j = i; j < std::min(pairs.size(), i + eval_batch); ++j) ptrs.push_back(&pairs[j]);
    Batch b = make_pair_batch(ptrs, cfg);
    auto s = model.consistency_score(b, NormMode::kEval);
    out.insert(out.end(), s.data().begin(), s.data().end());
  }
  return out;
}

double consistency_accuracy(BmrModel& model, std::span<const ConsistencyPair> pairs) {
  if (pairs.empty()) return 0.0;
  auto s = consistency_scores(model, pairs);
  std::size_t right = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) right += (s[i] >= 0.5) == pairs[i].matched;
  return static_cast<double>(right) / static_cast<double>(pairs.size());
}

RunReport train(BmrModel& model, std::span<const RawNews> train_set, std::span<const RawNews> test_set,
                std::span<const ConsistencyPair> consistency_set, const TrainOptions& opts) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (test_set.empty()) throw std::invalid_argument("train: empty test set");
  if (opts.batch < 2) throw std::invalid_argument("train: batch must be >= 2");
  const auto& cfg = model.config();
  const bool use_cc = cfg.views.multimodal && cfg.consistency_loss && consistency_set.size() >= 2;

  RunReport report;
  report.config = config_to_json(cfg);
  report.seed = opts.seed;
  report.threshold = cfg.threshold;
  report.initial = evaluate(model, test_set, cfg.threshold, opts.eval_batch);
  report.best = report.initial;
  auto best_state = snapshot(model);

  std::mt19937_64 rng(opts.seed ^ 0x5DEECE66DULL);
  auto params = model.parameters();
  AdamState adam;
  const std::size_t per_epoch = (train_set.size() + opts.batch - 1) / opts.batch;
  const auto total_steps = static_cast<std::int64_t>(per_epoch * opts.epochs);
  std::int64_t global = 0;
  std::size_t since_best = 0;

  std::vector<std::vector<std::size_t>> cc_batches;
  std::size_t cc_next = 0;

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    auto batches = minibatches(train_set.size(), opts.batch, rng);
    double sum_final = 0, sum_coarse = 0, sum_cc = 0;
    std::size_t n_cc = 0;
    for (const auto& idx : batches) {
      const double lr = cosine_anneal(opts.lr0, global, total_steps);
      if (use_cc) {
        if (cc_next >= cc_batches.size()) {
          cc_batches = minibatches(consistency_set.size(), opts.batch, rng);
          cc_next = 0;
        }
        auto ptrs = gather(consistency_set, cc_batches[cc_next++]);
        Batch pb = make_pair_batch(ptrs, cfg.encoder);
        Tensor s_m = model.consistency_score(pb, NormMode::kTrain);
        Tensor l_cc = model.consistency_loss(s_m, pb.labels);
        sum_cc += cfg.beta > 0 ? l_cc.item() / cfg.beta : 0.0;
        ++n_cc;
        step(params, adam, l_cc, lr, model);
      }
      auto ptrs = gather(train_set, idx);
      Batch b = Batch::from(ptrs, cfg.encoder);
      auto out = model.forward(b, NormMode::kTrain);
      auto loss = model.total_loss(out, b.labels);
      sum_final += loss.final_loss;
      sum_coarse += loss.coarse_loss;
      step(params, adam, loss.total, lr, model);
      ++global;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_final = sum_final / static_cast<double>(batches.size());
    rec.train_coarse = sum_coarse / static_cast<double>(batches.size());
    rec.train_cc = n_cc ? sum_cc / static_cast<double>(n_cc) : 0.0;
    rec.test = evaluate(model, test_set, cfg.threshold, opts.eval_batch);
    report.epochs.push_back(rec);
    if (rec.test.accuracy > report.best.accuracy) {
      report.best = rec.test;
      report.best_epoch = epoch;
      best_state = snapshot(model);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (opts.stop_at_perfect && report.best.accuracy >= 1.0) break;
    if (opts.patience > 0 && since_best >= opts.patience) break;
  }
  restore(model, best_state);
  return report;
}

RunResult run_once(const RunConfig& rc, const BmrConfig& cfg_in, const Dataset& data, std::uint64_t seed) {
  BmrConfig cfg = cfg_in;
  std::size_t n_real = 0, n_fake = 0;
  for (const auto& n : data.train) {
    n_real += n.label == Label::kReal;
    n_fake += n.label == Label::kFake;
  }
  if (rc.auto_threshold) cfg.threshold = derive_threshold(n_real, n_fake);
  std::vector<ConsistencyPair> cc;
  if (cfg.views.multimodal && cfg.consistency_loss) {
    auto real = filter_label(data.train, Label::kReal);
    const std::size_t k = rc.consistency_k ? rc.consistency_k : default_consistency_size(real.size());
    cc = build_consistency_set(real, k, seed + 1);
  }
  RunResult r;
  r.model = std::make_unique<BmrModel>(cfg, seed);
  TrainOptions opts;
  opts.epochs = rc.epochs;
  opts.batch = rc.batch;
  opts.lr0 = rc.lr0;
  opts.seed = seed;
  opts.patience = rc.patience;
  opts.stop_at_perfect = rc.stop_at_perfect;
  r.report = train(*r.model, data.train, data.test, cc, opts);
  return r;
}

std::vector<AblationDelta> ablation_preset() {
  return {
      {"IS+IP+T", Json{{"views", "IP+IS+T"}}},
      {"S_m reweigh. Multi-view.", Json{{"sm_reweighs_multiview", true}}},
      {"w/o Feature Reweigh.", Json{{"reweigh_mode", "off"}}},
      {"w/o Coarse Class.", Json{{"coarse_loss", false}}},
      {"using ViT Blocks for Refine.", Json{{"refine_mode", "separate_blocks"}}},
      {"w/o Cross. Correlat.", Json{{"consistency_loss", false}}},
      {"w/o improving MMoE", Json{{"gate_mode", "softmax"}}},
      {"BMR", Json::object()},
  };
}

std::size_t grid_threads() {
  if (const char* env = std::getenv("BMR_NUM_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("BMR_NUM_THREADS: expected a positive integer, got '") + env + "'");
  }
  return 1;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const Dataset& data,
                                      std::span<const AblationDelta> grid, std::span<const std::uint64_t> seeds,
                                      std::size_t threads) {
  std::vector<BmrConfig> cfgs;
  for (const auto& g : grid) {
    std::vector<std::string> problems;
    for (const auto& [key, value] : g.delta.items())
      if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end())
        problems.push_back(g.label + ": unknown key " + key);
    BmrConfig c = config_from_json(g.delta, problems, base.model);
    for (auto& p : c.problems()) problems.push_back(g.label + ": " + p);
    if (!problems.empty()) throw ConfigError(std::move(problems));
    cfgs.push_back(c);
  }
  const std::size_t n_jobs = grid.size() * seeds.size();
  std::vector<Metrics> best(n_jobs);
  std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n_jobs, 1));
  auto job = [&](std::size_t j) {
    best[j] = run_once(base, cfgs[j / seeds.size()], data, seeds[j % seeds.size()]).report.best;
  };
  if (workers == 1) {
    for (std::size_t j = 0; j < n_jobs; ++j) job(j);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        omp_set_num_threads(1);
        try {
          for (std::size_t j = w; j < n_jobs; j += workers) job(j);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<AblationRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    AblationRow row;
    row.label = grid[g].label;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& m = best[g * seeds.size() + s];
      row.best_accuracy.push_back(m.accuracy);
      row.mean_accuracy += m.accuracy;
      row.mean_fake_f1 += m.fake.f1;
      row.mean_real_f1 += m.real.f1;
    }
    const double n = static_cast<double>(std::max<std::size_t>(seeds.size(), 1));
    row.mean_accuracy /= n;
    row.mean_fake_f1 /= n;
    row.mean_real_f1 /= n;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << "method,seeds,accuracy,fake_f1,real_f1\n";
  for (const auto& r : rows)
    os << '"' << r.label << "\"," << r.best_accuracy.size() << ',' << r.mean_accuracy << ',' << r.mean_fake_f1
       << ',' << r.mean_real_f1 << '\n';
  return os.str();
}

}  // namespace bmr
