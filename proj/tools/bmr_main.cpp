// bmr: train, evaluate, ablate and inspect multi-view fake-news detectors.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "bmr/checkpoint.hpp"
#include "bmr/exports.hpp"
#include "bmr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bmr;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> threshold;
  std::string views;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

RunConfig resolve(const Common& c) {
  RunConfig rc = load_run_config(c.config);
  std::vector<std::string> problems;
  if (c.seed) rc.seeds = {*c.seed};
  if (!c.out.empty()) rc.out_dir = c.out;
  if (c.threshold) {
    rc.model.threshold = *c.threshold;
    rc.auto_threshold = false;
  }
  if (!c.views.empty()) {
    try {
      rc.model.views = ViewSet::parse(c.views);
    } catch (const ConfigError& e) {
      problems = e.problems();
    }
  }
  auto p = rc.model.problems();
  if (rc.auto_threshold) std::erase_if(p, [](const std::string& s) { return s.rfind("threshold:", 0) == 0; });
  problems.insert(problems.end(), p.begin(), p.end());
  if (!problems.empty()) throw ConfigError(problems);
  return rc;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

int cmd_train(const Common& c) {
  RunConfig rc = resolve(c);
  auto loaded = load_dataset(rc);
  const fs::path out(rc.out_dir);
  Json summary{{"config", run_config_to_json(rc)}, {"runs", Json::array()}};
  double mean = 0.0;
  for (auto seed : rc.seeds) {
    auto r = run_once(rc, rc.model, loaded.data, seed);
    const fs::path dir = rc.seeds.size() == 1 ? out : out / ("seed_" + std::to_string(seed));
    write_file(dir / "report.json", dump(r.report.to_json()));
    fs::create_directories(dir);
    save_checkpoint((dir / "model.ckpt").string(), *r.model, loaded.vocab.words(),
                    Json{{"seed", seed}, {"threshold", r.report.threshold}});
    summary["runs"].push_back(Json{{"seed", seed}, {"best_accuracy", r.report.best.accuracy},
                                   {"best_epoch", r.report.best_epoch ? Json(*r.report.best_epoch) : Json(nullptr)}});
    mean += r.report.best.accuracy;
  }
  mean /= static_cast<double>(rc.seeds.size());
  summary["mean_best_accuracy"] = mean;
  if (rc.seeds.size() > 1) write_file(out / "summary.json", dump(summary));
  std::cout << "train: " << rc.seeds.size() << " run(s), mean best accuracy " << mean << ", wrote " << out.string()
            << "\n";
  return 0;
}

LoadedCheckpoint open_checkpoint(const std::string& path, std::optional<double> threshold, double& thr) {
  auto ck = load_checkpoint(path);
  thr = threshold ? *threshold : ck.extra.value("threshold", ck.model->config().threshold);
  return ck;
}

std::vector<RawNews> read_items(const std::string& path, const LoadedCheckpoint& ck) {
  const Vocabulary vocab = Vocabulary::from_words(ck.vocab);
  return ingest(path, vocab, ck.model->config().clean_rules()).items;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& out_dir,
             std::optional<double> threshold) {
  double thr = 0.5;
  auto ck = open_checkpoint(checkpoint, threshold, thr);
  auto items = read_items(data, ck);
  auto m = evaluate(*ck.model, items, thr);
  Json j = metrics_to_json(m);
  j["threshold"] = thr;
  j["n"] = items.size();
  write_file(fs::path(out_dir) / "eval.json", dump(j));
  std::cout << "eval: " << items.size() << " items, accuracy " << m.accuracy << ", fake F1 " << m.fake.f1
            << ", real F1 " << m.real.f1 << "\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& grid_spec) {
  RunConfig rc = resolve(c);
  std::vector<AblationDelta> grid;
  if (grid_spec.empty() || grid_spec == "preset") {
    grid = ablation_preset();
  } else {
    std::ifstream in(grid_spec);
    if (!in) throw std::runtime_error("cannot open ablation grid " + grid_spec);
    Json j = Json::parse(in);
    if (!j.is_array()) throw ConfigError({"ablation: expected a list of {\"label\", \"delta\"} objects"});
    for (const auto& row : j) grid.push_back({row.at("label").get<std::string>(), row.at("delta")});
  }
  auto loaded = load_dataset(rc);
  auto rows = run_ablation(rc, loaded.data, grid, rc.seeds, grid_threads());
  const auto csv = ablation_csv(rows);
  write_file(fs::path(rc.out_dir) / "ablation.csv", csv);
  std::cout << csv;
  std::cout << "ablate: " << rows.size() << " rows x " << rc.seeds.size() << " seeds, wrote "
            << (fs::path(rc.out_dir) / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_synth(std::size_t n, const std::string& signals, double noise, std::uint64_t seed, const std::string& out) {
  SignalSpec spec;
  spec.pattern = spec.semantics = spec.text = spec.consistency = false;
  for (const auto& s : split_words([&] {
         std::string t = signals;
         std::replace(t.begin(), t.end(), ',', ' ');
         return t;
       }())) {
    if (s == "pattern") spec.pattern = true;
    else if (s == "semantics") spec.semantics = true;
    else if (s == "text") spec.text = true;
    else if (s == "consistency") spec.consistency = true;
    else throw ConfigError({"signals: unknown signal '" + s + "' (pattern, semantics, text, consistency)"});
  }
  spec.signal_noise = noise;
  auto corpus = synth_corpus(n, spec, seed);
  const auto vocab = synthetic_vocabulary();
  fs::create_directories(out);
  write_news_jsonl((fs::path(out) / "train.jsonl").string(), to_records(corpus.train, vocab, "train"));
  write_news_jsonl((fs::path(out) / "test.jsonl").string(), to_records(corpus.test, vocab, "test"));
  std::cout << "synth: " << corpus.train.size() << " train + " << corpus.test.size() << " test items, wrote " << out
            << "\n";
  return 0;
}

int cmd_export(const std::string& checkpoint, const std::string& kind, const std::string& data,
               const std::string& out_dir) {
  double thr = 0.5;
  auto ck = open_checkpoint(checkpoint, std::nullopt, thr);
  const fs::path out(out_dir);
  if (kind == "curves") {
    const auto csv = export_reweigh_curves(*ck.model);
    write_file(out / "reweigh_curves.csv", csv);
    std::cout << "export: " << reweighed_views(ck.model->config()).size() << " reweighing curve(s) -> "
              << (out / "reweigh_curves.csv").string() << "\n";
    return 0;
  }
  if (data.empty()) throw std::invalid_argument("export " + kind + ": --data is required");
  auto items = read_items(data, ck);
  if (kind == "histogram") {
    write_file(out / "score_histogram.csv", export_score_histogram(*ck.model, items));
    std::cout << "export: score histogram over " << items.size() << " items -> "
              << (out / "score_histogram.csv").string() << "\n";
  } else {
    auto maps = export_cosine_heatmap(*ck.model, items);
    for (const auto& h : maps) write_file(out / ("heatmap_" + h.representation + ".csv"), h.csv());
    std::cout << "export: " << maps.size() << " heatmap(s) -> " << out.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view fake news detection: training, evaluation and analysis"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Single seed overriding the configured list");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--threshold-override", common.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--views", common.views, "Enabled views, e.g. IP+IS+T+M");
  };

  auto* train = app.add_subcommand("train", "Train and write report.json + model.ckpt");
  add_common(train);

  std::string ablation;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid and write ablation.csv");
  add_common(ablate);
  ablate->add_option("--ablation", ablation, "\"preset\" (default) or a JSON list of {label, delta}");

  std::string checkpoint, data, out_dir = ".";
  std::optional<double> eval_threshold;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a JSONL file");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data)->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out_dir, "Output directory");
  eval->add_option("--threshold-override", eval_threshold)->check(CLI::Range(0.0, 1.0));

  std::size_t n = 2000;
  std::string signals = "pattern,semantics,text,consistency";
  double noise = 0.0;
  std::uint64_t synth_seed = 1;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus as train.jsonl/test.jsonl");
  synth->add_option("--n", n, "Number of items")->check(CLI::Range(10, 10000000));
  synth->add_option("--signals", signals, "Comma list of pattern, semantics, text, consistency");
  synth->add_option("--signal-noise", noise, "Per-signal probability of a random class")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out, "Output directory");

  std::string kind;
  auto* exp = app.add_subcommand("export", "Write analysis CSVs from a checkpoint");
  exp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  exp->add_option("--kind", kind)->required()->check(CLI::IsMember({"curves", "histogram", "heatmap"}));
  exp->add_option("--data", data, "JSONL file (histogram, heatmap)")->check(CLI::ExistingFile);
  exp->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(common);
    if (*ablate) return cmd_ablate(common, ablation);
    if (*eval) return cmd_eval(checkpoint, data, out_dir, eval_threshold);
    if (*synth) return cmd_synth(n, signals, noise, synth_seed, synth_out);
    if (*exp) return cmd_export(checkpoint, kind, data, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid configuration\n";
    for (const auto& p : e.problems()) std::cerr << "  - " << p << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
