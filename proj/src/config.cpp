#include "bmr/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace bmr {

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out, std::vector<std::string>& problems) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("expected true/false");
      out = it->get<bool>();
    } else if constexpr (std::is_same_v<T, std::size_t>) {
      if (!it->is_number_integer() || it->get<long long>() < 0)
        throw std::invalid_argument("expected a non-negative integer");
      out = it->get<std::size_t>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw std::invalid_argument("expected a number");
      out = it->get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::invalid_argument("expected a string");
      out = it->get<std::string>();
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string(key) + ": " + e.what() + ", got " + it->dump());
  }
}

template <typename E>
void read_enum(const Json& j, const char* key, E& out, const std::vector<std::pair<std::string, E>>& names,
               std::vector<std::string>& problems) {
  std::string s;
  auto it = j.find(key);
  if (it == j.end()) return;
  std::vector<std::string> local;
  read(j, key, s, local);
  if (!local.empty()) {
    problems.insert(problems.end(), local.begin(), local.end());
    return;
  }
  std::string options;
  for (const auto& [name, value] : names) {
    if (name == s) {
      out = value;
      return;
    }
    options += (options.empty() ? "" : ", ") + name;
  }
  problems.push_back(std::string(key) + ": unknown value '" + s + "' (expected " + options + ")");
}

const std::vector<std::pair<std::string, ReweighMode>> kReweigh{
    {"learned", ReweighMode::kLearned}, {"confidence", ReweighMode::kConfidence}, {"off", ReweighMode::kOff}};
const std::vector<std::pair<std::string, GateMode>> kGate{{"unconstrained", GateMode::kUnconstrained},
                                                          {"softmax", GateMode::kSoftmax}};
const std::vector<std::pair<std::string, GateInput>> kGateInput{{"token_attention", GateInput::kTokenAttention},
                                                                {"token_sum", GateInput::kTokenSum}};
const std::vector<std::pair<std::string, RefineMode>> kRefine{{"immoe", RefineMode::kImmoe},
                                                              {"separate_blocks", RefineMode::kSeparateBlocks}};

template <typename E>
std::string name_of(E v, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [name, value] : names)
    if (value == v) return name;
  return "?";
}

const std::vector<std::string> kRunKeys{"auto_threshold", "epochs", "batch", "lr0", "seeds", "patience",
                                        "stop_at_perfect", "consistency_k", "train_path", "test_path",
                                        "out_dir", "synth"};
const std::vector<std::string> kSynthKeys{"n", "seed", "pattern", "semantics", "text", "consistency",
                                          "signal_noise", "min_words", "max_words", "noise_amplitude"};

}  // namespace

std::string to_string(ReweighMode m) { return name_of(m, kReweigh); }
std::string to_string(GateMode m) { return name_of(m, kGate); }
std::string to_string(GateInput m) { return name_of(m, kGateInput); }
std::string to_string(RefineMode m) { return name_of(m, kRefine); }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "d", "vocab", "image_rows", "image_cols", "patch", "max_len", "frozen_semantics", "frozen_text",
      "n_experts", "views", "reweigh_mode", "stop_grad_reweigh", "coarse_loss", "consistency_loss",
      "sm_reweighs_multiview", "complement_irrelevance", "gate_mode", "gate_input", "refine_mode", "alpha",
      "beta", "threshold", "reweigh_hidden", "min_image_side", "min_words"};
  return keys;
}

Json config_to_json(const BmrConfig& c) {
  const auto& e = c.encoder;
  return Json{{"d", e.d},
              {"vocab", e.vocab},
              {"image_rows", e.image_rows},
              {"image_cols", e.image_cols},
              {"patch", e.patch},
              {"max_len", e.max_len},
              {"frozen_semantics", e.frozen_semantics},
              {"frozen_text", e.frozen_text},
              {"n_experts", c.n_experts},
              {"views", c.views.label()},
              {"reweigh_mode", to_string(c.reweigh_mode)},
              {"stop_grad_reweigh", c.stop_grad_reweigh},
              {"coarse_loss", c.coarse_loss},
              {"consistency_loss", c.consistency_loss},
              {"sm_reweighs_multiview", c.sm_reweighs_multiview},
              {"complement_irrelevance", c.complement_irrelevance},
              {"gate_mode", to_string(c.gate_mode)},
              {"gate_input", to_string(c.gate_input)},
              {"refine_mode", to_string(c.refine_mode)},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"threshold", c.threshold},
              {"reweigh_hidden", c.reweigh_hidden},
              {"min_image_side", c.min_image_side},
              {"min_words", c.min_words}};
}

BmrConfig config_from_json(const Json& j, std::vector<std::string>& problems, BmrConfig c) {
  if (!j.is_object()) {
    problems.emplace_back("config: expected a JSON object");
    return c;
  }
  auto& e = c.encoder;
  read(j, "d", e.d, problems);
  read(j, "vocab", e.vocab, problems);
  read(j, "image_rows", e.image_rows, problems);
  read(j, "image_cols", e.image_cols, problems);
  read(j, "patch", e.patch, problems);
  read(j, "max_len", e.max_len, problems);
  read(j, "frozen_semantics", e.frozen_semantics, problems);
  read(j, "frozen_text", e.frozen_text, problems);
  read(j, "n_experts", c.n_experts, problems);
  if (auto it = j.find("views"); it != j.end()) {
    if (!it->is_string()) problems.push_back("views: expected a string such as \"IP+IS+T+M\", got " + it->dump());
    else {
      try {
        c.views = ViewSet::parse(it->get<std::string>());
      } catch (const ConfigError& err) {
        problems.insert(problems.end(), err.problems().begin(), err.problems().end());
      }
    }
  }
  read_enum(j, "reweigh_mode", c.reweigh_mode, kReweigh, problems);
  read(j, "stop_grad_reweigh", c.stop_grad_reweigh, problems);
  read(j, "coarse_loss", c.coarse_loss, problems);
  read(j, "consistency_loss", c.consistency_loss, problems);
  read(j, "sm_reweighs_multiview", c.sm_reweighs_multiview, problems);
  read(j, "complement_irrelevance", c.complement_irrelevance, problems);
  read_enum(j, "gate_mode", c.gate_mode, kGate, problems);
  read_enum(j, "gate_input", c.gate_input, kGateInput, problems);
  read_enum(j, "refine_mode", c.refine_mode, kRefine, problems);
  read(j, "alpha", c.alpha, problems);
  read(j, "beta", c.beta, problems);
  if (auto it = j.find("threshold"); it == j.end() || !it->is_string()) read(j, "threshold", c.threshold, problems);
  read(j, "reweigh_hidden", c.reweigh_hidden, problems);
  read(j, "min_image_side", c.min_image_side, problems);
  read(j, "min_words", c.min_words, problems);
  return c;
}

RunConfig parse_run_config(const Json& j) {
  std::vector<std::string> problems;
  RunConfig rc;
  if (!j.is_object()) throw ConfigError({"config: expected a JSON object"});
  std::set<std::string> known(config_keys().begin(), config_keys().end());
  known.insert(kRunKeys.begin(), kRunKeys.end());
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) problems.push_back(key + ": unknown key");

  rc.model = config_from_json(j, problems);
  if (auto it = j.find("threshold"); it != j.end() && it->is_string()) {
    if (it->get<std::string>() == "auto") rc.auto_threshold = true;
    else problems.push_back("threshold: expected a number or \"auto\", got " + it->dump());
  }
  read(j, "auto_threshold", rc.auto_threshold, problems);
  read(j, "epochs", rc.epochs, problems);
  read(j, "batch", rc.batch, problems);
  read(j, "lr0", rc.lr0, problems);
  read(j, "patience", rc.patience, problems);
  read(j, "stop_at_perfect", rc.stop_at_perfect, problems);
  read(j, "consistency_k", rc.consistency_k, problems);
  read(j, "train_path", rc.train_path, problems);
  read(j, "test_path", rc.test_path, problems);
  read(j, "out_dir", rc.out_dir, problems);
  if (auto it = j.find("seeds"); it != j.end()) {
    bool ok = it->is_array() && !it->empty();
    if (ok)
      for (const auto& s : *it) ok = ok && s.is_number_integer() && s.get<long long>() >= 0;
    if (ok) rc.seeds = it->get<std::vector<std::uint64_t>>();
    else problems.push_back("seeds: expected a non-empty list of non-negative integers, got " + it->dump());
  }
  if (auto it = j.find("synth"); it != j.end()) {
    if (!it->is_object()) problems.push_back("synth: expected an object");
    else {
      std::set<std::string> sk(kSynthKeys.begin(), kSynthKeys.end());
      for (const auto& [key, value] : it->items())
        if (!sk.count(key)) problems.push_back("synth." + key + ": unknown key");
      auto& s = rc.synth;
      std::size_t seed = s.seed;
      read(*it, "n", s.n, problems);
      read(*it, "seed", seed, problems);
      s.seed = seed;
      read(*it, "pattern", s.spec.pattern, problems);
      read(*it, "semantics", s.spec.semantics, problems);
      read(*it, "text", s.spec.text, problems);
      read(*it, "consistency", s.spec.consistency, problems);
      read(*it, "signal_noise", s.spec.signal_noise, problems);
      read(*it, "min_words", s.spec.min_words, problems);
      read(*it, "max_words", s.spec.max_words, problems);
      read(*it, "noise_amplitude", s.spec.noise_amplitude, problems);
      s.spec.image_rows = rc.model.encoder.image_rows;
      s.spec.image_cols = rc.model.encoder.image_cols;
      if (s.spec.signal_noise < 0.0 || s.spec.signal_noise > 1.0)
        problems.emplace_back("synth.signal_noise: must lie in [0, 1]");
      if (s.spec.min_words > s.spec.max_words) problems.emplace_back("synth.min_words: exceeds max_words");
      if (s.n > 0 && s.n < 10) problems.emplace_back("synth.n: must be >= 10");
      if (s.n > 0 && rc.model.min_image_side > std::min(s.spec.image_rows, s.spec.image_cols))
        problems.emplace_back("min_image_side: exceeds the synthetic image size, every image would be blanked");
      if (s.n > 0 && rc.model.min_words > s.spec.min_words)
        problems.emplace_back("min_words: exceeds synth.min_words, every text would become the placeholder");
      if (s.n > 0 && rc.model.encoder.vocab < SignalSpec::vocab_size())
        problems.push_back("vocab: synthetic corpus needs >= " + std::to_string(SignalSpec::vocab_size()));
    }
  }

  auto model_problems = rc.model.problems();
  if (rc.auto_threshold) {
    // the placeholder threshold is replaced per run
    std::erase_if(model_problems, [](const std::string& p) { return p.rfind("threshold:", 0) == 0; });
  }
  problems.insert(problems.end(), model_problems.begin(), model_problems.end());
  if (rc.batch < 2) problems.emplace_back("batch: must be >= 2 (batch normalisation needs two samples)");
  if (!(rc.lr0 > 0.0)) problems.emplace_back("lr0: must be > 0");
  if (rc.train_path.empty() != rc.test_path.empty())
    problems.emplace_back("train_path/test_path: give both or neither");
  if (rc.train_path.empty() && rc.synth.n == 0)
    problems.emplace_back("train_path: no dataset (set train_path/test_path or synth.n)");
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError({"config " + path + ": " + e.what()});
  }
  RunConfig rc = parse_run_config(j);
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(rc.train_path);
  resolve(rc.test_path);
  return rc;
}

Json run_config_to_json(const RunConfig& rc) {
  Json j = config_to_json(rc.model);
  if (rc.auto_threshold) j["threshold"] = "auto";
  j["epochs"] = rc.epochs;
  j["batch"] = rc.batch;
  j["lr0"] = rc.lr0;
  j["seeds"] = rc.seeds;
  j["patience"] = rc.patience;
  j["stop_at_perfect"] = rc.stop_at_perfect;
  j["consistency_k"] = rc.consistency_k;
  j["train_path"] = rc.train_path;
  j["test_path"] = rc.test_path;
  j["out_dir"] = rc.out_dir;
  const auto& s = rc.synth;
  j["synth"] = Json{{"n", s.n},
                    {"seed", s.seed},
                    {"pattern", s.spec.pattern},
                    {"semantics", s.spec.semantics},
                    {"text", s.spec.text},
                    {"consistency", s.spec.consistency},
                    {"signal_noise", s.spec.signal_noise},
                    {"min_words", s.spec.min_words},
                    {"max_words", s.spec.max_words},
                    {"noise_amplitude", s.spec.noise_amplitude}};
  return j;
}

}  // namespace bmr
