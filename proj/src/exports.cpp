#include "bmr/exports.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bmr {

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

}  // namespace

std::string view_name(View v) {
  switch (v) {
    case View::kPattern: return "IP";
    case View::kSemantics: return "IS";
    case View::kText: return "T";
    case View::kMultimodal: return "M";
  }
  return "?";
}

std::vector<View> reweighed_views(const BmrConfig& cfg) {
  std::vector<View> out;
  if (cfg.reweigh_mode != ReweighMode::kLearned) return out;
  if (!cfg.sm_reweighs_multiview)
    for (View v : {View::kPattern, View::kSemantics, View::kText})
      if (cfg.views.has(v)) out.push_back(v);
  if (cfg.views.multimodal) out.push_back(View::kMultimodal);
  return out;
}

std::string export_reweigh_curves(BmrModel& model, std::size_t resolution) {
  if (resolution < 2) throw std::invalid_argument("reweigh curves: resolution must be >= 2");
  std::vector<double> grid(resolution);
  for (std::size_t i = 0; i < resolution; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(resolution - 1);
  std::string out = "view,S,weight\n";
  for (View v : reweighed_views(model.config())) {
    auto w = model.reweigh_curve(v, grid);
    for (std::size_t i = 0; i < resolution; ++i) out += view_name(v) + "," + fmt(grid[i]) + "," + fmt(w[i]) + "\n";
  }
  return out;
}

std::size_t histogram_bin(double score, std::size_t bins) {
  for (std::size_t k = 0; k + 1 < bins; ++k)
    if (score <= static_cast<double>(k + 1) / static_cast<double>(bins)) return k;
  return bins - 1;
}

std::string export_score_histogram(BmrModel& model, std::span<const RawNews> items, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram: bins must be >= 1");
  struct Stream {
    std::string name;
    std::vector<double> scores;
  };
  std::vector<Stream> streams{{"y_hat", {}}, {"S_m", {}}, {"S_is", {}}, {"S_t", {}}, {"S_ip", {}}};
  {
    NoGradGuard no_grad;
    const std::size_t chunk = 256;
    for (std::size_t i = 0; i < items.size(); i += chunk) {
      Batch b = Batch::from(items.subspan(i, std::min(chunk, items.size() - i)), model.config().encoder);
      auto o = model.forward(b, NormMode::kEval);
      const Tensor* ts[] = {&o.y_hat, &o.s_m, &o.s_is, &o.s_t, &o.s_ip};
      for (std::size_t s = 0; s < streams.size(); ++s)
        if (ts[s]->defined()) streams[s].scores.insert(streams[s].scores.end(), ts[s]->data().begin(), ts[s]->data().end());
    }
  }
  std::string out = "class,stream";
  for (std::size_t k = 0; k < bins; ++k)
    out += "," + std::string(k == 0 ? "[" : "(") + fmt(static_cast<double>(k) / bins) + "-" +
           fmt(static_cast<double>(k + 1) / bins) + "]";
  out += "\n";
  for (Label cls : {Label::kReal, Label::kFake}) {
    std::size_t n_cls = 0;
    for (const auto& n : items) n_cls += n.label == cls;
    if (n_cls == 0) continue;
    for (const auto& s : streams) {
      if (s.scores.empty()) continue;
      std::vector<std::size_t> counts(bins, 0);
      for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].label == cls) ++counts[histogram_bin(s.scores[i], bins)];
      out += std::string(cls == Label::kFake ? "fake" : "real") + "," + s.name;
      for (auto c : counts) out += "," + fmt(100.0 * static_cast<double>(c) / static_cast<double>(n_cls));
      out += "\n";
    }
  }
  return out;
}

std::vector<std::vector<double>> cosine_matrix(const Tensor& rows) {
  const std::size_t n = rows.dim(0), d = rows.numel() / std::max<std::size_t>(n, 1);
  auto x = rows.data();
  std::vector<double> norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) norm[i] += x[i * d + k] * x[i * d + k];
  for (auto& v : norm) v = std::sqrt(v);
  std::vector<std::vector<double>> c(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += x[i * d + k] * x[j * d + k];
      double v;
      if (norm[i] == 0.0 || norm[j] == 0.0) v = (norm[i] == norm[j]) ? 1.0 : 0.0;
      else v = i == j ? 1.0 : std::clamp(dot / (norm[i] * norm[j]), -1.0, 1.0);
      c[i][j] = c[j][i] = v;
    }
  return c;
}

std::string Heatmap::csv() const {
  std::string out = "sample";
  for (const auto& s : samples) out += "," + s;
  out += "\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out += samples[i];
    for (double v : cosine[i]) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

std::vector<Heatmap> export_cosine_heatmap(BmrModel& model, std::span<const RawNews> items, std::size_t n_per_class) {
  std::vector<const RawNews*> chosen;
  std::vector<std::string> names;
  for (Label cls : {Label::kReal, Label::kFake}) {
    std::size_t got = 0;
    for (const auto& n : items) {
      if (got == n_per_class) break;
      if (n.label != cls) continue;
      chosen.push_back(&n);
      names.push_back((cls == Label::kFake ? "fake" : "real") + std::to_string(got++));
    }
    if (got < n_per_class)
      throw std::invalid_argument("heatmap: need " + std::to_string(n_per_class) + " " +
                                  (cls == Label::kFake ? "fake" : "real") + " items, found " + std::to_string(got));
  }
  NoGradGuard no_grad;
  Batch b = Batch::from(chosen, model.config().encoder);
  auto o = model.forward(b, NormMode::kEval);
  std::vector<Heatmap> out;
  const std::pair<const char*, const Tensor*> reps[] = {
      {"final", &o.hidden_final}, {"ip", &o.hidden_ip}, {"is", &o.hidden_is}, {"t", &o.hidden_t}, {"m", &o.hidden_m}};
  for (const auto& [name, t] : reps)
    if (t->defined()) out.push_back({name, names, cosine_matrix(*t)});
  return out;
}

}  // namespace bmr
