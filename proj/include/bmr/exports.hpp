#pragma once

#include <span>
#include <string>
#include <vector>

#include "bmr/model.hpp"

namespace bmr {

/// Views whose reweighing function is a learned F in this configuration.
std::vector<View> reweighed_views(const BmrConfig& cfg);
std::string view_name(View v);

/// Columns view,S,weight; `resolution` evenly spaced S in [0, 1] per view.
std::string export_reweigh_curves(BmrModel& model, std::size_t resolution = 101);

/// Bin for a score: [0,0.1], (0.1,0.2], ..., (0.9,1.0].
std::size_t histogram_bin(double score, std::size_t bins = 10);

/// Percentage of each class's scores per bin, one row per (class, stream).
/// Streams: y_hat, S_m, S_is, S_t, S_ip (those the model produces).
std::string export_score_histogram(BmrModel& model, std::span<const RawNews> items, std::size_t bins = 10);

struct Heatmap {
  std::string representation;  // final, ip, is, t, m
  std::vector<std::string> samples;
  std::vector<std::vector<double>> cosine;
  std::string csv() const;
};

/// Pairwise cosine similarity of penultimate representations for the first
/// n_per_class real and fake items (real first). Throws if either class has
/// fewer items.
std::vector<Heatmap> export_cosine_heatmap(BmrModel& model, std::span<const RawNews> items,
                                           std::size_t n_per_class = 10);

std::vector<std::vector<double>> cosine_matrix(const Tensor& rows);

}  // namespace bmr
