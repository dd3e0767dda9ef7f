#pragma once

// Tiny model configuration and hand-sized batches shared by the model tests.

#include <random>

#include "bmr/data.hpp"
#include "bmr/model.hpp"

namespace bmr::testing {

inline BmrConfig tiny_config() {
  BmrConfig c;
  c.encoder.d = 8;
  c.encoder.vocab = 12;
  c.encoder.image_rows = 4;
  c.encoder.image_cols = 4;
  c.encoder.patch = 2;
  c.encoder.max_len = 2;
  c.n_experts = 2;
  c.reweigh_hidden = 4;
  c.min_image_side = 4;
  c.min_words = 1;
  return c;
}

inline std::vector<RawNews> random_news(std::size_t n, const BmrConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> word(token::kFirstWord, static_cast<std::int64_t>(cfg.encoder.vocab) - 1);
  std::vector<RawNews> out;
  for (std::size_t i = 0; i < n; ++i) {
    RawNews r;
    r.image = Image::zeros(cfg.encoder.image_rows, cfg.encoder.image_cols);
    for (auto& p : r.image.pixels) p = u(rng);
    for (std::size_t k = 0; k < cfg.encoder.max_len; ++k) r.text.push_back(word(rng));
    r.label = i % 2 ? Label::kFake : Label::kReal;
    out.push_back(std::move(r));
  }
  return out;
}

inline Batch tiny_batch(const BmrConfig& cfg, std::size_t n, std::uint64_t seed) {
  auto items = random_news(n, cfg, seed);
  return Batch::from(std::span<const RawNews>(items), cfg.encoder);
}

inline std::vector<Tensor> predictor_params(BmrModel& m, View v) {
  StateList st;
  m.predictor(v).enumerate("p", st);
  return trainable(st);
}

inline bool any_nonzero_grad(const std::vector<Tensor>& ps) {
  for (const auto& p : ps)
    if (p.has_grad())
      for (double g : p.grad())
        if (g != 0.0) return true;
  return false;
}

}  // namespace bmr::testing
