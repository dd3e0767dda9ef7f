#include "bmr/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bmr {

RawNews clean(const RawNews& news, const CleanRules& rules) {
  RawNews out = news;
  if (news.image.rows < rules.min_side || news.image.cols < rules.min_side)
    out.image = Image::zeros(rules.canonical_rows, rules.canonical_cols);
  if (news.text.size() < rules.min_words)
    out.text.assign(std::begin(token::kPlaceholder), std::end(token::kPlaceholder));
  return out;
}

Image resize(const Image& img, std::size_t rows, std::size_t cols) {
  if (img.rows == rows && img.cols == cols) return img;
  if (img.rows == 0 || img.cols == 0) return Image::zeros(rows, cols);
  Image out = Image::zeros(rows, cols);
  // align-corners=false sampling, clamped at the borders
  const double sy = static_cast<double>(img.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(img.cols) / static_cast<double>(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double y = std::clamp((static_cast<double>(i) + 0.5) * sy - 0.5, 0.0,
                                static_cast<double>(img.rows - 1));
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, img.rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double x = std::clamp((static_cast<double>(j) + 0.5) * sx - 0.5, 0.0,
                                  static_cast<double>(img.cols - 1));
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, img.cols - 1);
      const double fx = x - static_cast<double>(x0);
      const auto& p = img.pixels;
      const double top = p[y0 * img.cols + x0] * (1 - fx) + p[y0 * img.cols + x1] * fx;
      const double bot = p[y1 * img.cols + x0] * (1 - fx) + p[y1 * img.cols + x1] * fx;
      out.pixels[i * cols + j] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

std::vector<std::int64_t> fit_length(std::span<const std::int64_t> ids, std::size_t max_len) {
  std::vector<std::int64_t> out(max_len, token::kPad);
  std::copy_n(ids.begin(), std::min(ids.size(), max_len), out.begin());
  return out;
}

Batch Batch::from(std::span<const RawNews* const> items, const EncoderConfig& cfg) {
  Batch b;
  b.size = items.size();
  b.rows = cfg.image_rows;
  b.cols = cfg.image_cols;
  b.max_len = cfg.max_len;
  b.images.reserve(b.size * b.rows * b.cols);
  b.ids.reserve(b.size * b.max_len);
  for (const RawNews* n : items) {
    if (n->image.rows != b.rows || n->image.cols != b.cols)
      throw DimensionError("batch: image " + to_string({n->image.rows, n->image.cols}) +
                           " does not match the configured size " + to_string({b.rows, b.cols}));
    b.images.insert(b.images.end(), n->image.pixels.begin(), n->image.pixels.end());
    auto ids = fit_length(n->text, b.max_len);
    b.ids.insert(b.ids.end(), ids.begin(), ids.end());
    b.labels.push_back(n->label == Label::kFake ? 1.0 : 0.0);
  }
  return b;
}

Batch Batch::from(std::span<const RawNews> items, const EncoderConfig& cfg) {
  std::vector<const RawNews*> ptrs;
  ptrs.reserve(items.size());
  for (const auto& n : items) ptrs.push_back(&n);
  return from(std::span<const RawNews* const>(ptrs), cfg);
}

Tensor image_tensor(const Batch& batch) {
  return Tensor::from({batch.size, batch.rows, batch.cols}, batch.images);
}

// ---------------------------------------------------------------------------

BayarFilter::BayarFilter(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0 / 3.0);
  std::vector<double> w(9);
  for (auto& x : w) x = dist(rng);
  kernel = Tensor::from({3, 3}, std::move(w), true);
  project();
}

void BayarFilter::project() {
  auto w = kernel.mutable_data();
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i)
    if (i != 4) s += w[i];
  for (std::size_t i = 0; i < 9; ++i)
    if (i != 4) w[i] = std::abs(s) < 1e-8 ? 1.0 / 8.0 : w[i] / s;
  w[4] = -1.0;
}

double BayarFilter::off_centre_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < 9; ++i)
    if (i != 4) s += kernel[i];
  return s;
}

PatternEncoder::PatternEncoder(const EncoderConfig& cfg, Rng& rng)
    : filter_(rng),
      cell_rows_(std::max<std::size_t>(cfg.image_rows / cfg.patch, 1)),
      cell_cols_(std::max<std::size_t>(cfg.image_cols / cfg.patch, 1)),
      head_(cell_rows_ * cell_cols_, cfg.d, cfg.d, rng) {}

Tensor PatternEncoder::forward(const Tensor& images, NormMode mode) {
  Tensor residual = filter_(images);
  Tensor energy = cell_mean_pool(mul(residual, residual), cell_rows_, cell_cols_);
  return head_(energy, mode);
}

void PatternEncoder::enumerate(const std::string& prefix, StateList& out) {
  out.push_back({prefix + ".bayar", StateEntry::Kind::kParam, filter_.kernel, nullptr});
  head_.enumerate(prefix + ".head", out);
}

// ---------------------------------------------------------------------------

SemanticsEncoder::SemanticsEncoder(const EncoderConfig& cfg, Rng& rng)
    : patch_(cfg.patch), rows_(cfg.image_rows), cols_(cfg.image_cols),
      proj_(cfg.patch * cfg.patch, cfg.d, rng),
      positions_(sinusoidal_positions(cfg.patches(), cfg.d)) {
  if (cfg.patch == 0 || cfg.image_rows % cfg.patch != 0 || cfg.image_cols % cfg.patch != 0)
    throw DimensionError("semantics encoder: patch " + std::to_string(cfg.patch) +
                         " does not tile image " + to_string({cfg.image_rows, cfg.image_cols}));
  if (cfg.frozen_semantics) {
    proj_.weight.set_requires_grad(false);
    proj_.bias.set_requires_grad(false);
  }
}

Tensor SemanticsEncoder::forward(const Batch& batch) const {
  if (batch.rows != rows_ || batch.cols != cols_)
    throw DimensionError("semantics encoder: image " + to_string({batch.rows, batch.cols}) +
                         " but encoder expects " + to_string({rows_, cols_}));
  const std::size_t pr = rows_ / patch_, pc = cols_ / patch_, p = pr * pc, pp = patch_ * patch_;
  std::vector<double> patches(batch.size * p * pp);
  for (std::size_t b = 0; b < batch.size; ++b)
    for (std::size_t r = 0; r < pr; ++r)
      for (std::size_t c = 0; c < pc; ++c)
        for (std::size_t u = 0; u < patch_; ++u)
          for (std::size_t v = 0; v < patch_; ++v)
            patches[((b * p) + r * pc + c) * pp + u * patch_ + v] =
                batch.images[(b * rows_ + r * patch_ + u) * cols_ + c * patch_ + v];
  Tensor x = Tensor::from({batch.size, p, pp}, std::move(patches));
  return add(proj_(x), positions_);
}

void SemanticsEncoder::enumerate(const std::string& prefix, StateList& out) const {
  const auto kind = proj_.weight.requires_grad() ? StateEntry::Kind::kParam : StateEntry::Kind::kFrozen;
  out.push_back({prefix + ".proj.weight", kind, proj_.weight, nullptr});
  out.push_back({prefix + ".proj.bias", kind, proj_.bias, nullptr});
}

// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(const EncoderConfig& cfg, Rng& rng)
    : max_len_(cfg.max_len), positions_(sinusoidal_positions(cfg.max_len, cfg.d)) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> t(cfg.vocab * cfg.d);
  for (auto& x : t) x = dist(rng);
  table_ = Tensor::from({cfg.vocab, cfg.d}, std::move(t), !cfg.frozen_text);
}

Tensor TextEncoder::lookup(std::span<const std::int64_t> ids, std::size_t batch) const {
  const std::size_t d = table_.dim(1);
  Tensor e = reshape(embedding(table_, ids), {batch, max_len_, d});
  return add(e, positions_);
}

Tensor TextEncoder::forward(const Batch& batch) const {
  if (batch.max_len != max_len_)
    throw DimensionError("text encoder: batch max_len " + std::to_string(batch.max_len) +
                         " != " + std::to_string(max_len_));
  return lookup(batch.ids, batch.size);
}

Tensor TextEncoder::encode(std::span<const std::int64_t> ids) const {
  return lookup(fit_length(ids, max_len_), 1);
}

void TextEncoder::enumerate(const std::string& prefix, StateList& out) const {
  const auto kind = table_.requires_grad() ? StateEntry::Kind::kParam : StateEntry::Kind::kFrozen;
  out.push_back({prefix + ".embedding", kind, table_, nullptr});
}

}  // namespace bmr
