#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bmr/nn.hpp"

// Stub feature extractors for the three unimodal views. Each produces a token
// sequence of width d; a pretrained backbone could sit behind the same calls.
namespace bmr {

/// Single-channel image, row-major, values in [0, 1].
struct Image {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;

  static Image zeros(std::size_t rows, std::size_t cols) {
    return {rows, cols, std::vector<double>(rows * cols, 0.0)};
  }
  bool operator==(const Image&) const = default;
};

enum class Label : int { kReal = 0, kFake = 1, kUnknown = -1 };

struct RawNews {
  Image image;
  std::vector<std::int64_t> text;
  Label label = Label::kUnknown;
  bool operator==(const RawNews&) const = default;
};

/// Reserved token ids shared by the text encoder and the ingestion vocabulary.
namespace token {
inline constexpr std::int64_t kPad = 0;
inline constexpr std::int64_t kUnknown = 1;
/// "No text provided."
inline constexpr std::int64_t kPlaceholder[3] = {2, 3, 4};
inline constexpr std::int64_t kFirstWord = 5;
}  // namespace token

struct CleanRules {
  std::size_t min_side = 64;
  std::size_t min_words = 5;
  std::size_t canonical_rows = 16;
  std::size_t canonical_cols = 16;
};

/// Zeroes images with a side below min_side (to the canonical size) and
/// replaces texts shorter than min_words with the placeholder sequence.
RawNews clean(const RawNews& news, const CleanRules& rules);

/// Bilinear resample to rows x cols (identity when the size already matches).
Image resize(const Image& img, std::size_t rows, std::size_t cols);

struct EncoderConfig {
  std::size_t d = 32;
  std::size_t vocab = 5000;
  std::size_t image_rows = 16;
  std::size_t image_cols = 16;
  std::size_t patch = 4;
  std::size_t max_len = 16;
  bool frozen_semantics = true;
  bool frozen_text = true;

  std::size_t patches() const { return (image_rows / patch) * (image_cols / patch); }
};

/// A minibatch in encoder-ready layout.
struct Batch {
  std::size_t size = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t max_len = 0;
  std::vector<double> images;       // size * rows * cols
  std::vector<std::int64_t> ids;    // size * max_len, padded with token::kPad
  std::vector<double> labels;       // size

  static Batch from(std::span<const RawNews* const> items, const EncoderConfig& cfg);
  static Batch from(std::span<const RawNews> items, const EncoderConfig& cfg);
};

/// Truncates or pads (with token::kPad) to exactly max_len ids.
std::vector<std::int64_t> fit_length(std::span<const std::int64_t> ids, std::size_t max_len);

/// 3x3 constrained residual filter: centre fixed at -1, the other eight
/// weights sum to +1. The constraint is restored by project() after every
/// optimiser step; forward uses the kernel as stored.
struct BayarFilter {
  Tensor kernel;  // [3, 3]

  BayarFilter() = default;
  explicit BayarFilter(Rng& rng);

  void project();
  Tensor operator()(const Tensor& images) const { return conv2d_valid(images, kernel); }
  double off_centre_sum() const;
};

/// Image-pattern view: constrained filter -> per-cell residual energy -> MLP.
/// Emits one token per image, [B, d].
class PatternEncoder {
 public:
  PatternEncoder() = default;
  PatternEncoder(const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& images, NormMode mode);
  void enumerate(const std::string& prefix, StateList& out);
  BayarFilter& filter() { return filter_; }
  std::size_t cells() const { return cell_rows_ * cell_cols_; }

 private:
  BayarFilter filter_;
  std::size_t cell_rows_ = 0;
  std::size_t cell_cols_ = 0;
  Mlp head_;
};

/// Image-semantics view: non-overlapping patches, linear projection, plus
/// sinusoidal positions. [B, p, d].
class SemanticsEncoder {
 public:
  SemanticsEncoder() = default;
  SemanticsEncoder(const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Batch& batch) const;
  void enumerate(const std::string& prefix, StateList& out) const;
  const Linear& projection() const { return proj_; }

 private:
  std::size_t patch_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Linear proj_;
  Tensor positions_;
};

/// Text view: embedding lookup plus sinusoidal positions. [B, max_len, d].
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const EncoderConfig& cfg, Rng& rng);

  Tensor forward(const Batch& batch) const;
  /// Single sequence, padded/truncated to max_len: [1, max_len, d].
  Tensor encode(std::span<const std::int64_t> ids) const;
  void enumerate(const std::string& prefix, StateList& out) const;
  const Tensor& table() const { return table_; }

 private:
  Tensor lookup(std::span<const std::int64_t> ids, std::size_t batch) const;

  std::size_t max_len_ = 0;
  Tensor table_;
  Tensor positions_;
};

/// Raw images of a batch as a [B, H, W] tensor.
Tensor image_tensor(const Batch& batch);

}  // namespace bmr
