#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bmr/encoders.hpp"

namespace bmr {

/// Image and text that either belong together (matched = true) or were taken
/// from two different news items.
struct ConsistencyPair {
  Image image;
  std::vector<std::int64_t> text;
  bool matched = false;
  // Indices into the real-news pool the image and text came from.
  std::size_t image_source = 0;
  std::size_t text_source = 0;
};

/// k/2 verbatim real items (matched) plus k/4 rounds that draw two distinct
/// items and emit both cross pairings (mismatched). Requires k % 4 == 0,
/// k/2 <= real_news.size() and at least two items.
std::vector<ConsistencyPair> build_consistency_set(std::span<const RawNews> real_news,
                                                   std::size_t k, std::uint64_t seed);

/// Largest valid k for a pool of n real items.
std::size_t default_consistency_size(std::size_t n_real);

/// Encoder-ready batch of pairs; labels carry the matched flag.
Batch make_pair_batch(std::span<const ConsistencyPair* const> pairs, const EncoderConfig& cfg);

/// Which views of the synthetic corpus carry the class signal.
struct SignalSpec {
  bool pattern = true;      // high-frequency noise planted in fake images
  bool semantics = true;    // brighter half of the image: top = fake, bottom = real
  bool text = true;         // class-indicative words
  bool consistency = true;  // fake items pair an image topic with a different text topic
  /// Per item and per signal, probability that the signal is drawn for a
  /// random class instead of the true one.
  double signal_noise = 0.0;
  std::size_t image_rows = 16;
  std::size_t image_cols = 16;
  std::size_t min_words = 6;
  std::size_t max_words = 8;
  double noise_amplitude = 0.03;

  static constexpr std::size_t kTopics = 16;
  static constexpr std::size_t kFillerWords = 40;
  static constexpr std::size_t kClassWords = 8;  // per class
  /// Ids used by the generator: reserved + filler + topic + class words.
  static constexpr std::size_t vocab_size() {
    return static_cast<std::size_t>(token::kFirstWord) + kFillerWords + kTopics + 2 * kClassWords;
  }
};

struct SplitCorpus {
  std::vector<RawNews> train;
  std::vector<RawNews> test;
};

/// Balanced labelled corpus of n items (exactly n/2 fake for even n),
/// shuffled and split 80/20 into train/test.
SplitCorpus synth_corpus(std::size_t n, const SignalSpec& spec, std::uint64_t seed);

/// Items with the given label.
std::vector<RawNews> filter_label(std::span<const RawNews> items, Label label);

}  // namespace bmr
