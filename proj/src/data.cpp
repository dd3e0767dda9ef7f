#include "bmr/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace bmr {

std::vector<ConsistencyPair> build_consistency_set(std::span<const RawNews> real_news,
                                                   std::size_t k, std::uint64_t seed) {
  if (k % 4 != 0) throw std::invalid_argument("consistency set: k=" + std::to_string(k) + " is not divisible by 4");
  if (k / 2 > real_news.size() || (k > 0 && real_news.size() < 2))
    throw std::invalid_argument("consistency set: k=" + std::to_string(k) + " needs " +
                                std::to_string(std::max<std::size_t>(k / 2, 2)) +
                                " real news, have " + std::to_string(real_news.size()));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(real_news.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<ConsistencyPair> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k / 2; ++i) {
    const RawNews& n = real_news[order[i]];
    out.push_back({n.image, n.text, true, order[i], order[i]});
  }
  std::uniform_int_distribution<std::size_t> pick(0, real_news.size() - 1);
  for (std::size_t i = 0; i < k / 4; ++i) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    out.push_back({real_news[a].image, real_news[b].text, false, a, b});
    out.push_back({real_news[b].image, real_news[a].text, false, b, a});
  }
  return out;
}

std::size_t default_consistency_size(std::size_t n_real) {
  if (n_real < 2) return 0;
  return (2 * n_real) / 4 * 4;
}

Batch make_pair_batch(std::span<const ConsistencyPair* const> pairs, const EncoderConfig& cfg) {
  std::vector<RawNews> items;
  items.reserve(pairs.size());
  for (const auto* p : pairs) items.push_back({p->image, p->text, Label::kUnknown});
  Batch b = Batch::from(std::span<const RawNews>(items), cfg);
  for (std::size_t i = 0; i < pairs.size(); ++i) b.labels[i] = pairs[i]->matched ? 1.0 : 0.0;
  return b;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::int64_t kFillerBase = token::kFirstWord;
constexpr std::int64_t kTopicBase = kFillerBase + SignalSpec::kFillerWords;
constexpr std::int64_t kClassBase = kTopicBase + SignalSpec::kTopics;

RawNews make_item(Label label, const SignalSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const bool fake = label == Label::kFake;
  // Class a signal expresses: the true class, or a random one with prob signal_noise.
  auto expressed = [&](bool enabled) {
    if (!enabled || u01(rng) < spec.signal_noise) return coin(rng);
    return fake;
  };
  const bool noisy_pixels = spec.pattern ? expressed(true) : coin(rng);
  const bool top_bright = spec.semantics ? expressed(true) : coin(rng);
  const bool text_fake = spec.text ? expressed(true) : coin(rng);
  const bool mismatched = spec.consistency ? expressed(true) : false;

  std::uniform_int_distribution<std::size_t> topic_dist(0, SignalSpec::kTopics - 1);
  const std::size_t image_topic = topic_dist(rng);
  std::size_t text_topic = image_topic;
  if (mismatched)
    text_topic = (image_topic + 1 + std::uniform_int_distribution<std::size_t>(0, SignalSpec::kTopics - 2)(rng)) %
                 SignalSpec::kTopics;

  // image: smooth background + topic square + bright half + optional pixel noise
  const std::size_t R = spec.image_rows, C = spec.image_cols;
  Image img = Image::zeros(R, C);
  const double fx = coin(rng) ? 0.5 : 1.0, fy = coin(rng) ? 0.5 : 1.0;
  const double px = u01(rng) * 2 * std::numbers::pi, py = u01(rng) * 2 * std::numbers::pi;
  const std::size_t grid = 4;  // topics laid out on a 4x4 grid
  const std::size_t tr = image_topic / grid, tc = image_topic % grid;
  // The topic mark fills the half of its cell away from the image midline, so
  // its residual never overlaps the residual of the bright-half boundary.
  auto in_topic_rows = [&](std::size_t i) {
    const std::size_t first = tr * R / grid, last = (tr + 1) * R / grid, h = last - first;
    return tr < grid / 2 ? i < first + h / 2 : i >= last - h / 2;
  };
  std::uniform_real_distribution<double> noise(-spec.noise_amplitude, spec.noise_amplitude);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      double v = 0.16 + 0.06 * std::sin(2 * std::numbers::pi * fx * static_cast<double>(j) / static_cast<double>(C) + px) *
                           std::cos(2 * std::numbers::pi * fy * static_cast<double>(i) / static_cast<double>(R) + py);
      if (i * grid / R == tr && j * grid / C == tc && in_topic_rows(i)) v += 0.45;
      const bool top = i < R / 2;
      if (top == top_bright) v += 0.2;
      if (noisy_pixels) v += noise(rng);
      img.pixels[i * C + j] = std::clamp(v, 0.0, 1.0);
    }

  // text: two topic words, two class words, filler
  std::uniform_int_distribution<std::size_t> len_dist(spec.min_words, std::max(spec.min_words, spec.max_words));
  const std::size_t len = std::max<std::size_t>(len_dist(rng), 4);
  std::vector<std::int64_t> words;
  const auto topic_word = kTopicBase + static_cast<std::int64_t>(text_topic);
  words.push_back(topic_word);
  words.push_back(topic_word);
  std::uniform_int_distribution<std::int64_t> class_dist(0, SignalSpec::kClassWords - 1);
  const std::int64_t class_base = kClassBase + (text_fake ? 0 : static_cast<std::int64_t>(SignalSpec::kClassWords));
  words.push_back(class_base + class_dist(rng));
  words.push_back(class_base + class_dist(rng));
  std::uniform_int_distribution<std::int64_t> filler(0, SignalSpec::kFillerWords - 1);
  while (words.size() < len) words.push_back(kFillerBase + filler(rng));
  std::shuffle(words.begin(), words.end(), rng);
  return {std::move(img), std::move(words), label};
}

}  // namespace

SplitCorpus synth_corpus(std::size_t n, const SignalSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Label> labels(n, Label::kReal);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n / 2), Label::kFake);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<RawNews> items;
  items.reserve(n);
  for (Label l : labels) items.push_back(make_item(l, spec, rng));
  const std::size_t n_train = n * 4 / 5;
  SplitCorpus out;
  out.train.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
  return out;
}

std::vector<RawNews> filter_label(std::span<const RawNews> items, Label label) {
  std::vector<RawNews> out;
  for (const auto& n : items)
    if (n.label == label) out.push_back(n);
  return out;
}

}  // namespace bmr
