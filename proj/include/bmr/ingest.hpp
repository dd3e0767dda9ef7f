#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bmr/encoders.hpp"

namespace bmr {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One line of a JSONL news file before tokenisation.
struct NewsRecord {
  std::string id;
  std::string text;
  std::optional<Image> image;  // empty: no image
  Label label = Label::kUnknown;
};

/// Word <-> id table. Ids 0..4 are reserved: pad, unknown, "No", "text",
/// "provided.".
class Vocabulary {
 public:
  Vocabulary();
  /// Frequency-ranked (ties by first appearance) and capped at max_size ids
  /// including the reserved ones.
  static Vocabulary build(const std::vector<NewsRecord>& records, std::size_t max_size = 5000);
  static Vocabulary from_words(std::vector<std::string> words);

  std::int64_t id(const std::string& word) const;
  const std::string& word(std::int64_t id) const;
  std::vector<std::int64_t> encode(const std::string& text) const;
  std::string decode(std::span<const std::int64_t> ids) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int64_t> index_;
};

/// Whitespace tokenisation.
std::vector<std::string> split_words(const std::string& text);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

/// Grayscale PGM (P2 or P5, 8 or 16 bit) scaled to [0, 1].
Image read_pgm(const std::string& path);
/// Binary 16-bit PGM.
void write_pgm(const std::string& path, const Image& img);

/// Parses a JSONL file. Image paths resolve relative to the file. Errors carry
/// the line number (malformed JSON, missing fields, duplicate ids) or the
/// record id (unreadable image).
std::vector<NewsRecord> read_news_jsonl(const std::string& path);
/// Writes records with images inlined as exact f64 base64 grids.
void write_news_jsonl(const std::string& path, const std::vector<NewsRecord>& records);

/// Tokenises, cleans and resizes to the canonical image size.
std::vector<RawNews> to_raw_news(const std::vector<NewsRecord>& records, const Vocabulary& vocab,
                                 const CleanRules& rules);
/// Inverse of to_raw_news for already clean items (ids become words).
std::vector<NewsRecord> to_records(const std::vector<RawNews>& items, const Vocabulary& vocab,
                                   const std::string& id_prefix = "n");

struct IngestResult {
  std::vector<RawNews> items;
  std::vector<std::string> ids;
};

/// read_news_jsonl + to_raw_news. With require_labels, unlabeled records are
/// rejected.
IngestResult ingest(const std::string& path, const Vocabulary& vocab, const CleanRules& rules,
                    bool require_labels = true);

/// Word table matching the ids the synthetic corpus generator emits.
Vocabulary synthetic_vocabulary();

}  // namespace bmr
