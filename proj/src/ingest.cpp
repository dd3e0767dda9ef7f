#include "bmr/ingest.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bmr/data.hpp"

namespace bmr {

namespace {

using Json = nlohmann::json;

const std::vector<std::string> kReserved{"<pad>", "<unk>", "No", "text", "provided."};

Image inline_image(const Json& j) {
  for (const char* key : {"height", "width", "encoding", "base64"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("inline image: missing '") + key + "'");
  if (j.at("encoding") != "f64le")
    throw std::invalid_argument("inline image: unsupported encoding " + j.at("encoding").dump());
  Image img;
  img.rows = j.at("height").get<std::size_t>();
  img.cols = j.at("width").get<std::size_t>();
  auto bytes = base64_decode(j.at("base64").get<std::string>());
  if (bytes.size() != img.rows * img.cols * 8)
    throw std::invalid_argument("inline image: " + std::to_string(bytes.size()) + " bytes for " +
                                std::to_string(img.rows) + "x" + std::to_string(img.cols));
  img.pixels.resize(img.rows * img.cols);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    img.pixels[i] = std::bit_cast<double>(v);
  }
  return img;
}

Json image_json(const Image& img) {
  std::vector<unsigned char> bytes(img.pixels.size() * 8);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto v = std::bit_cast<std::uint64_t>(img.pixels[i]);
    for (std::size_t b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>((v >> (8 * b)) & 0xFF);
  }
  return Json{{"height", img.rows}, {"width", img.cols}, {"encoding", "f64le"}, {"base64", base64_encode(bytes)}};
}

}  // namespace

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : words_(kReserved) {
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<std::int64_t>(i));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.index_.clear();
  for (auto& w : words)
    if (std::find(kReserved.begin(), kReserved.end(), w) == kReserved.end()) v.words_.push_back(std::move(w));
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.index_.emplace(v.words_[i], static_cast<std::int64_t>(i)).second)
      throw std::invalid_argument("vocabulary: duplicate word '" + v.words_[i] + "'");
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<NewsRecord>& records, std::size_t max_size) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> stats;  // count, first seen
  std::size_t order = 0;
  for (const auto& r : records)
    for (auto& w : split_words(r.text)) {
      auto [it, fresh] = stats.try_emplace(w, 0, order);
      if (fresh) ++order;
      ++it->second.first;
    }
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(stats.begin(), stats.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });
  std::vector<std::string> words;
  for (auto& [w, s] : ranked) {
    if (std::find(kReserved.begin(), kReserved.end(), w) != kReserved.end()) continue;
    if (words.size() + kReserved.size() >= max_size) break;
    words.push_back(w);
  }
  return from_words(std::move(words));
}

std::int64_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? token::kUnknown : it->second;
}

const std::string& Vocabulary::word(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocabulary::encode(const std::string& text) const {
  std::vector<std::int64_t> out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const std::int64_t> ids) const {
  std::string out;
  for (auto i : ids) out += (out.empty() ? "" : " ") + word(i);
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

Vocabulary synthetic_vocabulary() {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < SignalSpec::kFillerWords; ++i) words.push_back("w" + std::to_string(i));
  for (std::size_t i = 0; i < SignalSpec::kTopics; ++i) words.push_back("topic" + std::to_string(i));
  for (std::size_t i = 0; i < 2 * SignalSpec::kClassWords; ++i) words.push_back("c" + std::to_string(i));
  return Vocabulary::from_words(std::move(words));
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
    std::uint32_t v = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (n > 1) v |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (n > 2) v |= bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += n > 1 ? kB64[(v >> 6) & 63] : '=';
    out += n > 2 ? kB64[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  int table[256];
  std::fill(std::begin(table), std::end(table), -1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<unsigned char> out;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (char c : text) {
    if (c == '=') {
      ++pad;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    const int v = table[static_cast<unsigned char>(c)];
    if (v < 0 || pad > 0) throw std::invalid_argument("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((acc >> bits) & 0xFF));
    }
  }
  if (pad > 2) throw std::invalid_argument("base64: bad padding");
  return out;
}

// ---------------------------------------------------------------------------

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto next_token = [&]() {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok += static_cast<char>(c);
    }
    if (tok.empty()) throw std::runtime_error(path + ": truncated PGM header");
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P2" && magic != "P5") throw std::runtime_error(path + ": not a PGM (magic " + magic + ")");
  Image img;
  img.cols = std::stoul(next_token());
  img.rows = std::stoul(next_token());
  const unsigned long maxval = std::stoul(next_token());
  if (maxval == 0 || maxval > 65535) throw std::runtime_error(path + ": bad PGM maxval");
  img.pixels.resize(img.rows * img.cols);
  for (auto& p : img.pixels) {
    unsigned long v;
    if (magic == "P2") {
      v = std::stoul(next_token());
    } else if (maxval < 256) {
      const int c = in.get();
      if (c == EOF) throw std::runtime_error(path + ": truncated PGM data");
      v = static_cast<unsigned long>(c);
    } else {
      const int hi = in.get(), lo = in.get();
      if (lo == EOF) throw std::runtime_error(path + ": truncated PGM data");
      v = static_cast<unsigned long>(hi) << 8 | static_cast<unsigned long>(lo);
    }
    p = std::min(1.0, static_cast<double>(v) / static_cast<double>(maxval));
  }
  return img;
}

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.cols << " " << img.rows << "\n65535\n";
  for (double p : img.pixels) {
    const auto v = static_cast<unsigned>(std::lround(std::clamp(p, 0.0, 1.0) * 65535.0));
    out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xFF));
  }
}

// ---------------------------------------------------------------------------

std::vector<NewsRecord> read_news_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<NewsRecord> out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw IngestError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw IngestError(where + "expected a JSON object");
    NewsRecord r;
    if (!j.contains("id") || !(j["id"].is_string() || j["id"].is_number_integer()))
      throw IngestError(where + "missing or invalid 'id'");
    r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    if (auto [it, fresh] = seen.emplace(r.id, lineno); !fresh)
      throw IngestError(where + "duplicate id '" + r.id + "' (first on line " + std::to_string(it->second) + ")");
    if (j.contains("text") && !j["text"].is_null()) {
      if (!j["text"].is_string()) throw IngestError(where + "'text' must be a string");
      r.text = j["text"].get<std::string>();
    }
    if (j.contains("label") && !j["label"].is_null()) {
      const auto& l = j["label"];
      if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1))
        throw IngestError(where + "'label' must be 0, 1 or null");
      r.label = l.get<int>() == 1 ? Label::kFake : Label::kReal;
    }
    if (j.contains("image") && !j["image"].is_null()) {
      const auto& im = j["image"];
      try {
        if (im.is_string()) {
          auto p = std::filesystem::path(im.get<std::string>());
          if (p.is_relative()) p = base / p;
          r.image = read_pgm(p.string());
        } else if (im.is_object()) {
          r.image = inline_image(im);
        } else {
          throw std::invalid_argument("expected a path, an inline grid or null");
        }
      } catch (const std::exception& e) {
        throw IngestError(where + "record '" + r.id + "': unreadable image: " + e.what());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_news_jsonl(const std::string& path, const std::vector<NewsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  for (const auto& r : records) {
    Json j{{"id", r.id}, {"text", r.text}};
    j["image"] = r.image ? image_json(*r.image) : Json(nullptr);
    j["label"] = r.label == Label::kUnknown ? Json(nullptr) : Json(static_cast<int>(r.label));
    out << j.dump() << "\n";
  }
}

std::vector<RawNews> to_raw_news(const std::vector<NewsRecord>& records, const Vocabulary& vocab,
                                 const CleanRules& rules) {
  std::vector<RawNews> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    RawNews n;
    n.image = r.image ? *r.image : Image::zeros(rules.canonical_rows, rules.canonical_cols);
    n.text = vocab.encode(r.text);
    n.label = r.label;
    n = clean(n, rules);
    n.image = resize(n.image, rules.canonical_rows, rules.canonical_cols);
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<NewsRecord> to_records(const std::vector<RawNews>& items, const Vocabulary& vocab,
                                   const std::string& id_prefix) {
  std::vector<NewsRecord> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    out.push_back({id_prefix + std::to_string(i), vocab.decode(items[i].text), items[i].image, items[i].label});
  return out;
}

IngestResult ingest(const std::string& path, const Vocabulary& vocab, const CleanRules& rules, bool require_labels) {
  auto records = read_news_jsonl(path);
  if (require_labels)
    for (const auto& r : records)
      if (r.label == Label::kUnknown) throw IngestError(path + ": record '" + r.id + "' has no label");
  IngestResult res;
  res.items = to_raw_news(records, vocab, rules);
  for (auto& r : records) res.ids.push_back(std::move(r.id));
  return res;
}

}  // namespace bmr
