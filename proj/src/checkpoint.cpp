#include "bmr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bmr {

namespace {

constexpr char kMagic[8] = {'B', 'M', 'R', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

const char* kind_name(StateEntry::Kind k) {
  switch (k) {
    case StateEntry::Kind::kParam: return "param";
    case StateEntry::Kind::kFrozen: return "frozen";
    case StateEntry::Kind::kBuffer: return "buffer";
  }
  return "?";
}

std::span<const double> values(const StateEntry& e) {
  if (e.kind == StateEntry::Kind::kBuffer) return *e.buffer;
  return e.tensor.data();
}

Shape shape_of(const StateEntry& e) {
  if (e.kind == StateEntry::Kind::kBuffer) return {e.buffer->size()};
  return e.tensor.shape();
}

}  // namespace

std::string serialize_checkpoint(BmrModel& model, const std::vector<std::string>& vocab, const Json& extra) {
  auto st = model.state();
  Json entries = Json::array();
  std::string payload;
  for (const auto& e : st) {
    auto v = values(e);
    entries.push_back(Json{{"name", e.name},
                           {"kind", kind_name(e.kind)},
                           {"shape", shape_of(e)},
                           {"offset", payload.size()},
                           {"count", v.size()}});
    for (double x : v) put_le(payload, std::bit_cast<std::uint64_t>(x));
  }
  const Json header{{"config", config_to_json(model.config())}, {"vocab", vocab}, {"extra", extra},
                    {"entries", entries}};
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint64_t>(h.size()));
  out += h;
  out += payload;
  return out;
}

void save_checkpoint(const std::string& path, BmrModel& model, const std::vector<std::string>& vocab,
                     const Json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  const auto bytes = serialize_checkpoint(model, vocab, extra);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = get_le<std::uint64_t>(bytes, 12);
  if (20 + hlen > bytes.size()) throw CheckpointError("checkpoint: truncated header");
  Json header;
  try {
    header = Json::parse(bytes.substr(20, hlen));
  } catch (const Json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: header is not JSON: ") + e.what());
  }
  const std::size_t base = 20 + hlen;

  std::vector<std::string> problems;
  BmrConfig cfg = config_from_json(header.at("config"), problems);
  if (!problems.empty()) throw ConfigError(problems);
  LoadedCheckpoint out;
  out.model = std::make_unique<BmrModel>(cfg, 0);
  out.vocab = header.value("vocab", std::vector<std::string>{});
  out.extra = header.value("extra", Json::object());

  auto st = out.model->state();
  const auto& entries = header.at("entries");
  if (entries.size() != st.size())
    throw CheckpointError("checkpoint: " + std::to_string(entries.size()) + " entries, model expects " +
                          std::to_string(st.size()));
  for (std::size_t i = 0; i < st.size(); ++i) {
    const auto& je = entries[i];
    auto& e = st[i];
    const auto name = je.at("name").get<std::string>();
    if (name != e.name) throw CheckpointError("checkpoint: entry " + name + " where " + e.name + " was expected");
    if (je.at("shape").get<Shape>() != shape_of(e))
      throw CheckpointError("checkpoint: shape mismatch for " + name);
    const auto offset = je.at("offset").get<std::size_t>();
    const auto count = je.at("count").get<std::size_t>();
    if (base + offset + 8 * count > bytes.size()) throw CheckpointError("checkpoint: truncated payload at " + name);
    std::vector<double> v(count);
    for (std::size_t k = 0; k < count; ++k)
      v[k] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, base + offset + 8 * k));
    if (e.kind == StateEntry::Kind::kBuffer) *e.buffer = std::move(v);
    else std::copy(v.begin(), v.end(), e.tensor.mutable_data().begin());
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace bmr
