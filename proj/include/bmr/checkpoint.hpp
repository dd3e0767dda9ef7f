#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bmr/config.hpp"
#include "bmr/model.hpp"

// Layout:
//   8 bytes   magic "BMRCKPT\0"
//   u32 LE    format version (1)
//   u64 LE    header length H
//   H bytes   JSON header:
//               {"config": {...}, "vocab": [...], "extra": {...},
//                "entries": [{"name", "kind": "param"|"frozen"|"buffer",
//                             "shape": [...], "offset", "count"}]}
//   payload   f64 LE values; entry offsets are byte offsets into the payload
namespace bmr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(BmrModel& model, const std::vector<std::string>& vocab = {},
                                 const Json& extra = Json::object());
void save_checkpoint(const std::string& path, BmrModel& model, const std::vector<std::string>& vocab = {},
                     const Json& extra = Json::object());

struct LoadedCheckpoint {
  std::unique_ptr<BmrModel> model;
  std::vector<std::string> vocab;
  Json extra;
};

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace bmr
