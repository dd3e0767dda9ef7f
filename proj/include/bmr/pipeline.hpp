#pragma once

#include "bmr/config.hpp"
#include "bmr/ingest.hpp"
#include "bmr/train.hpp"

namespace bmr {

struct LoadedData {
  Dataset data;
  Vocabulary vocab;
};

/// Train/test items for a run: ingested JSONL (vocabulary built from the
/// training file) or the configured synthetic corpus. Cleaning is applied in
/// both cases.
LoadedData load_dataset(const RunConfig& rc);

}  // namespace bmr
