#include "bmr/pipeline.hpp"

namespace bmr {

LoadedData load_dataset(const RunConfig& rc) {
  const auto rules = rc.model.clean_rules();
  LoadedData out;
  if (!rc.train_path.empty()) {
    auto train_records = read_news_jsonl(rc.train_path);
    out.vocab = Vocabulary::build(train_records, rc.model.encoder.vocab);
    for (const auto& r : train_records)
      if (r.label == Label::kUnknown) throw IngestError(rc.train_path + ": record '" + r.id + "' has no label");
    out.data.train = to_raw_news(train_records, out.vocab, rules);
    out.data.test = ingest(rc.test_path, out.vocab, rules).items;
  } else {
    out.vocab = synthetic_vocabulary();
    auto corpus = synth_corpus(rc.synth.n, rc.synth.spec, rc.synth.seed);
    for (auto& n : corpus.train) out.data.train.push_back(clean(n, rules));
    for (auto& n : corpus.test) out.data.test.push_back(clean(n, rules));
  }
  if (out.data.train.empty()) throw IngestError("training set is empty");
  if (out.data.test.empty()) throw IngestError("test set is empty");
  return out;
}

}  // namespace bmr
