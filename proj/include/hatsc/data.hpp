#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hatsc/corpus.hpp"
#include "hatsc/metrics.hpp"
#include "hatsc/model.hpp"
#include "hatsc/tokenizer.hpp"

namespace hatsc {

// One vocabulary per input stream (stream s reads character s+1-grams) plus
// the output-character vocabulary. All of them are built from the training
// split only; dev/test tokens outside them map to UNK.
struct VocabSet {
  std::vector<Vocabulary> src;
  Vocabulary tgt;

  int streams() const { return static_cast<int>(src.size()); }
};

// Source vocabularies come from the pairs' source phrases, the target
// vocabulary from their target phrases.
VocabSet build_vocabs(const std::vector<CorpusPair>& train_pairs, int streams);

// Files live at `<prefix>.src<n>.vocab` and `<prefix>.tgt.vocab`.
void save_vocabs(const std::string& prefix, const VocabSet& vocabs);
VocabSet load_vocabs(const std::string& prefix, int streams);

// Copies the vocabulary sizes into a model configuration.
void apply_vocab_sizes(ModelConfig& config, const VocabSet& vocabs);

// Per-stream id sequences for one phrase, each ending in EOS.
std::vector<std::vector<int>> encode_source(const std::string& phrase, const VocabSet& vocabs);

// Training/eval sample: encoded source streams plus the EOS-terminated
// target character ids.
Sample make_sample(const CorpusPair& pair, const VocabSet& vocabs);
std::vector<Sample> make_samples(const std::vector<CorpusPair>& pairs, const VocabSet& vocabs);

// Decoded output ids (no BOS/EOS) back to a phrase string.
std::string decode_target(const std::vector<int>& ids, const VocabSet& vocabs);

// End-to-end correction of one raw phrase: tokenize, beam-search the output
// characters (width 1 is greedy), detokenize the best finished hypothesis.
// `truncated` reports that no hypothesis finished within the length cap.
struct CorrectionResult {
  std::string text;
  double score = 0.0;    // length-normalized log-probability
  double logprob = 0.0;  // unnormalized
  bool truncated = false;
};

CorrectionResult correct(HATModel& model, const VocabSet& vocabs, const std::string& raw_phrase,
                         int beam_width, int max_len = 0);

// Decodes every pair's source and scores the hypotheses against the targets.
// Width 1 runs batched greedy decoding in chunks of `batch_size`; wider beams
// decode pair by pair.
struct EvalResult {
  ErrorReport report;
  std::vector<std::string> hypotheses;  // aligned with the input pairs
  int64_t truncated = 0;
};

EvalResult evaluate_model(HATModel& model, const VocabSet& vocabs,
                          const std::vector<CorpusPair>& pairs, int beam_width,
                          int batch_size = 32);

}  // namespace hatsc
