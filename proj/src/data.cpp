#include "hatsc/data.hpp"

#include <algorithm>

#include "hatsc/decode.hpp"
#include "hatsc/errors.hpp"

namespace hatsc {

VocabSet build_vocabs(const std::vector<CorpusPair>& train_pairs, int streams) {
  if (streams < 1 || streams > 3) {
    throw UsageError("build_vocabs: streams must be between 1 and 3");
  }
  if (train_pairs.empty()) throw DataError("build_vocabs: no training pairs");

  std::vector<std::string> sources, targets;
  sources.reserve(train_pairs.size());
  targets.reserve(train_pairs.size());
  for (const CorpusPair& p : train_pairs) {
    sources.push_back(p.source);
    targets.push_back(p.target);
  }

  VocabSet vocabs;
  for (int s = 1; s <= streams; ++s) {
    vocabs.src.push_back(Vocabulary::build(sources, s, "src" + std::to_string(s)));
  }
  vocabs.tgt = Vocabulary::build(targets, 1, "tgt");
  return vocabs;
}

void save_vocabs(const std::string& prefix, const VocabSet& vocabs) {
  for (int s = 0; s < vocabs.streams(); ++s) {
    vocabs.src[static_cast<size_t>(s)].save_file(prefix + ".src" + std::to_string(s + 1) +
                                                 ".vocab");
  }
  vocabs.tgt.save_file(prefix + ".tgt.vocab");
}

VocabSet load_vocabs(const std::string& prefix, int streams) {
  if (streams < 1 || streams > 3) {
    throw UsageError("load_vocabs: streams must be between 1 and 3");
  }
  VocabSet vocabs;
  for (int s = 1; s <= streams; ++s) {
    vocabs.src.push_back(Vocabulary::load_file(prefix + ".src" + std::to_string(s) + ".vocab"));
  }
  vocabs.tgt = Vocabulary::load_file(prefix + ".tgt.vocab");
  return vocabs;
}

void apply_vocab_sizes(ModelConfig& config, const VocabSet& vocabs) {
  config.streams = vocabs.streams();
  config.src_vocab_sizes.clear();
  for (const Vocabulary& v : vocabs.src) config.src_vocab_sizes.push_back(v.size());
  config.tgt_vocab_size = vocabs.tgt.size();
}

std::vector<std::vector<int>> encode_source(const std::string& phrase, const VocabSet& vocabs) {
  const std::string norm = normalize(phrase);
  if (norm.empty()) throw DataError("encode_source: phrase is empty after normalization");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<size_t>(vocabs.streams()));
  for (int s = 0; s < vocabs.streams(); ++s) {
    std::vector<int> ids =
        vocabs.src[static_cast<size_t>(s)].encode(tokenize(norm, s + 1));
    ids.push_back(kEosId);
    out.push_back(std::move(ids));
  }
  return out;
}

Sample make_sample(const CorpusPair& pair, const VocabSet& vocabs) {
  Sample sample;
  sample.src = encode_source(pair.source, vocabs);
  const std::string norm = normalize(pair.target);
  if (norm.empty()) throw DataError("make_sample: target is empty after normalization");
  sample.tgt = vocabs.tgt.encode(tokenize_target(norm));
  sample.tgt.push_back(kEosId);
  return sample;
}

std::vector<Sample> make_samples(const std::vector<CorpusPair>& pairs, const VocabSet& vocabs) {
  std::vector<Sample> samples;
  samples.reserve(pairs.size());
  for (const CorpusPair& p : pairs) samples.push_back(make_sample(p, vocabs));
  return samples;
}

std::string decode_target(const std::vector<int>& ids, const VocabSet& vocabs) {
  return detokenize(vocabs.tgt.decode(ids));
}

CorrectionResult correct(HATModel& model, const VocabSet& vocabs, const std::string& raw_phrase,
                         int beam_width, int max_len) {
  if (vocabs.streams() != model.config().streams) {
    throw UsageError("correct: vocabulary set and model disagree on stream count");
  }
  Sample sample;
  sample.src = encode_source(raw_phrase, vocabs);
  DecodeResult best = decode_beam(model, sample, beam_width, max_len);
  CorrectionResult out;
  out.text = decode_target(best.ids, vocabs);
  out.score = best.score;
  out.logprob = best.logprob;
  out.truncated = best.truncated;
  return out;
}

EvalResult evaluate_model(HATModel& model, const VocabSet& vocabs,
                          const std::vector<CorpusPair>& pairs, int beam_width, int batch_size) {
  if (pairs.empty()) throw UsageError("evaluate_model: no pairs given");
  if (beam_width < 1) throw UsageError("evaluate_model: beam width must be at least 1");
  if (batch_size < 1) throw UsageError("evaluate_model: batch size must be at least 1");

  EvalResult result;
  result.hypotheses.reserve(pairs.size());

  if (beam_width == 1) {
    for (size_t at = 0; at < pairs.size(); at += static_cast<size_t>(batch_size)) {
      const size_t end = std::min(pairs.size(), at + static_cast<size_t>(batch_size));
      std::vector<Sample> chunk;
      chunk.reserve(end - at);
      for (size_t i = at; i < end; ++i) {
        Sample s;
        s.src = encode_source(pairs[i].source, vocabs);
        chunk.push_back(std::move(s));
      }
      for (const DecodeResult& r : decode_greedy(model, chunk)) {
        result.hypotheses.push_back(decode_target(r.ids, vocabs));
        result.truncated += r.truncated ? 1 : 0;
      }
    }
  } else {
    for (const CorpusPair& p : pairs) {
      Sample s;
      s.src = encode_source(p.source, vocabs);
      DecodeResult r = decode_beam(model, s, beam_width);
      result.hypotheses.push_back(decode_target(r.ids, vocabs));
      result.truncated += r.truncated ? 1 : 0;
    }
  }

  std::vector<std::pair<std::string, std::string>> ref_hyp;
  ref_hyp.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    ref_hyp.emplace_back(normalize(pairs[i].target), result.hypotheses[i]);
  }
  result.report = evaluate_pairs(ref_hyp);
  return result;
}

}  // namespace hatsc
