#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hatsc/rng.hpp"

namespace hatsc {

// One (noisy source, clean target) training pair. Provenance tracks which
// noise channel produced the source.
struct CorpusPair {
  enum class Provenance { kEdit, kPhonetic, kIdentity };

  std::string source;
  std::string target;
  Provenance provenance = Provenance::kEdit;

  bool operator==(const CorpusPair&) const = default;
};

std::string provenance_str(CorpusPair::Provenance p);
CorpusPair::Provenance provenance_parse(const std::string& s);

// Word -> phoneme-sequence map (ARPAbet-style symbols, no stress marks).
class PhoneticLexicon {
 public:
  static PhoneticLexicon load_file(const std::string& path);
  static PhoneticLexicon from_text(const std::string& text);

  bool contains(const std::string& word) const;
  // Missing word is a data error; check contains() first for optional use.
  const std::vector<std::string>& phonemes(const std::string& word) const;
  size_t size() const { return entries_.size(); }
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

 private:
  // Ordered map so iteration (and anything derived from it) is deterministic.
  std::map<std::string, std::vector<std::string>> entries_;
};

// Cosine similarity between bag-of-phoneme-bigram count vectors. The bags
// include start/end sentinel bigrams so word onsets and endings carry the
// same weight as interior transitions.
double phoneme_similarity(const std::vector<std::string>& g1, const std::vector<std::string>& g2);

// Applies 1..max_edits random character edits (insert/delete/substitute,
// uniform positions, A-Z alphabet); the result always differs from the input
// and stays within Levenshtein distance max_edits. max_edits=0 is identity.
std::string edit_noise(const std::string& word, int max_edits, Rng& rng);

// Precomputed candidate search for sound-alike replacements: spans of 1-2
// words map to 1-2 lexicon words whose combined phoneme sequence has
// similarity > threshold. Candidate lists are cached per span text; the
// cache makes this type single-threaded (use one instance per worker).
class PhoneticIndex {
 public:
  PhoneticIndex(const PhoneticLexicon& lexicon, double threshold);

  // Replacement phrases (1 or 2 words joined by a space) for the given span,
  // excluding the span's own text. Empty when the span has no lexicon
  // pronunciation or nothing clears the threshold.
  const std::vector<std::string>& candidates(const std::vector<std::string>& span_words);

  double threshold() const { return threshold_; }
  const PhoneticLexicon& lexicon() const { return lexicon_; }

 private:
  struct WordPhonetics {
    std::string first, last;                 // boundary phonemes
    std::map<std::string, int> interior;     // bigram counts, no sentinels
    double self_dot;                         // squared norm with sentinels
    const std::vector<std::string>* phonemes;
  };

  const PhoneticLexicon& lexicon_;
  double threshold_;
  std::vector<std::string> words_;                       // deterministic order
  std::unordered_map<std::string, WordPhonetics> info_;
  std::unordered_map<std::string, std::vector<size_t>> by_first_;  // first phoneme -> word idx
  std::unordered_map<std::string, std::vector<size_t>> by_last_;
  std::unordered_map<std::string, std::vector<std::string>> cache_;
};

// Replace one random span of the phrase with a sound-alike candidate. Falls
// back to a character-edit on one random word when no span has candidates,
// so it always returns a phrase different from the input.
std::string phonetic_noise(const std::string& phrase, PhoneticIndex& index, Rng& rng);

// Up to max_variants distinct noisy sources for one clean phrase, sampled
// uniformly without replacement from the union of edit-noise and
// phonetic-noise candidates. Every pair's target is the input phrase.
std::vector<CorpusPair> generate_pairs(const std::string& phrase, PhoneticIndex& index,
                                       int max_variants, Rng& rng, int max_edits = 3);

struct SplitCorpus {
  std::vector<CorpusPair> train, dev, test;
};

// Adds identity pairs until they form identity_fraction of the final set,
// then splits by hashing the target phrase so a clean phrase never appears
// in two splits. Split sizes land within one phrase group of the ratios.
SplitCorpus augment_and_split(const std::vector<CorpusPair>& pairs, double identity_fraction,
                              std::array<double, 3> ratios, uint64_t seed);

// Full deterministic pipeline: per-phrase RNG streams derived from the seed,
// so the output is independent of phrase order and worker scheduling.
struct SynthConfig {
  int max_edits = 3;
  double threshold = 0.6;
  int max_variants = 5;
  double identity_fraction = 0.15;
  std::array<double, 3> ratios{0.85, 0.05, 0.10};
  uint64_t seed = 1;
};

struct SynthResult {
  SplitCorpus splits;
  size_t phrases_used = 0;
  size_t phrases_skipped = 0;  // word count outside [2,5] after normalization
};

SynthResult synthesize_corpus(const std::vector<std::string>& raw_phrases,
                              const PhoneticLexicon& lexicon, const SynthConfig& config);

// TSV persistence: `<source>\t<target>\t<provenance>` per line.
void save_pairs(const std::string& path, const std::vector<CorpusPair>& pairs);
std::vector<CorpusPair> load_pairs(const std::string& path);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace hatsc
