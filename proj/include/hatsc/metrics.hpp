#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hatsc {

// Unit-cost edit distance (insert / delete / substitute).
int64_t levenshtein(const std::string& a, const std::string& b);
int64_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Breakdown of one minimal-cost alignment, reference -> hypothesis:
// a deletion drops a reference unit, an insertion adds a hypothesis unit.
// Among equally cheap alignments the backtrace deterministically prefers
// match/substitute, then deletion, then insertion.
struct EditCounts {
  int64_t sub = 0;
  int64_t ins = 0;
  int64_t del = 0;

  int64_t edits() const { return sub + ins + del; }
  EditCounts& operator+=(const EditCounts& o) {
    sub += o.sub;
    ins += o.ins;
    del += o.del;
    return *this;
  }
  bool operator==(const EditCounts&) const = default;
};

EditCounts edit_counts(const std::string& ref, const std::string& hyp);
EditCounts edit_counts(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// Whitespace tokenization (what the word-level metrics operate on).
std::vector<std::string> split_words(const std::string& text);

// Corpus-level error rates over (reference, hypothesis) string pairs.
//   cer = 100 * sum(char edits) / sum(reference chars)   (spaces count)
//   wer = 100 * sum(word edits) / sum(reference words)
//   ser = 100 * (pairs with hypothesis != reference) / pairs
// Denominators are over the reference side only.
struct ErrorReport {
  double cer = 0.0;
  double wer = 0.0;
  double ser = 0.0;
  EditCounts char_counts;
  EditCounts word_counts;
  int64_t ref_chars = 0;
  int64_t ref_words = 0;
  int64_t pairs = 0;       // pairs actually evaluated
  int64_t mismatched = 0;  // pairs with hypothesis != reference (exact string)
  int64_t skipped = 0;     // pairs dropped for an empty reference
};

// Evaluates every (reference, hypothesis) pair; pairs whose reference is
// empty are skipped and counted. Throws UsageError on an empty list.
ErrorReport evaluate_pairs(const std::vector<std::pair<std::string, std::string>>& ref_hyp);

}  // namespace hatsc
