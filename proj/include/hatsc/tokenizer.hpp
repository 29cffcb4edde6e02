#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace hatsc {

// Reserved vocabulary slots, identical across every stream.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kSepId = 4;  // the word separator token `#`

inline constexpr const char* kSepToken = "#";

// Uppercase, collapse whitespace runs, strip punctuation except apostrophes.
// Raw text goes through here before any tokenizer call.
std::string normalize(const std::string& raw);

// Per-word overlapping character n-grams (stride 1, never crossing a word
// boundary), words joined by a standalone `#` token. A word shorter than n
// contributes one token equal to the whole word. n must be 1, 2 or 3.
// The phrase must already be normalized: nonempty, single spaces only.
std::vector<std::string> tokenize(const std::string& phrase, int n);

// Decoder-side stream: character unigrams with `#` separators.
std::vector<std::string> tokenize_target(const std::string& phrase);

// Inverse of the unigram stream: concatenate tokens, `#` becomes a space.
std::string detokenize(const std::vector<std::string>& tokens);

// Token <-> id bijection with fixed reserved ids. Non-reserved tokens are
// ordered by descending corpus frequency, ties alphabetically, so the same
// corpus always produces a byte-identical vocabulary file.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Counts tokenize(phrase, n) output over the whole corpus.
  static Vocabulary build(const std::vector<std::string>& corpus, int n, std::string stream_name);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int n() const { return n_; }
  const std::string& stream_name() const { return name_; }

  // Unknown tokens map to UNK; never throws.
  int id_of(const std::string& token) const;
  // Out-of-range ids are data corruption.
  const std::string& token_of(int id) const;
  int64_t frequency_of(int id) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  // Text format: one header line `hatsc-vocab\t<stream>\t<n>`, then one
  // record per token, `<id>\t<token>\t<frequency>`, reserved tokens first.
  std::string to_text() const;
  static Vocabulary from_text(const std::string& text);

  void save_file(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

 private:
  void add_reserved();

  std::vector<std::string> id_to_token_;
  std::vector<int64_t> frequency_;
  std::unordered_map<std::string, int> token_to_id_;
  std::string name_;
  int n_ = 0;
};

}  // namespace hatsc
