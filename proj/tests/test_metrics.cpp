// Edit distance, alignment edit counts, and corpus error rates, checked
// against brute-force recursion and an independently coded rate computation.
#include <doctest.h>

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "hatsc/errors.hpp"
#include "hatsc/metrics.hpp"
#include "hatsc/rng.hpp"

using namespace hatsc;

namespace {

// Plain recursion with no memoization: an oracle that is obviously correct
// (only usable at tiny sizes).
template <typename Seq>
int64_t lev_rec(const Seq& a, const Seq& b, size_t i, size_t j) {
  if (i == a.size()) return static_cast<int64_t>(b.size() - j);
  if (j == b.size()) return static_cast<int64_t>(a.size() - i);
  int64_t best = lev_rec(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  best = std::min(best, lev_rec(a, b, i + 1, j) + 1);
  best = std::min(best, lev_rec(a, b, i, j + 1) + 1);
  return best;
}

std::string random_string(Rng& rng, int max_len) {
  const int len = static_cast<int>(rng.below(static_cast<uint64_t>(max_len) + 1));
  std::string s;
  for (int i = 0; i < len; ++i) s.push_back(static_cast<char>('A' + rng.below(3)));
  return s;
}

std::vector<std::string> random_words(Rng& rng, int max_len) {
  const int len = static_cast<int>(rng.below(static_cast<uint64_t>(max_len) + 1));
  std::vector<std::string> w;
  const char* pool[] = {"GO", "TO", "THE", "WORK"};
  for (int i = 0; i < len; ++i) w.push_back(pool[rng.below(4)]);
  return w;
}

}  // namespace

TEST_CASE("levenshtein distance: fixed points and brute-force agreement") {
  CHECK(levenshtein(std::string(""), std::string("ABC")) == 3);
  CHECK(levenshtein(std::string("ABC"), std::string("")) == 3);
  CHECK(levenshtein(std::string(""), std::string("")) == 0);
  CHECK(levenshtein(std::string("KITTEN"), std::string("SITTING")) == 3);
  CHECK(levenshtein(std::string("SUNDAY"), std::string("SATURDAY")) == 3);

  Rng rng(20240811);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string a = random_string(rng, 6);
    const std::string b = random_string(rng, 6);
    const int64_t d = levenshtein(a, b);
    CHECK(d == lev_rec(a, b, 0, 0));
    CHECK(d == levenshtein(b, a));      // symmetry
    CHECK(levenshtein(a, a) == 0);      // identity
    const std::string c = random_string(rng, 6);
    CHECK(levenshtein(a, c) <= d + levenshtein(b, c));  // triangle inequality
  }

  // Word-level overload against the same recursion.
  Rng wrng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<std::string> a = random_words(wrng, 5);
    const std::vector<std::string> b = random_words(wrng, 5);
    CHECK(levenshtein(a, b) == lev_rec(a, b, 0, 0));
  }
}

TEST_CASE("edit counts decompose the distance deterministically") {
  SUBCASE("frozen breakdowns") {
    CHECK(edit_counts(std::string("ABC"), std::string("AXC")) == EditCounts{1, 0, 0});
    CHECK(edit_counts(std::string("ABC"), std::string("AC")) == EditCounts{0, 0, 1});
    CHECK(edit_counts(std::string("AC"), std::string("ABC")) == EditCounts{0, 1, 0});
    // Diagonal-first tie order resolves "AB" -> "BA" as two substitutions.
    CHECK(edit_counts(std::string("AB"), std::string("BA")) == EditCounts{2, 0, 0});
    // Distance 3 with a length gap of 2 forces this exact split.
    CHECK(edit_counts(std::string("SUNDAY"), std::string("SATURDAY")) == EditCounts{1, 2, 0});
    CHECK(edit_counts(std::vector<std::string>{"THE", "SECOND", "HALF"},
                      std::vector<std::string>{"THE", "SICKEND", "HALF"}) == EditCounts{1, 0, 0});
    CHECK(edit_counts(std::vector<std::string>{"GO", "TO", "WORK"},
                      std::vector<std::string>{"GO", "TO", "TO", "WORK"}) == EditCounts{0, 1, 0});
  }

  SUBCASE("totals always match the distance; the length gap fixes ins - del") {
    Rng rng(99);
    for (int trial = 0; trial < 400; ++trial) {
      const std::string ref = random_string(rng, 8);
      const std::string hyp = random_string(rng, 8);
      const EditCounts c = edit_counts(ref, hyp);
      CHECK(c.edits() == levenshtein(ref, hyp));
      CHECK(c.ins - c.del ==
            static_cast<int64_t>(hyp.size()) - static_cast<int64_t>(ref.size()));
      CHECK(c.sub >= 0);
      CHECK(c.ins >= 0);
      CHECK(c.del >= 0);
    }
    Rng wrng(100);
    for (int trial = 0; trial < 150; ++trial) {
      const std::vector<std::string> ref = random_words(wrng, 5);
      const std::vector<std::string> hyp = random_words(wrng, 5);
      const EditCounts c = edit_counts(ref, hyp);
      CHECK(c.edits() == levenshtein(ref, hyp));
      CHECK(c.ins - c.del ==
            static_cast<int64_t>(hyp.size()) - static_cast<int64_t>(ref.size()));
    }
  }
}

TEST_CASE("split_words tokenizes on whitespace") {
  CHECK(split_words("GO TO WORK") == std::vector<std::string>{"GO", "TO", "WORK"});
  CHECK(split_words("  GO \t TO\nWORK  ") == std::vector<std::string>{"GO", "TO", "WORK"});
  CHECK(split_words("").empty());
  CHECK(split_words("   ").empty());
}

TEST_CASE("error rates over pair sets") {
  SUBCASE("a perfect hypothesis set scores zero everywhere") {
    std::vector<std::pair<std::string, std::string>> pairs = {
        {"GO TO WORK", "GO TO WORK"}, {"THE SECOND HALF", "THE SECOND HALF"}};
    ErrorReport r = evaluate_pairs(pairs);
    CHECK(r.cer == 0.0);
    CHECK(r.wer == 0.0);
    CHECK(r.ser == 0.0);
    CHECK(r.mismatched == 0);
    CHECK(r.pairs == 2);
    CHECK(r.ref_chars == 10 + 15);
    CHECK(r.ref_words == 6);
    CHECK(r.char_counts.edits() == 0);
  }

  SUBCASE("one of four ten-char references wrong by one char") {
    std::vector<std::pair<std::string, std::string>> pairs = {
        {"ABCDEFGHIJ", "ABCDEFGHIJ"},
        {"ABCDEFGHIJ", "ABCDEFGHIX"},  // one substitution
        {"ABCDEFGHIJ", "ABCDEFGHIJ"},
        {"ABCDEFGHIJ", "ABCDEFGHIJ"},
    };
    ErrorReport r = evaluate_pairs(pairs);
    CHECK(r.ser == doctest::Approx(25.0));
    CHECK(r.cer == doctest::Approx(2.5));  // 1 edit / 40 reference chars
    CHECK(r.wer == doctest::Approx(25.0));  // each reference is a single word
    CHECK(r.char_counts == EditCounts{1, 0, 0});
    CHECK(r.mismatched == 1);
  }

  SUBCASE("agrees with an independently coded computation of the same formulas") {
    Rng rng(4242);
    std::vector<std::pair<std::string, std::string>> pairs;
    const char* phrases[] = {"GO TO WORK", "THE SECOND HALF", "TWO OLD STATIONS",
                             "IN THE RAILWAY", "OLD BENCH"};
    for (int i = 0; i < 40; ++i) {
      std::string ref = phrases[rng.below(5)];
      std::string hyp = ref;
      // Corrupt roughly half the hypotheses with 1-2 random character edits.
      if (rng.below(2) == 0) {
        const int edits = 1 + static_cast<int>(rng.below(2));
        for (int e = 0; e < edits; ++e) {
          const size_t pos = rng.below(hyp.size());
          switch (rng.below(3)) {
            case 0: hyp[pos] = static_cast<char>('A' + rng.below(26)); break;
            case 1: hyp.insert(pos, 1, static_cast<char>('A' + rng.below(26))); break;
            default: if (hyp.size() > 1) hyp.erase(pos, 1); break;
          }
        }
      }
      pairs.emplace_back(ref, hyp);
    }

    // Oracle: separate accumulation built only on the distance function.
    int64_t char_edits = 0, word_edits = 0, chars = 0, words = 0, wrong = 0;
    for (const auto& [ref, hyp] : pairs) {
      char_edits += levenshtein(ref, hyp);
      word_edits += levenshtein(split_words(ref), split_words(hyp));
      chars += static_cast<int64_t>(ref.size());
      words += static_cast<int64_t>(split_words(ref).size());
      wrong += (ref != hyp) ? 1 : 0;
    }

    ErrorReport r = evaluate_pairs(pairs);
    CHECK(r.cer == doctest::Approx(100.0 * double(char_edits) / double(chars)).epsilon(1e-12));
    CHECK(r.wer == doctest::Approx(100.0 * double(word_edits) / double(words)).epsilon(1e-12));
    CHECK(r.ser == doctest::Approx(100.0 * double(wrong) / 40.0).epsilon(1e-12));
    CHECK(r.char_counts.edits() == char_edits);
    CHECK(r.word_counts.edits() == word_edits);
    CHECK(r.pairs == 40);
    CHECK(r.skipped == 0);

    // Order invariance: same numbers after shuffling the pair list.
    std::vector<std::pair<std::string, std::string>> shuffled = pairs;
    Rng order(1);
    for (size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1], shuffled[order.below(i)]);
    }
    ErrorReport r2 = evaluate_pairs(shuffled);
    CHECK(r2.cer == r.cer);
    CHECK(r2.wer == r.wer);
    CHECK(r2.ser == r.ser);
    CHECK(r2.char_counts == r.char_counts);
  }

  SUBCASE("empty references are skipped and counted") {
    std::vector<std::pair<std::string, std::string>> pairs = {
        {"", "NOISE"}, {"GO", "GO"}, {"", ""}};
    ErrorReport r = evaluate_pairs(pairs);
    CHECK(r.skipped == 2);
    CHECK(r.pairs == 1);
    CHECK(r.cer == 0.0);
    CHECK(r.ser == 0.0);
  }

  SUBCASE("ser is zero exactly when every pair matches") {
    ErrorReport exact = evaluate_pairs({{"A", "A"}, {"B C", "B C"}});
    CHECK(exact.ser == 0.0);
    ErrorReport off = evaluate_pairs({{"A", "A"}, {"B C", "B D"}});
    CHECK(off.ser > 0.0);
    CHECK(off.mismatched == 1);
  }

  SUBCASE("an empty pair list is rejected") {
    CHECK_THROWS_AS(evaluate_pairs({}), UsageError);
  }
}
