#include "hatsc/metrics.hpp"

#include <algorithm>

#include "hatsc/errors.hpp"

namespace hatsc {

namespace {

// Full DP table so the alignment can be walked back for the edit breakdown.
template <typename Seq>
std::vector<std::vector<int64_t>> edit_table(const Seq& a, const Seq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int64_t>> d(n + 1, std::vector<int64_t>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int64_t>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int64_t subst = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({subst, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d;
}

template <typename Seq>
EditCounts backtrace_counts(const Seq& ref, const Seq& hyp) {
  const auto d = edit_table(ref, hyp);
  EditCounts c;
  size_t i = ref.size(), j = hyp.size();
  while (i > 0 || j > 0) {
    // Tie order: diagonal (match/substitute), then deletion, then insertion.
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.sub;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++c.del;
      --i;
    } else {
      ++c.ins;
      --j;
    }
  }
  return c;
}

}  // namespace

int64_t levenshtein(const std::string& a, const std::string& b) {
  return edit_table(a, b)[a.size()][b.size()];
}

int64_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return edit_table(a, b)[a.size()][b.size()];
}

EditCounts edit_counts(const std::string& ref, const std::string& hyp) {
  return backtrace_counts(ref, hyp);
}

EditCounts edit_counts(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return backtrace_counts(ref, hyp);
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

ErrorReport evaluate_pairs(const std::vector<std::pair<std::string, std::string>>& ref_hyp) {
  if (ref_hyp.empty()) throw UsageError("evaluate: no pairs given");
  ErrorReport r;
  for (const auto& [ref, hyp] : ref_hyp) {
    if (ref.empty()) {
      ++r.skipped;
      continue;
    }
    ++r.pairs;
    if (hyp != ref) ++r.mismatched;
    r.ref_chars += static_cast<int64_t>(ref.size());
    r.char_counts += edit_counts(ref, hyp);
    const std::vector<std::string> ref_words = split_words(ref);
    r.ref_words += static_cast<int64_t>(ref_words.size());
    r.word_counts += edit_counts(ref_words, split_words(hyp));
  }
  r.cer = 100.0 * static_cast<double>(r.char_counts.edits()) /
          static_cast<double>(std::max<int64_t>(1, r.ref_chars));
  r.wer = 100.0 * static_cast<double>(r.word_counts.edits()) /
          static_cast<double>(std::max<int64_t>(1, r.ref_words));
  r.ser = 100.0 * static_cast<double>(r.mismatched) /
          static_cast<double>(std::max<int64_t>(1, r.pairs));
  return r;
}

}  // namespace hatsc
