#include "hatsc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "hatsc/errors.hpp"
#include "hatsc/hash.hpp"
#include "hatsc/tokenizer.hpp"

namespace hatsc {

namespace {

const std::set<std::string>& arpabet() {
  static const std::set<std::string> set{
      "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH", "EH", "ER", "EY",
      "F",  "G",  "HH", "IH", "IY", "JH", "K",  "L",  "M",  "N",  "NG", "OW", "OY",
      "P",  "R",  "S",  "SH", "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};
  return set;
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

std::string join(const std::vector<std::string>& words, size_t begin, size_t end) {
  std::string out;
  for (size_t i = begin; i < end; ++i) {
    if (i > begin) out.push_back(' ');
    out += words[i];
  }
  return out;
}

using BigramBag = std::map<std::string, int>;

// Bigram keys join the two symbols with '|'; '^' and '$' mark the ends.
BigramBag bigram_bag(const std::vector<std::string>& seq) {
  BigramBag bag;
  bag["^|" + seq.front()] += 1;
  for (size_t i = 0; i + 1 < seq.size(); ++i) bag[seq[i] + "|" + seq[i + 1]] += 1;
  bag[seq.back() + "|$"] += 1;
  return bag;
}

double dot(const BigramBag& a, const BigramBag& b) {
  const BigramBag& small = a.size() <= b.size() ? a : b;
  const BigramBag& large = a.size() <= b.size() ? b : a;
  double d = 0.0;
  for (const auto& [key, count] : small) {
    auto it = large.find(key);
    if (it != large.end()) d += static_cast<double>(count) * it->second;
  }
  return d;
}

double self_dot(const BigramBag& a) {
  double d = 0.0;
  for (const auto& [key, count] : a) d += static_cast<double>(count) * count;
  return d;
}

}  // namespace

std::string provenance_str(CorpusPair::Provenance p) {
  switch (p) {
    case CorpusPair::Provenance::kEdit: return "edit";
    case CorpusPair::Provenance::kPhonetic: return "phonetic";
    case CorpusPair::Provenance::kIdentity: return "identity";
  }
  throw UsageError("provenance_str: invalid provenance value");
}

CorpusPair::Provenance provenance_parse(const std::string& s) {
  if (s == "edit") return CorpusPair::Provenance::kEdit;
  if (s == "phonetic") return CorpusPair::Provenance::kPhonetic;
  if (s == "identity") return CorpusPair::Provenance::kIdentity;
  throw DataError("corpus: unknown provenance '" + s + "'");
}

PhoneticLexicon PhoneticLexicon::from_text(const std::string& text) {
  PhoneticLexicon lex;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": expected <word>\\t<phonemes>");
    }
    const std::string word = line.substr(0, tab);
    std::vector<std::string> phon = split_on(line.substr(tab + 1), ' ');
    if (phon.empty()) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": empty phoneme sequence");
    }
    for (const std::string& p : phon) {
      if (!arpabet().count(p)) {
        throw DataError("lexicon line " + std::to_string(line_no) + ": unknown phoneme '" + p +
                        "'");
      }
    }
    lex.entries_[word] = std::move(phon);
  }
  if (lex.entries_.empty()) throw DataError("lexicon: no entries");
  return lex;
}

PhoneticLexicon PhoneticLexicon::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("lexicon: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

bool PhoneticLexicon::contains(const std::string& word) const { return entries_.count(word) > 0; }

const std::vector<std::string>& PhoneticLexicon::phonemes(const std::string& word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) throw DataError("lexicon: no pronunciation for '" + word + "'");
  return it->second;
}

double phoneme_similarity(const std::vector<std::string>& g1, const std::vector<std::string>& g2) {
  if (g1.empty() || g2.empty()) throw UsageError("phoneme_similarity: empty phoneme sequence");
  const BigramBag b1 = bigram_bag(g1);
  const BigramBag b2 = bigram_bag(g2);
  const double d = dot(b1, b2);
  if (d == 0.0) return 0.0;
  return d / std::sqrt(self_dot(b1) * self_dot(b2));
}

std::string edit_noise(const std::string& word, int max_edits, Rng& rng) {
  if (word.empty()) throw UsageError("edit_noise: empty word");
  if (max_edits < 0) throw UsageError("edit_noise: negative edit budget");
  if (max_edits == 0) return word;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::string w = word;
    const int k = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_edits)));
    for (int e = 0; e < k; ++e) {
      int op = static_cast<int>(rng.below(3));
      if (op == 1 && w.size() < 2) op = 2;  // never delete down to empty
      if (op == 0) {  // insert
        const size_t pos = rng.below(w.size() + 1);
        w.insert(w.begin() + static_cast<std::ptrdiff_t>(pos),
                 static_cast<char>('A' + rng.below(26)));
      } else if (op == 1) {  // delete
        const size_t pos = rng.below(w.size());
        w.erase(w.begin() + static_cast<std::ptrdiff_t>(pos));
      } else {  // substitute with a different letter
        const size_t pos = rng.below(w.size());
        char c;
        do {
          c = static_cast<char>('A' + rng.below(26));
        } while (c == w[pos]);
        w[pos] = c;
      }
    }
    if (w != word) return w;  // edits may cancel; resample
  }
  throw NumericError("edit_noise: failed to produce a distinct word");  // unreachable in practice
}

PhoneticIndex::PhoneticIndex(const PhoneticLexicon& lexicon, double threshold)
    : lexicon_(lexicon), threshold_(threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw UsageError("phonetic index: threshold " + std::to_string(threshold) +
                     " outside (0, 1)");
  }
  for (const auto& [word, phon] : lexicon.entries()) {
    WordPhonetics info;
    info.first = phon.front();
    info.last = phon.back();
    for (size_t i = 0; i + 1 < phon.size(); ++i) info.interior[phon[i] + "|" + phon[i + 1]] += 1;
    BigramBag full = info.interior;
    full["^|" + info.first] += 1;
    full[info.last + "|$"] += 1;
    info.self_dot = self_dot(full);
    info.phonemes = &phon;
    const size_t idx = words_.size();
    words_.push_back(word);
    by_first_[info.first].push_back(idx);
    by_last_[info.last].push_back(idx);
    info_[word] = std::move(info);
  }
}

const std::vector<std::string>& PhoneticIndex::candidates(
    const std::vector<std::string>& span_words) {
  const std::string key = join(span_words, 0, span_words.size());
  auto cached = cache_.find(key);
  if (cached != cache_.end()) return cached->second;

  std::vector<std::string> result;
  std::vector<std::string> span_phon;
  bool resolvable = true;
  for (const std::string& w : span_words) {
    if (!lexicon_.contains(w)) {
      resolvable = false;
      break;
    }
    const std::vector<std::string>& p = lexicon_.phonemes(w);
    span_phon.insert(span_phon.end(), p.begin(), p.end());
  }
  if (!resolvable) return cache_.emplace(key, std::move(result)).first->second;

  const BigramBag span_bag = bigram_bag(span_phon);
  const double span_norm = self_dot(span_bag);
  const std::string& first = span_phon.front();
  const std::string& last = span_phon.back();

  // Single-word replacements: prune to words sharing the first phoneme.
  auto first_bucket = by_first_.find(first);
  if (first_bucket != by_first_.end()) {
    for (size_t idx : first_bucket->second) {
      const std::string& w = words_[idx];
      if (w == key) continue;
      const WordPhonetics& wi = info_.at(w);
      BigramBag bag = wi.interior;
      bag["^|" + wi.first] += 1;
      bag[wi.last + "|$"] += 1;
      const double sim = dot(span_bag, bag) / std::sqrt(span_norm * wi.self_dot);
      if (sim > threshold_) result.push_back(w);
    }
  }

  // Two-word replacements: first word shares the first phoneme, second word
  // shares the last (additional pruning on top of the first-phoneme index;
  // every emitted candidate is still verified against the threshold).
  auto last_bucket = by_last_.find(last);
  if (first_bucket != by_first_.end() && last_bucket != by_last_.end()) {
    for (size_t i1 : first_bucket->second) {
      const std::string& w1 = words_[i1];
      const WordPhonetics& a = info_.at(w1);
      for (size_t i2 : last_bucket->second) {
        const std::string& w2 = words_[i2];
        const std::string combined = w1 + " " + w2;
        if (combined == key) continue;
        const WordPhonetics& b = info_.at(w2);
        BigramBag bag = a.interior;
        for (const auto& [bg, c] : b.interior) bag[bg] += c;
        bag[a.last + "|" + b.first] += 1;
        bag["^|" + a.first] += 1;
        bag[b.last + "|$"] += 1;
        const double sim = dot(span_bag, bag) / std::sqrt(span_norm * self_dot(bag));
        if (sim > threshold_) result.push_back(combined);
      }
    }
  }
  return cache_.emplace(key, std::move(result)).first->second;
}

namespace {

// One phonetic replacement draw; nullopt when no span has candidates.
std::optional<std::string> try_phonetic(const std::vector<std::string>& words,
                                        PhoneticIndex& index, Rng& rng) {
  struct SpanChoice {
    size_t start, len;
    const std::vector<std::string>* cands;
  };
  std::vector<SpanChoice> eligible;
  for (size_t start = 0; start < words.size(); ++start) {
    for (size_t len = 1; len <= 2 && start + len <= words.size(); ++len) {
      std::vector<std::string> span(words.begin() + static_cast<std::ptrdiff_t>(start),
                                    words.begin() + static_cast<std::ptrdiff_t>(start + len));
      const std::vector<std::string>& cands = index.candidates(span);
      if (!cands.empty()) eligible.push_back({start, len, &cands});
    }
  }
  if (eligible.empty()) return std::nullopt;
  const SpanChoice& choice = eligible[rng.below(eligible.size())];
  const std::string& replacement = (*choice.cands)[rng.below(choice.cands->size())];

  std::vector<std::string> out(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(choice.start));
  for (const std::string& w : split_on(replacement, ' ')) out.push_back(w);
  out.insert(out.end(), words.begin() + static_cast<std::ptrdiff_t>(choice.start + choice.len),
             words.end());
  std::string joined = join(out, 0, out.size());
  return joined;
}

// Edit-noise variant of a whole phrase: each word is noised with p=1/2, and
// at least one word is always noised.
std::string edit_variant(const std::vector<std::string>& words, int max_edits, Rng& rng) {
  std::vector<std::string> out = words;
  bool touched = false;
  for (std::string& w : out) {
    if (rng.below(2) == 0) {
      w = edit_noise(w, max_edits, rng);
      touched = true;
    }
  }
  if (!touched) {
    const size_t pick = rng.below(out.size());
    out[pick] = edit_noise(out[pick], max_edits, rng);
  }
  return join(out, 0, out.size());
}

}  // namespace

std::string phonetic_noise(const std::string& phrase, PhoneticIndex& index, Rng& rng) {
  const std::vector<std::string> words = split_on(phrase, ' ');
  if (words.empty()) throw UsageError("phonetic_noise: empty phrase");
  if (auto replaced = try_phonetic(words, index, rng)) return *replaced;
  // No sound-alike available anywhere: degrade to a character edit.
  std::vector<std::string> out = words;
  const size_t pick = rng.below(out.size());
  out[pick] = edit_noise(out[pick], 3, rng);
  return join(out, 0, out.size());
}

std::vector<CorpusPair> generate_pairs(const std::string& phrase, PhoneticIndex& index,
                                       int max_variants, Rng& rng, int max_edits) {
  const std::vector<std::string> words = split_on(phrase, ' ');
  if (words.size() < 2 || words.size() > 5) {
    throw UsageError("generate_pairs: phrase must have 2-5 words, got " +
                     std::to_string(words.size()));
  }
  if (max_variants < 0) throw UsageError("generate_pairs: negative variant cap");

  // Candidate pool: phonetic draws first so a source producible both ways
  // keeps the phonetic tag, then edit draws. Dedupe on the source text.
  std::vector<CorpusPair> pool;
  std::unordered_set<std::string> seen{phrase};
  const int attempts = std::max(8, max_variants * 2);
  for (int i = 0; i < attempts; ++i) {
    if (auto s = try_phonetic(words, index, rng)) {
      if (seen.insert(*s).second) {
        pool.push_back({*s, phrase, CorpusPair::Provenance::kPhonetic});
      }
    }
  }
  for (int i = 0; i < attempts; ++i) {
    std::string s = edit_variant(words, max_edits, rng);
    if (seen.insert(s).second) pool.push_back({s, phrase, CorpusPair::Provenance::kEdit});
  }

  // Uniform sample without replacement via partial Fisher-Yates.
  const size_t take = std::min(pool.size(), static_cast<size_t>(max_variants));
  for (size_t i = 0; i < take; ++i) {
    const size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

SplitCorpus augment_and_split(const std::vector<CorpusPair>& pairs, double identity_fraction,
                              std::array<double, 3> ratios, uint64_t seed) {
  if (pairs.empty()) throw UsageError("augment_and_split: no pairs");
  if (identity_fraction < 0.0 || identity_fraction >= 1.0) {
    throw UsageError("augment_and_split: identity fraction " +
                     std::to_string(identity_fraction) + " outside [0, 1)");
  }
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw UsageError("augment_and_split: negative split ratio");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw UsageError("augment_and_split: split ratios sum to " + std::to_string(sum) +
                     ", expected 1");
  }

  std::vector<CorpusPair> all = pairs;
  if (identity_fraction > 0.0) {
    // n identity pairs on top of k noisy pairs give fraction n/(n+k).
    const size_t n_identity = static_cast<size_t>(
        std::llround(static_cast<double>(pairs.size()) * identity_fraction /
                     (1.0 - identity_fraction)));
    std::vector<std::string> targets;
    std::unordered_set<std::string> seen;
    for (const CorpusPair& p : pairs) {
      if (seen.insert(p.target).second) targets.push_back(p.target);
    }
    Rng rng = Rng::derive(seed, 0x1d);
    for (size_t i = targets.size() - 1; i > 0; --i) {
      std::swap(targets[i], targets[rng.below(i + 1)]);
    }
    for (size_t i = 0; i < n_identity; ++i) {
      const std::string& t = targets[i % targets.size()];
      all.push_back({t, t, CorpusPair::Provenance::kIdentity});
    }
  }

  // Group by target phrase; a group never straddles a split boundary.
  std::map<std::string, std::vector<CorpusPair>> groups;
  for (CorpusPair& p : all) groups[p.target].push_back(std::move(p));

  struct GroupRef {
    uint64_t order;
    const std::string* target;
  };
  std::vector<GroupRef> order;
  order.reserve(groups.size());
  for (const auto& [target, members] : groups) {
    order.push_back({mix64(fnv1a64(target) ^ seed), &target});
  }
  std::sort(order.begin(), order.end(), [](const GroupRef& a, const GroupRef& b) {
    if (a.order != b.order) return a.order < b.order;
    return *a.target < *b.target;
  });

  SplitCorpus out;
  std::array<std::vector<CorpusPair>*, 3> splits{&out.train, &out.dev, &out.test};
  std::array<double, 3> quota;
  for (int i = 0; i < 3; ++i) quota[static_cast<size_t>(i)] = ratios[static_cast<size_t>(i)] * static_cast<double>(all.size());
  std::array<double, 3> assigned{0.0, 0.0, 0.0};
  for (const GroupRef& g : order) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (quota[static_cast<size_t>(i)] - assigned[static_cast<size_t>(i)] >
          quota[static_cast<size_t>(best)] - assigned[static_cast<size_t>(best)]) {
        best = i;
      }
    }
    std::vector<CorpusPair>& members = groups[*g.target];
    assigned[static_cast<size_t>(best)] += static_cast<double>(members.size());
    for (CorpusPair& p : members) splits[static_cast<size_t>(best)]->push_back(std::move(p));
  }
  return out;
}

SynthResult synthesize_corpus(const std::vector<std::string>& raw_phrases,
                              const PhoneticLexicon& lexicon, const SynthConfig& config) {
  PhoneticIndex index(lexicon, config.threshold);
  SynthResult result;
  std::vector<CorpusPair> pairs;
  std::unordered_set<std::string> seen;
  uint64_t phrase_idx = 0;
  for (const std::string& raw : raw_phrases) {
    const std::string phrase = normalize(raw);
    if (phrase.empty()) continue;
    const size_t words = 1 + static_cast<size_t>(std::count(phrase.begin(), phrase.end(), ' '));
    if (words < 2 || words > 5) {
      ++result.phrases_skipped;
      continue;
    }
    if (!seen.insert(phrase).second) continue;  // duplicate input line
    Rng rng = Rng::derive(config.seed, phrase_idx++);
    std::vector<CorpusPair> generated =
        generate_pairs(phrase, index, config.max_variants, rng, config.max_edits);
    pairs.insert(pairs.end(), generated.begin(), generated.end());
    ++result.phrases_used;
  }
  if (pairs.empty()) throw DataError("synthesize_corpus: no usable phrases in input");
  result.splits =
      augment_and_split(pairs, config.identity_fraction, config.ratios, config.seed);
  return result;
}

void save_pairs(const std::string& path, const std::vector<CorpusPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("corpus: cannot write " + path);
  for (const CorpusPair& p : pairs) {
    out << p.source << "\t" << p.target << "\t" << provenance_str(p.provenance) << "\n";
  }
  if (!out) throw DataError("corpus: write failed for " + path);
}

std::vector<CorpusPair> load_pairs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("corpus: cannot read " + path);
  std::vector<CorpusPair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": expected <source>\\t<target>\\t<provenance>");
    }
    CorpusPair p;
    p.source = line.substr(0, t1);
    p.target = line.substr(t1 + 1, t2 - t1 - 1);
    p.provenance = provenance_parse(line.substr(t2 + 1));
    if (p.source.empty() || p.target.empty()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": empty field");
    }
    const bool same = p.source == p.target;
    if (same != (p.provenance == CorpusPair::Provenance::kIdentity)) {
      throw DataError(path + " line " + std::to_string(line_no) +
                      ": provenance inconsistent with source/target equality");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace hatsc
