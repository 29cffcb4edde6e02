#include "hatsc/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "hatsc/errors.hpp"

namespace hatsc {

namespace {

const char* kReservedTokens[5] = {"<pad>", "<bos>", "<eos>", "<unk>", kSepToken};

void check_normalized(const std::string& phrase, const char* op) {
  if (phrase.empty()) throw UsageError(std::string(op) + ": empty phrase");
  if (phrase.front() == ' ' || phrase.back() == ' ') {
    throw UsageError(std::string(op) + ": phrase has leading or trailing space");
  }
  for (size_t i = 1; i < phrase.size(); ++i) {
    if (phrase[i] == ' ' && phrase[i - 1] == ' ') {
      throw UsageError(std::string(op) + ": phrase has a run of spaces");
    }
  }
}

std::vector<std::string> split_words(const std::string& phrase) {
  std::vector<std::string> words;
  size_t start = 0;
  while (start <= phrase.size()) {
    size_t end = phrase.find(' ', start);
    if (end == std::string::npos) end = phrase.size();
    words.push_back(phrase.substr(start, end - start));
    start = end + 1;
    if (end == phrase.size()) break;
  }
  return words;
}

}  // namespace

std::string normalize(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = true;
      continue;
    }
    if (!std::isalnum(uc) && c != '\'') continue;  // drop punctuation
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::toupper(uc)));
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& phrase, int n) {
  if (n < 1 || n > 3) throw UsageError("tokenize: n must be 1, 2 or 3, got " + std::to_string(n));
  check_normalized(phrase, "tokenize");
  std::vector<std::string> tokens;
  bool first = true;
  for (const std::string& word : split_words(phrase)) {
    if (!first) tokens.push_back(kSepToken);
    first = false;
    if (static_cast<int>(word.size()) < n) {
      tokens.push_back(word);  // short word stands in whole
    } else {
      for (size_t i = 0; i + static_cast<size_t>(n) <= word.size(); ++i) {
        tokens.push_back(word.substr(i, static_cast<size_t>(n)));
      }
    }
  }
  return tokens;
}

std::vector<std::string> tokenize_target(const std::string& phrase) { return tokenize(phrase, 1); }

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (t == kSepToken) out.push_back(' ');
    else out += t;
  }
  return out;
}

void Vocabulary::add_reserved() {
  for (int i = 0; i < 5; ++i) {
    id_to_token_.push_back(kReservedTokens[i]);
    frequency_.push_back(0);
    token_to_id_[kReservedTokens[i]] = i;
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, int n,
                             std::string stream_name) {
  if (corpus.empty()) throw UsageError("build_vocab: empty corpus");
  Vocabulary v;
  v.name_ = std::move(stream_name);
  v.n_ = n;
  v.add_reserved();

  std::unordered_map<std::string, int64_t> counts;
  int64_t sep_count = 0;
  for (const std::string& phrase : corpus) {
    for (const std::string& tok : tokenize(phrase, n)) {
      if (tok == kSepToken) ++sep_count;
      else ++counts[tok];
    }
  }
  v.frequency_[kSepId] = sep_count;

  std::vector<std::pair<std::string, int64_t>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [tok, freq] : ordered) {
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
    v.frequency_.push_back(freq);
  }
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range for " +
                    std::to_string(size()) + " tokens");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

int64_t Vocabulary::frequency_of(int id) const {
  token_of(id);  // range check
  return frequency_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token_of(id));
  return tokens;
}

std::string Vocabulary::to_text() const {
  std::ostringstream out;
  out << "hatsc-vocab\t" << name_ << "\t" << n_ << "\n";
  for (int id = 0; id < size(); ++id) {
    out << id << "\t" << id_to_token_[static_cast<size_t>(id)] << "\t"
        << frequency_[static_cast<size_t>(id)] << "\n";
  }
  return out.str();
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("vocabulary: empty file");
  std::istringstream header(line);
  std::string magic;
  Vocabulary v;
  if (!std::getline(header, magic, '\t') || magic != "hatsc-vocab" ||
      !std::getline(header, v.name_, '\t') || !(header >> v.n_)) {
    throw DataError("vocabulary: bad header line: " + line);
  }
  int expected_id = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw DataError("vocabulary: bad record: " + line);
    int id = 0;
    int64_t freq = 0;
    try {
      id = std::stoi(line.substr(0, t1));
      freq = std::stoll(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw DataError("vocabulary: bad record: " + line);
    }
    if (id != expected_id) {
      throw DataError("vocabulary: record id " + std::to_string(id) + " out of order");
    }
    const std::string token = line.substr(t1 + 1, t2 - t1 - 1);
    if (id < 5 && token != kReservedTokens[id]) {
      throw DataError("vocabulary: reserved id " + std::to_string(id) + " bound to '" + token +
                      "'");
    }
    v.id_to_token_.push_back(token);
    v.frequency_.push_back(freq);
    v.token_to_id_[token] = id;
    ++expected_id;
  }
  if (v.size() < 5) throw DataError("vocabulary: missing reserved tokens");
  return v;
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("vocabulary: cannot write " + path);
  out << to_text();
  if (!out) throw DataError("vocabulary: write failed for " + path);
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocabulary: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

}  // namespace hatsc
