#include "hatsc/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hatsc/checkpoint.hpp"
#include "hatsc/errors.hpp"
#include "hatsc/hash.hpp"

namespace hatsc {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const char* want) {
  throw DataError("config: [" + section + "] " + key + " = \"" + value + "\" is not " + want);
}

// Keys each typed extractor accepts; anything else in the section is a typo.
void check_known(const IniConfig& ini, const std::string& section,
                 const std::set<std::string>& known) {
  for (const auto& [key, value] : ini.items(section)) {
    (void)value;
    if (!known.count(key)) {
      throw DataError("config: unknown key \"" + key + "\" in section [" + section + "]");
    }
  }
}

}  // namespace

IniConfig IniConfig::parse(const std::string& text) {
  IniConfig ini;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw DataError("config: malformed section header on line " + std::to_string(lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      ini.sections_[section];  // a section may legitimately be empty
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config: expected key = value on line " + std::to_string(lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw DataError("config: empty key on line " + std::to_string(lineno));
    }
    auto& sec = ini.sections_[section];
    if (sec.count(key)) {
      throw DataError("config: duplicate key \"" + key + "\" in section [" + section + "]");
    }
    sec[key] = value;
  }
  return ini;
}

IniConfig IniConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool IniConfig::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string IniConfig::get(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  auto kt = it->second.find(key);
  return kt == it->second.end() ? fallback : kt->second;
}

int64_t IniConfig::get_int(const std::string& section, const std::string& key,
                           int64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  errno = 0;
  char* end = nullptr;
  const long long parsed = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0') bad_value(section, key, v, "an integer");
  return parsed;
}

uint64_t IniConfig::get_u64(const std::string& section, const std::string& key,
                            uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  errno = 0;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos) {
    bad_value(section, key, v, "an unsigned integer");
  }
  return parsed;
}

double IniConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0') bad_value(section, key, v, "a number");
  return parsed;
}

bool IniConfig::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key, "");
  for (char& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  bad_value(section, key, v, "a boolean");
}

void IniConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  sections_[section][key] = value;
}

std::vector<std::pair<std::string, std::string>> IniConfig::items(
    const std::string& section) const {
  std::vector<std::pair<std::string, std::string>> out;
  auto it = sections_.find(section);
  if (it == sections_.end()) return out;
  out.assign(it->second.begin(), it->second.end());
  return out;
}

std::string IniConfig::to_text() const {
  std::ostringstream out;
  // The global section first, then named sections; std::map keeps both
  // section names and keys sorted, so the text is canonical.
  for (const auto& [name, entries] : sections_) {
    if (!name.empty()) out << "[" << name << "]\n";
    for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
  }
  return out.str();
}

ModelConfig model_config_from(const IniConfig& ini) {
  check_known(ini, "model",
              {"streams", "d_model", "n_heads", "d_ff", "n_layers", "dropout", "max_positions"});
  ModelConfig cfg;
  cfg.streams = static_cast<int>(ini.get_int("model", "streams", cfg.streams));
  cfg.d_model = static_cast<int>(ini.get_int("model", "d_model", cfg.d_model));
  cfg.n_heads = static_cast<int>(ini.get_int("model", "n_heads", cfg.n_heads));
  cfg.d_ff = static_cast<int>(ini.get_int("model", "d_ff", cfg.d_ff));
  cfg.n_layers = static_cast<int>(ini.get_int("model", "n_layers", cfg.n_layers));
  cfg.dropout = ini.get_double("model", "dropout", cfg.dropout);
  cfg.max_positions = static_cast<int>(ini.get_int("model", "max_positions", cfg.max_positions));
  return cfg;
}

TrainConfig train_config_from(const IniConfig& ini) {
  check_known(ini, "train",
              {"epochs", "max_tokens", "warmup_steps", "lr_scale", "beta1", "beta2", "adam_eps",
               "clip_norm", "label_smoothing", "log_every", "checkpoint_every", "metrics_path",
               "checkpoint_path"});
  TrainConfig cfg;
  cfg.epochs = static_cast<int>(ini.get_int("train", "epochs", cfg.epochs));
  cfg.max_tokens = static_cast<int>(ini.get_int("train", "max_tokens", cfg.max_tokens));
  cfg.warmup_steps = static_cast<int>(ini.get_int("train", "warmup_steps", cfg.warmup_steps));
  cfg.lr_scale = ini.get_double("train", "lr_scale", cfg.lr_scale);
  cfg.beta1 = ini.get_double("train", "beta1", cfg.beta1);
  cfg.beta2 = ini.get_double("train", "beta2", cfg.beta2);
  cfg.adam_eps = ini.get_double("train", "adam_eps", cfg.adam_eps);
  cfg.clip_norm = ini.get_double("train", "clip_norm", cfg.clip_norm);
  cfg.label_smoothing = ini.get_double("train", "label_smoothing", cfg.label_smoothing);
  cfg.log_every = static_cast<int>(ini.get_int("train", "log_every", cfg.log_every));
  cfg.checkpoint_every =
      static_cast<int>(ini.get_int("train", "checkpoint_every", cfg.checkpoint_every));
  cfg.metrics_path = ini.get("train", "metrics_path", cfg.metrics_path);
  cfg.checkpoint_path = ini.get("train", "checkpoint_path", cfg.checkpoint_path);
  cfg.seed = ini.get_u64("", "seed", cfg.seed);
  return cfg;
}

SynthConfig synth_config_from(const IniConfig& ini) {
  check_known(ini, "data",
              {"max_edits", "threshold", "max_variants", "identity_fraction", "split_train",
               "split_dev", "split_test"});
  SynthConfig cfg;
  cfg.max_edits = static_cast<int>(ini.get_int("data", "max_edits", cfg.max_edits));
  cfg.threshold = ini.get_double("data", "threshold", cfg.threshold);
  cfg.max_variants = static_cast<int>(ini.get_int("data", "max_variants", cfg.max_variants));
  cfg.identity_fraction = ini.get_double("data", "identity_fraction", cfg.identity_fraction);
  cfg.ratios[0] = ini.get_double("data", "split_train", cfg.ratios[0]);
  cfg.ratios[1] = ini.get_double("data", "split_dev", cfg.ratios[1]);
  cfg.ratios[2] = ini.get_double("data", "split_test", cfg.ratios[2]);
  cfg.seed = ini.get_u64("", "seed", cfg.seed);
  return cfg;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("hash_file: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

namespace {

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw DataError("manifest: bad hash \"" + s + "\"");
  uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<uint64_t>(c - 'a' + 10);
    else throw DataError("manifest: bad hash \"" + s + "\"");
  }
  return v;
}

}  // namespace

void write_manifest(const std::string& path, const RunManifest& manifest) {
  nlohmann::json j;
  j["tool_version"] = manifest.tool_version;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["config"] = manifest.config_text;
  j["checkpoint_path"] = manifest.checkpoint_path;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [file, hash] : manifest.input_hashes) inputs[file] = hex64(hash);
  j["input_hashes"] = inputs;
  ckpt_detail::atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << "\n"; });
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("manifest: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: " + path + " is not valid JSON: " + e.what());
  }
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.config_text = j.at("config").get<std::string>();
    m.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    for (const auto& [file, hash] : j.at("input_hashes").items()) {
      m.input_hashes.emplace_back(file, parse_hex64(hash.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: " + path + " is missing fields: " + e.what());
  }
  return m;
}

}  // namespace hatsc
