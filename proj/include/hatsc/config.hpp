#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hatsc/corpus.hpp"
#include "hatsc/model.hpp"
#include "hatsc/trainer.hpp"

namespace hatsc {

inline constexpr const char* kToolVersion = "hatsc 0.1.0";

// Structured-text run configuration: `[section]` headers with `key = value`
// lines; `#` and `;` start comments; keys before any header live in the
// global section "". Duplicate keys within a section are treated as file
// corruption. Values are kept as strings until a typed getter parses them.
class IniConfig {
 public:
  static IniConfig parse(const std::string& text);
  static IniConfig load_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  // Typed getters return `fallback` when the key is absent and throw
  // DataError when the stored text does not parse.
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
  uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  // Command-line overrides land here; they replace file values.
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::vector<std::pair<std::string, std::string>> items(const std::string& section) const;

  // Canonical serialization (sections and keys sorted); parsing it back
  // reproduces the same configuration.
  std::string to_text() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Typed views over the sections. Unknown keys inside the owned section are
// rejected (typo protection); domain validation stays with each struct's
// validate() so command-line overrides can be applied in between.
//   [model] streams, d_model, n_heads, d_ff, n_layers, dropout, max_positions
//   [train] epochs, max_tokens, warmup_steps, lr_scale, beta1, beta2,
//           adam_eps, clip_norm, label_smoothing, log_every,
//           checkpoint_every, metrics_path, checkpoint_path
//   [data]  max_edits, threshold, max_variants, identity_fraction,
//           split_train, split_dev, split_test
// The global key `seed` feeds both training and synthesis.
ModelConfig model_config_from(const IniConfig& ini);
TrainConfig train_config_from(const IniConfig& ini);
SynthConfig synth_config_from(const IniConfig& ini);

// Record of one tool invocation, written atomically at run start so any
// output can be traced back to its exact inputs.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  uint64_t seed = 0;
  std::string config_text;  // canonical snapshot of the effective config
  std::vector<std::pair<std::string, uint64_t>> input_hashes;  // path -> content hash
  std::string checkpoint_path;
};

uint64_t hash_file(const std::string& path);  // FNV-1a over the raw bytes

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

}  // namespace hatsc
