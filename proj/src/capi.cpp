#include "hatsc.h"

#include <cctype>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hatsc/checkpoint.hpp"
#include "hatsc/config.hpp"
#include "hatsc/corpus.hpp"
#include "hatsc/data.hpp"
#include "hatsc/errors.hpp"
#include "hatsc/model.hpp"
#include "hatsc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

thread_local std::string t_error;

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p != nullptr) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void put_json(char** out, const json& j) {
  if (out != nullptr) *out = dup_string(j.dump(2));
}

template <typename F>
hatsc_status guarded(F&& body) {
  try {
    body();
    t_error.clear();
    return HATSC_OK;
  } catch (const hatsc::UsageError& e) {
    t_error = e.what();
    return HATSC_USAGE;
  } catch (const hatsc::DataError& e) {
    t_error = e.what();
    return HATSC_DATA;
  } catch (const hatsc::NumericError& e) {
    t_error = e.what();
    return HATSC_NUMERIC;
  } catch (const std::exception& e) {
    t_error = e.what();
    return HATSC_ERROR;
  } catch (...) {
    t_error = "unknown failure";
    return HATSC_ERROR;
  }
}

void require_arg(const void* p, const char* what) {
  if (p == nullptr) throw hatsc::UsageError(std::string("null argument: ") + what);
}

std::string trimmed(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Effective configuration: file text (may be NULL) + "section.key=value"
// override strings, later entries winning.
hatsc::IniConfig effective_config(const char* config_text, const char* const* overrides,
                                  size_t n_overrides) {
  hatsc::IniConfig ini =
      hatsc::IniConfig::parse(config_text == nullptr ? "" : std::string(config_text));
  for (size_t i = 0; i < n_overrides; ++i) {
    if (overrides == nullptr || overrides[i] == nullptr) {
      throw hatsc::UsageError("null override entry");
    }
    const std::string entry = overrides[i];
    const size_t eq = entry.find('=');
    if (eq == std::string::npos) {
      throw hatsc::UsageError("override \"" + entry + "\" is not section.key=value");
    }
    std::string lhs = trimmed(entry.substr(0, eq));
    const std::string value = trimmed(entry.substr(eq + 1));
    const size_t dot = lhs.find('.');
    const std::string section = dot == std::string::npos ? "" : lhs.substr(0, dot);
    const std::string key = dot == std::string::npos ? lhs : lhs.substr(dot + 1);
    if (key.empty()) throw hatsc::UsageError("override \"" + entry + "\" has an empty key");
    ini.set(section, key, value);
  }
  return ini;
}

// Fixed file names inside a run directory.
std::string run_ckpt(const std::string& dir) { return dir + "/model.ckpt"; }
std::string run_vocab_prefix(const std::string& dir) { return dir + "/vocab"; }
std::string run_manifest(const std::string& dir) { return dir + "/manifest.json"; }
std::string run_metrics(const std::string& dir) { return dir + "/metrics.ndjson"; }

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

json counts_json(const hatsc::EditCounts& c) {
  return json{{"sub", c.sub}, {"ins", c.ins}, {"del", c.del}};
}

json config_json(const hatsc::ModelConfig& c) {
  return json{{"streams", c.streams},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"d_ff", c.d_ff},
              {"n_layers", c.n_layers},
              {"dropout", c.dropout},
              {"max_positions", c.max_positions},
              {"src_vocab_sizes", c.src_vocab_sizes},
              {"tgt_vocab_size", c.tgt_vocab_size}};
}

}  // namespace

extern "C" {

struct hatsc_corrector {
  hatsc::HATModel model;
  hatsc::VocabSet vocabs;
};

const char* hatsc_version(void) { return hatsc::kToolVersion; }

const char* hatsc_last_error(void) { return t_error.c_str(); }

void hatsc_free(char* s) { std::free(s); }

hatsc_status hatsc_config_get(const char* config_text, const char* section, const char* key,
                              char** out_value) {
  return guarded([&] {
    require_arg(section, "section");
    require_arg(key, "key");
    require_arg(out_value, "out_value");
    *out_value = nullptr;
    hatsc::IniConfig ini =
        hatsc::IniConfig::parse(config_text == nullptr ? "" : std::string(config_text));
    if (!ini.has(section, key)) {
      throw hatsc::DataError("config key not found: [" + std::string(section) + "] " + key);
    }
    *out_value = dup_string(ini.get(section, key, ""));
  });
}

hatsc_status hatsc_synth(const char* phrases_path, const char* lexicon_path, const char* out_dir,
                         const char* config_text, const char* const* overrides,
                         size_t n_overrides, char** out_json) {
  return guarded([&] {
    require_arg(phrases_path, "phrases_path");
    require_arg(out_dir, "out_dir");
    hatsc::IniConfig ini = effective_config(config_text, overrides, n_overrides);
    const hatsc::SynthConfig cfg = hatsc::synth_config_from(ini);

    const std::vector<std::string> phrases = hatsc::read_lines(phrases_path);
    hatsc::PhoneticLexicon lexicon;  // empty lexicon = no phonetic candidates
    if (lexicon_path != nullptr) lexicon = hatsc::PhoneticLexicon::load_file(lexicon_path);

    const std::string dir(out_dir);
    fs::create_directories(dir);

    hatsc::SynthResult result = hatsc::synthesize_corpus(phrases, lexicon, cfg);
    hatsc::save_pairs(dir + "/train.tsv", result.splits.train);
    hatsc::save_pairs(dir + "/dev.tsv", result.splits.dev);
    hatsc::save_pairs(dir + "/test.tsv", result.splits.test);

    hatsc::RunManifest manifest;
    manifest.command = "synth";
    manifest.seed = cfg.seed;
    manifest.config_text = ini.to_text();
    manifest.input_hashes.emplace_back(phrases_path, hatsc::hash_file(phrases_path));
    if (lexicon_path != nullptr) {
      manifest.input_hashes.emplace_back(lexicon_path, hatsc::hash_file(lexicon_path));
    }
    hatsc::write_manifest(run_manifest(dir), manifest);

    put_json(out_json,
             json{{"command", "synth"},
                  {"seed", cfg.seed},
                  {"phrases_used", result.phrases_used},
                  {"phrases_skipped", result.phrases_skipped},
                  {"train_pairs", result.splits.train.size()},
                  {"dev_pairs", result.splits.dev.size()},
                  {"test_pairs", result.splits.test.size()},
                  {"phonetic", lexicon_path != nullptr},
                  {"out_dir", dir},
                  {"manifest", run_manifest(dir)}});
  });
}

hatsc_status hatsc_train(const char* train_tsv, const char* dev_tsv, const char* out_dir,
                         const char* config_text, const char* const* overrides,
                         size_t n_overrides, int resume, char** out_json) {
  return guarded([&] {
    require_arg(train_tsv, "train_tsv");
    require_arg(out_dir, "out_dir");
    hatsc::IniConfig ini = effective_config(config_text, overrides, n_overrides);
    hatsc::ModelConfig mc = hatsc::model_config_from(ini);
    hatsc::TrainConfig tc = hatsc::train_config_from(ini);

    const std::string dir(out_dir);
    if (tc.checkpoint_path.empty()) tc.checkpoint_path = run_ckpt(dir);
    if (tc.metrics_path.empty()) tc.metrics_path = run_metrics(dir);

    const std::vector<hatsc::CorpusPair> train_pairs = hatsc::load_pairs(train_tsv);
    std::vector<hatsc::CorpusPair> dev_pairs;
    if (dev_tsv != nullptr) dev_pairs = hatsc::load_pairs(dev_tsv);

    hatsc::VocabSet vocabs = hatsc::build_vocabs(train_pairs, mc.streams);
    hatsc::apply_vocab_sizes(mc, vocabs);
    mc.validate();
    tc.validate();

    fs::create_directories(dir);

    const bool resuming = resume != 0;
    if (resuming) {
      // The recorded manifest must describe exactly these input files.
      hatsc::RunManifest old = hatsc::read_manifest(run_manifest(dir));
      auto verify = [&](const std::string& path) {
        for (const auto& [file, hash] : old.input_hashes) {
          if (file == path) {
            if (hash != hatsc::hash_file(path)) {
              throw hatsc::DataError("resume: " + path + " changed since the recorded run");
            }
            return;
          }
        }
        throw hatsc::DataError("resume: " + path + " is not an input of the recorded run");
      };
      verify(train_tsv);
      if (dev_tsv != nullptr) verify(dev_tsv);
    } else {
      // A fresh run starts a fresh log (the trainer appends to it).
      std::ofstream(tc.metrics_path, std::ios::trunc);
    }

    hatsc::HATModel model(mc, tc.seed);
    hatsc::Trainer trainer(model, tc);
    if (resuming) trainer.load_state(tc.checkpoint_path);

    hatsc::save_vocabs(run_vocab_prefix(dir), vocabs);
    hatsc::RunManifest manifest;
    manifest.command = "train";
    manifest.seed = tc.seed;
    manifest.config_text = ini.to_text();
    manifest.checkpoint_path = tc.checkpoint_path;
    manifest.input_hashes.emplace_back(train_tsv, hatsc::hash_file(train_tsv));
    if (dev_tsv != nullptr) {
      manifest.input_hashes.emplace_back(dev_tsv, hatsc::hash_file(dev_tsv));
    }
    hatsc::write_manifest(run_manifest(dir), manifest);

    const hatsc::TrainReport report =
        trainer.train(hatsc::make_samples(train_pairs, vocabs),
                      hatsc::make_samples(dev_pairs, vocabs));

    json out{{"command", "train"},
             {"seed", tc.seed},
             {"resumed", resuming},
             {"steps", report.steps},
             {"epochs", report.epochs_run},
             {"final_train_loss", report.final_train_loss},
             {"final_dev_loss", report.final_dev_loss},
             {"param_count", model.param_count()},
             {"checkpoint", tc.checkpoint_path},
             {"manifest", run_manifest(dir)},
             {"metrics", tc.metrics_path},
             {"vocab_prefix", run_vocab_prefix(dir)}};

    if (!dev_pairs.empty()) {
      // End-of-run dev error rates, appended to the metrics log.
      hatsc::EvalResult dev = hatsc::evaluate_model(model, vocabs, dev_pairs, 1);
      json line{{"event", "dev_metrics"},
                {"step", trainer.step()},
                {"cer", dev.report.cer},
                {"wer", dev.report.wer},
                {"ser", dev.report.ser}};
      std::ofstream metrics(tc.metrics_path, std::ios::app);
      metrics << line.dump() << "\n";
      out["dev"] = json{{"cer", dev.report.cer}, {"wer", dev.report.wer}, {"ser", dev.report.ser}};
    }
    put_json(out_json, out);
  });
}

hatsc_status hatsc_eval(const char* run_dir, const char* pairs_tsv, int beam_width,
                        char** out_json) {
  return guarded([&] {
    require_arg(run_dir, "run_dir");
    require_arg(pairs_tsv, "pairs_tsv");
    const std::string dir(run_dir);
    hatsc::HATModel model = hatsc::load_model(run_ckpt(dir), 0);
    hatsc::VocabSet vocabs =
        hatsc::load_vocabs(run_vocab_prefix(dir), model.config().streams);
    const std::vector<hatsc::CorpusPair> pairs = hatsc::load_pairs(pairs_tsv);

    hatsc::EvalResult r = hatsc::evaluate_model(model, vocabs, pairs, beam_width);
    put_json(out_json,
             json{{"command", "eval"},
                  {"beam_width", beam_width},
                  {"cer", r.report.cer},
                  {"wer", r.report.wer},
                  {"ser", r.report.ser},
                  {"char_edits", counts_json(r.report.char_counts)},
                  {"word_edits", counts_json(r.report.word_counts)},
                  {"ref_chars", r.report.ref_chars},
                  {"ref_words", r.report.ref_words},
                  {"pairs", r.report.pairs},
                  {"mismatched", r.report.mismatched},
                  {"skipped", r.report.skipped},
                  {"truncated", r.truncated},
                  {"checkpoint", run_ckpt(dir)},
                  {"checkpoint_hash", hex64(hatsc::hash_file(run_ckpt(dir)))},
                  {"pairs_file", pairs_tsv},
                  {"pairs_hash", hex64(hatsc::hash_file(pairs_tsv))}});
  });
}

hatsc_status hatsc_inspect(const char* run_dir, char** out_json) {
  return guarded([&] {
    require_arg(run_dir, "run_dir");
    const std::string dir(run_dir);
    const hatsc::Checkpoint ckpt = hatsc::load_checkpoint(run_ckpt(dir));
    int64_t stored = 0;
    for (const auto& [name, t] : ckpt.tensors) stored += t.size();

    json manifest = nullptr;
    if (fs::exists(run_manifest(dir))) {
      const hatsc::RunManifest m = hatsc::read_manifest(run_manifest(dir));
      json hashes = json::object();
      for (const auto& [file, hash] : m.input_hashes) hashes[file] = hex64(hash);
      manifest = json{{"tool_version", m.tool_version},
                      {"command", m.command},
                      {"seed", m.seed},
                      {"config", m.config_text},
                      {"checkpoint_path", m.checkpoint_path},
                      {"input_hashes", hashes}};
    }

    put_json(out_json,
             json{{"command", "inspect"},
                  {"config", config_json(ckpt.config)},
                  {"param_count", stored},
                  {"param_count_formula", hatsc::param_count_formula(ckpt.config)},
                  {"tensors", ckpt.tensors.size()},
                  {"checkpoint", run_ckpt(dir)},
                  {"checkpoint_hash", hex64(hatsc::hash_file(run_ckpt(dir)))},
                  {"manifest", manifest}});
  });
}

hatsc_corrector* hatsc_open(const char* run_dir) {
  hatsc_corrector* handle = nullptr;
  const hatsc_status st = guarded([&] {
    require_arg(run_dir, "run_dir");
    const std::string dir(run_dir);
    hatsc::HATModel model = hatsc::load_model(run_ckpt(dir), 0);
    hatsc::VocabSet vocabs =
        hatsc::load_vocabs(run_vocab_prefix(dir), model.config().streams);
    handle = new hatsc_corrector{std::move(model), std::move(vocabs)};
  });
  return st == HATSC_OK ? handle : nullptr;
}

void hatsc_close(hatsc_corrector* h) { delete h; }

int hatsc_corrector_streams(const hatsc_corrector* h) {
  return h == nullptr ? 0 : h->model.config().streams;
}

int64_t hatsc_corrector_param_count(const hatsc_corrector* h) {
  return h == nullptr ? 0 : h->model.param_count();
}

hatsc_status hatsc_correct(hatsc_corrector* h, const char* phrase, int beam_width, int max_len,
                           char** out_text, int* out_truncated) {
  return guarded([&] {
    require_arg(h, "corrector");
    require_arg(phrase, "phrase");
    require_arg(out_text, "out_text");
    hatsc::CorrectionResult r =
        hatsc::correct(h->model, h->vocabs, phrase, beam_width, max_len);
    *out_text = dup_string(r.text);
    if (out_truncated != nullptr) *out_truncated = r.truncated ? 1 : 0;
  });
}

}  // extern "C"
