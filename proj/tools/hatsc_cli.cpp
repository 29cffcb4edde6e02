// Command-line front end: synth / train / eval / correct / inspect.
// All functionality lives behind the C library interface; this file only
// parses arguments, moves text, and maps statuses to exit codes.
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hatsc.h"

namespace {

int fail(hatsc_status status) {
  const char* kind = "error";
  switch (status) {
    case HATSC_USAGE: kind = "usage error"; break;
    case HATSC_DATA: kind = "data error"; break;
    case HATSC_NUMERIC: kind = "numeric error"; break;
    default: break;
  }
  std::cerr << kind << ": " << hatsc_last_error() << "\n";
  return static_cast<int>(status);
}

// Prints and frees a result string from the library.
int finish(hatsc_status status, char* result) {
  if (status != HATSC_OK) {
    hatsc_free(result);
    return fail(status);
  }
  if (result != nullptr) std::cout << result << "\n";
  hatsc_free(result);
  return 0;
}

std::string read_file(const std::string& path, bool& ok) {
  std::ifstream in(path, std::ios::binary);
  ok = static_cast<bool>(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Every run is reproducible: without an explicit seed (flag or config key),
// one is drawn and announced.
void ensure_seed(const std::string& config_text, bool seed_given, uint64_t seed,
                 std::vector<std::string>& overrides) {
  if (seed_given) {
    overrides.push_back("seed=" + std::to_string(seed));
    return;
  }
  char* value = nullptr;
  if (hatsc_config_get(config_text.c_str(), "", "seed", &value) == HATSC_OK &&
      value != nullptr) {
    hatsc_free(value);
    return;  // the config file already pins it
  }
  hatsc_free(value);
  std::random_device rd;
  const uint64_t drawn = (static_cast<uint64_t>(rd()) << 32) ^ rd();
  std::cerr << "seed not set; drew " << drawn << "\n";
  overrides.push_back("seed=" + std::to_string(drawn));
}

std::vector<const char*> as_argv(const std::vector<std::string>& v) {
  std::vector<const char*> p;
  p.reserve(v.size());
  for (const std::string& s : v) p.push_back(s.c_str());
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntactic spell correction: hierarchical character-n-gram transformer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hatsc_version()));

  // Shared option storage (each subcommand binds the ones it uses).
  std::string config_path, phrases, lexicon, out_dir, train_tsv, dev_tsv, run_dir, pairs_tsv;
  std::string input_path;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool no_phonetic = false, resume = false;
  int beam = 1, max_len = 0;

  CLI::App* synth = app.add_subcommand("synth", "Generate a noisy-pair corpus from clean phrases");
  synth->add_option("--phrases", phrases, "Clean phrase list, one per line")->required();
  synth->add_option("--lexicon", lexicon, "Pronunciation lexicon (word<TAB>phonemes)");
  synth->add_flag("--no-phonetic", no_phonetic, "Edit/identity noise only");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--config", config_path, "Configuration file");
  auto* synth_seed = synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--set", sets, "Override config keys, section.key=value");

  CLI::App* train = app.add_subcommand("train", "Train a model on a pair TSV");
  train->add_option("--train", train_tsv, "Training pairs TSV")->required();
  train->add_option("--dev", dev_tsv, "Development pairs TSV");
  train->add_option("--out", out_dir, "Run directory to create")->required();
  train->add_option("--config", config_path, "Configuration file");
  auto* train_seed = train->add_option("--seed", seed, "Random seed");
  train->add_flag("--resume", resume, "Continue from the checkpoint in the run directory");
  train->add_option("--set", sets, "Override config keys, section.key=value");

  CLI::App* eval = app.add_subcommand("eval", "Score a trained model on a pair TSV");
  eval->add_option("--run", run_dir, "Run directory from train")->required();
  eval->add_option("--pairs", pairs_tsv, "Pairs TSV to evaluate")->required();
  eval->add_option("--beam", beam, "Beam width (1 = greedy)");

  CLI::App* correct = app.add_subcommand("correct", "Correct phrases, one per line");
  correct->add_option("--run", run_dir, "Run directory from train")->required();
  correct->add_option("--input", input_path, "Input file (default: standard input)");
  correct->add_option("--beam", beam, "Beam width (1 = greedy)");
  correct->add_option("--max-len", max_len, "Output length cap (0 = model limit)");

  CLI::App* inspect = app.add_subcommand("inspect", "Describe a run directory's model");
  inspect->add_option("--run", run_dir, "Run directory from train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 2;
  }

  std::string config_text;
  if (!config_path.empty()) {
    bool ok = false;
    config_text = read_file(config_path, ok);
    if (!ok) {
      std::cerr << "data error: cannot open config file " << config_path << "\n";
      return 3;
    }
  }

  if (synth->parsed()) {
    if (!lexicon.empty() && no_phonetic) {
      std::cerr << "usage error: --lexicon and --no-phonetic conflict\n";
      return 2;
    }
    if (lexicon.empty() && !no_phonetic) {
      std::cerr << "usage error: phonetic noise needs --lexicon (or pass --no-phonetic)\n";
      return 2;
    }
    ensure_seed(config_text, synth_seed->count() > 0, seed, sets);
    std::vector<const char*> ov = as_argv(sets);
    char* result = nullptr;
    const hatsc_status st =
        hatsc_synth(phrases.c_str(), no_phonetic ? nullptr : lexicon.c_str(), out_dir.c_str(),
                    config_text.c_str(), ov.data(), ov.size(), &result);
    return finish(st, result);
  }

  if (train->parsed()) {
    ensure_seed(config_text, train_seed->count() > 0, seed, sets);
    std::vector<const char*> ov = as_argv(sets);
    char* result = nullptr;
    const hatsc_status st =
        hatsc_train(train_tsv.c_str(), dev_tsv.empty() ? nullptr : dev_tsv.c_str(),
                    out_dir.c_str(), config_text.c_str(), ov.data(), ov.size(),
                    resume ? 1 : 0, &result);
    return finish(st, result);
  }

  if (eval->parsed()) {
    char* result = nullptr;
    const hatsc_status st = hatsc_eval(run_dir.c_str(), pairs_tsv.c_str(), beam, &result);
    return finish(st, result);
  }

  if (inspect->parsed()) {
    char* result = nullptr;
    const hatsc_status st = hatsc_inspect(run_dir.c_str(), &result);
    return finish(st, result);
  }

  // correct: line-oriented, order-preserving, empty lines pass through.
  hatsc_corrector* handle = hatsc_open(run_dir.c_str());
  if (handle == nullptr) return fail(HATSC_DATA);

  std::ifstream file_in;
  if (!input_path.empty()) {
    file_in.open(input_path, std::ios::binary);
    if (!file_in) {
      std::cerr << "data error: cannot open " << input_path << "\n";
      hatsc_close(handle);
      return 3;
    }
  }
  std::istream& in = input_path.empty() ? std::cin : file_in;

  std::string line;
  int rc = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      std::cout << "\n";  // nothing to correct; keep the line count
      continue;
    }
    char* text = nullptr;
    int truncated = 0;
    const hatsc_status st = hatsc_correct(handle, line.c_str(), beam, max_len, &text, &truncated);
    if (st != HATSC_OK) {
      hatsc_free(text);
      rc = fail(st);
      break;
    }
    if (truncated != 0) std::cerr << "warning: output truncated for: " << line << "\n";
    std::cout << text << "\n";
    hatsc_free(text);
  }
  hatsc_close(handle);
  return rc;
}
