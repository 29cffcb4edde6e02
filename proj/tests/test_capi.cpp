// End-to-end exercise of the C library interface: corpus synthesis, training,
// resuming, evaluation, inspection, and interactive correction, all through
// the stable ABI that external tools use.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hatsc.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hatsc_capi_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Takes ownership of a result string from the library.
json take_json(char* text) {
  REQUIRE(text != nullptr);
  json parsed = json::parse(std::string(text));
  hatsc_free(text);
  return parsed;
}

const char* kTinyConfig =
    "seed = 21\n"
    "[model]\n"
    "streams = 2\n"
    "d_model = 16\n"
    "n_heads = 2\n"
    "d_ff = 32\n"
    "n_layers = 1\n"
    "dropout = 0.0\n"
    "max_positions = 32\n"
    "[train]\n"
    "epochs = 4\n"
    "max_tokens = 64\n"
    "warmup_steps = 10\n"
    "label_smoothing = 0.0\n"
    "log_every = 2\n"
    "[data]\n"
    "max_variants = 2\n"
    "split_train = 0.6\n"
    "split_dev = 0.2\n"
    "split_test = 0.2\n";

std::string phrase_list() {
  return "GO TO WORK\nCOME BACK HOME\nTHE OLD MAN\nA GOOD DAY\n"
         "RUN THE RACE\nREAD THE BOOK\nTAKE THE CAKE\nOPEN THE DOOR\n";
}

}  // namespace

TEST_CASE("library version and config lookup") {
  CHECK(std::string(hatsc_version()) == "hatsc 0.1.0");

  char* value = nullptr;
  REQUIRE(hatsc_config_get(kTinyConfig, "model", "d_model", &value) == HATSC_OK);
  CHECK(std::string(value) == "16");
  hatsc_free(value);

  value = nullptr;
  REQUIRE(hatsc_config_get(kTinyConfig, "", "seed", &value) == HATSC_OK);
  CHECK(std::string(value) == "21");
  hatsc_free(value);

  // A missing key is an error with a message, not a crash.
  value = nullptr;
  CHECK(hatsc_config_get(kTinyConfig, "model", "no_such_key", &value) == HATSC_DATA);
  CHECK(value == nullptr);
  CHECK(std::strlen(hatsc_last_error()) > 0);
}

TEST_CASE("synth, train, resume, eval, inspect, correct through the C interface") {
  TempDir tmp;
  const std::string phrases = tmp.sub("phrases.txt");
  write_file(phrases, phrase_list());

  // --- synth (edit-only: no lexicon) ---
  char* out = nullptr;
  REQUIRE_MESSAGE(hatsc_synth(phrases.c_str(), nullptr, tmp.sub("corpus").c_str(), kTinyConfig,
                              nullptr, 0, &out) == HATSC_OK,
                  hatsc_last_error());
  json synth = take_json(out);
  CHECK(synth.at("phrases_used").get<int>() == 8);
  CHECK(synth.at("phonetic").get<bool>() == false);
  CHECK(synth.at("seed").get<uint64_t>() == 21);
  const int total_pairs = synth.at("train_pairs").get<int>() +
                          synth.at("dev_pairs").get<int>() +
                          synth.at("test_pairs").get<int>();
  CHECK(total_pairs > 8);
  REQUIRE(fs::exists(tmp.sub("corpus") + "/train.tsv"));
  REQUIRE(fs::exists(tmp.sub("corpus") + "/manifest.json"));

  // An override reaches the synthesizer: a different seed changes the corpus.
  const char* seed_override[] = {"seed=99"};
  out = nullptr;
  REQUIRE(hatsc_synth(phrases.c_str(), nullptr, tmp.sub("corpus99").c_str(), kTinyConfig,
                      seed_override, 1, &out) == HATSC_OK);
  json synth99 = take_json(out);
  CHECK(synth99.at("seed").get<uint64_t>() == 99);
  CHECK(slurp(tmp.sub("corpus99") + "/train.tsv") != slurp(tmp.sub("corpus") + "/train.tsv"));

  // --- train ---
  const std::string train_tsv = tmp.sub("corpus") + "/train.tsv";
  const std::string dev_tsv = tmp.sub("corpus") + "/dev.tsv";
  out = nullptr;
  REQUIRE_MESSAGE(hatsc_train(train_tsv.c_str(), dev_tsv.c_str(), tmp.sub("run").c_str(),
                              kTinyConfig, nullptr, 0, 0, &out) == HATSC_OK,
                  hatsc_last_error());
  json train = take_json(out);
  CHECK(train.at("resumed").get<bool>() == false);
  CHECK(train.at("steps").get<int>() > 0);
  CHECK(train.at("param_count").get<int64_t>() > 0);
  CHECK(train.contains("dev"));
  REQUIRE(fs::exists(tmp.sub("run") + "/model.ckpt"));
  REQUIRE(fs::exists(tmp.sub("run") + "/model.ckpt.opt"));
  REQUIRE(fs::exists(tmp.sub("run") + "/manifest.json"));
  const std::string metrics_text = slurp(tmp.sub("run") + "/metrics.ndjson");
  CHECK(metrics_text.find("\"event\":") != std::string::npos);
  CHECK(metrics_text.find("dev_metrics") != std::string::npos);

  // Same config, same inputs, fresh directory: training is reproducible at
  // the byte level (logs and checkpoint alike).
  out = nullptr;
  REQUIRE(hatsc_train(train_tsv.c_str(), dev_tsv.c_str(), tmp.sub("run_twin").c_str(),
                      kTinyConfig, nullptr, 0, 0, &out) == HATSC_OK);
  hatsc_free(out);
  CHECK(slurp(tmp.sub("run_twin") + "/metrics.ndjson") == metrics_text);
  CHECK(slurp(tmp.sub("run_twin") + "/model.ckpt") == slurp(tmp.sub("run") + "/model.ckpt"));

  // --- resume: accepts the recorded inputs, rejects tampered ones ---
  out = nullptr;
  REQUIRE_MESSAGE(hatsc_train(train_tsv.c_str(), dev_tsv.c_str(), tmp.sub("run").c_str(),
                              kTinyConfig, nullptr, 0, 1, &out) == HATSC_OK,
                  hatsc_last_error());
  json resumed = take_json(out);
  CHECK(resumed.at("resumed").get<bool>() == true);

  const std::string tampered = tmp.sub("tampered.tsv");
  write_file(tampered, slurp(train_tsv) + "EXTRA\tEXTRA\tidentity\n");
  out = nullptr;
  CHECK(hatsc_train(tampered.c_str(), dev_tsv.c_str(), tmp.sub("run").c_str(), kTinyConfig,
                    nullptr, 0, 1, &out) == HATSC_DATA);
  CHECK(std::string(hatsc_last_error()).find("recorded run") != std::string::npos);

  // --- eval ---
  out = nullptr;
  REQUIRE_MESSAGE(hatsc_eval(tmp.sub("run").c_str(), (tmp.sub("corpus") + "/test.tsv").c_str(),
                             1, &out) == HATSC_OK,
                  hatsc_last_error());
  json eval = take_json(out);
  CHECK(eval.at("pairs").get<int>() > 0);
  CHECK(eval.at("ser").get<double>() >= 0.0);
  CHECK(eval.at("checkpoint_hash").get<std::string>().size() == 16);
  CHECK(eval.at("pairs_hash").get<std::string>().size() == 16);

  // --- inspect ---
  out = nullptr;
  REQUIRE(hatsc_inspect(tmp.sub("run").c_str(), &out) == HATSC_OK);
  json inspect = take_json(out);
  CHECK(inspect.at("param_count").get<int64_t>() == inspect.at("param_count_formula").get<int64_t>());
  CHECK(inspect.at("config").at("streams").get<int>() == 2);
  CHECK(inspect.at("manifest").at("tool_version").get<std::string>() == "hatsc 0.1.0");

  // --- correct ---
  hatsc_corrector* handle = hatsc_open(tmp.sub("run").c_str());
  REQUIRE_MESSAGE(handle != nullptr, hatsc_last_error());
  CHECK(hatsc_corrector_streams(handle) == 2);
  CHECK(hatsc_corrector_param_count(handle) == train.at("param_count").get<int64_t>());

  char* text = nullptr;
  int truncated = -1;
  REQUIRE(hatsc_correct(handle, "go to work", 2, 0, &text, &truncated) == HATSC_OK);
  REQUIRE(text != nullptr);
  CHECK(std::strlen(text) > 0);
  CHECK((truncated == 0 || truncated == 1));
  hatsc_free(text);

  // Bad arguments map to usage status, not crashes.
  text = nullptr;
  CHECK(hatsc_correct(handle, "GO", 0, 0, &text, &truncated) == HATSC_USAGE);
  CHECK(hatsc_correct(handle, nullptr, 1, 0, &text, &truncated) == HATSC_USAGE);
  hatsc_close(handle);

  // Opening a nonexistent run fails cleanly.
  CHECK(hatsc_open(tmp.sub("missing").c_str()) == nullptr);
  CHECK(std::strlen(hatsc_last_error()) > 0);
}

TEST_CASE("status codes distinguish usage, data, and missing-argument errors") {
  char* out = nullptr;
  CHECK(hatsc_synth(nullptr, nullptr, "x", "", nullptr, 0, &out) == HATSC_USAGE);
  CHECK(hatsc_train("nope.tsv", nullptr, "x", "", nullptr, 0, 0, &out) == HATSC_DATA);
  CHECK(hatsc_eval("nope", "nope.tsv", 1, &out) == HATSC_DATA);
  CHECK(hatsc_inspect("nope", &out) == HATSC_DATA);
  // Malformed override text is a usage problem.
  const char* bad_override[] = {"no_equals_sign"};
  CHECK(hatsc_synth("nope.txt", nullptr, "x", "", bad_override, 1, &out) == HATSC_USAGE);
  // Broken config text is a data problem.
  CHECK(hatsc_synth("nope.txt", nullptr, "x", "[model\nd=1\n", nullptr, 0, &out) == HATSC_DATA);
}
