// Command layer: config parsing, exit codes, and the full gen/train/eval
// round trip at desk scale, including resume byte-identity and worker-count
// invariance of evaluation artifacts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exin/cli.hpp"
#include "exin/config.hpp"
#include "exin/data.hpp"
#include "exin/error.hpp"
#include "exin/metrics.hpp"

using namespace exin;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string& test_root() {
  static const std::string root = [] {
    const fs::path p = fs::temp_directory_path() / "exin_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
  }();
  return root;
}

// Tiny corpus shared by the round-trip cases.
const std::string& corpus_dir() {
  static const std::string dir = [] {
    const std::string d = test_root() + "/corpus";
    const CliRun r = run({"gen", "--out", d, "--train_per_class", "6", "--val_per_class", "2",
                          "--test_per_class", "2"});
    REQUIRE(r.code == kExitOk);
    return d;
  }();
  return dir;
}

// Small-geometry training flags shared by every training invocation here, so
// resume and re-train runs agree on the semantic config.
std::vector<std::string> tiny_train_args(const std::string& out_dir) {
  return {"train",        "--corpus",     corpus_dir(), "--out",       out_dir,
          "--steps",      "8",            "--batch",    "4",           "--d_llm",
          "32",           "--d_exp",      "24",         "--depth",     "2",
          "--heads",      "2",            "--mlp_hidden", "64",        "--enc_depth",
          "1",            "--enc_hidden_general", "64", "--enc_hidden_expert", "48",
          "--injection_layers", "1",      "--checkpoint_every", "5",   "--log_every",
          "4"};
}

// One shared trained run (8 steps, checkpoint at step 5 and at the end).
const std::string& trained_dir() {
  static const std::string dir = [] {
    const std::string d = test_root() + "/run";
    const CliRun r = run(tiny_train_args(d));
    REQUIRE(r.code == kExitOk);
    REQUIRE(fs::exists(d + "/ckpt_final.eyxi"));
    REQUIRE(fs::exists(d + "/ckpt_latest.eyxi"));
    REQUIRE(fs::exists(d + "/train_report.json"));
    return d;
  }();
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config files parse key=value lines with comments and overrides") {
  const std::string path = test_root() + "/sample.cfg";
  {
    std::ofstream f(path);
    f << "# a comment\n"
      << "  steps = 12  \n"
      << "peak_lr=2.5e-4\n"
      << "\n"
      << "fusion = gated\n"
      << "flag = true\n"
      << "layers = 2,4,6\n"
      << "names = a, b ,c\n";
  }
  const Config c = Config::from_file(path);
  CHECK(c.get_int("steps", 0) == 12);
  CHECK(c.get_double("peak_lr", 0.0) == doctest::Approx(2.5e-4));
  CHECK(c.get_str("fusion", "") == "gated");
  CHECK(c.get_bool("flag", false) == true);
  CHECK(c.get_int_list("layers", {}) == std::vector<int>{2, 4, 6});
  CHECK(c.get_str_list("names", {}) == std::vector<std::string>{"a", "b", "c"});
  CHECK(c.get_int("absent", 7) == 7);

  SUBCASE("typed getters reject malformed values") {
    Config bad;
    bad.set("steps", "12x");
    CHECK_THROWS_AS(bad.get_int("steps", 0), ConfigError);
    bad.set("lr", "fast");
    CHECK_THROWS_AS(bad.get_double("lr", 0.0), ConfigError);
    bad.set("flag", "yes");
    CHECK_THROWS_AS(bad.get_bool("flag", false), ConfigError);
    bad.set("layers", "2,x");
    CHECK_THROWS_AS(bad.get_int_list("layers", {}), ConfigError);
  }

  SUBCASE("unknown keys are rejected with the offending name") {
    Config c2;
    c2.set("stepz", "12");
    try {
      c2.check_keys({"steps"});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("stepz") != std::string::npos);
    }
  }

  SUBCASE("bad lines carry line numbers") {
    try {
      Config::from_text("a = 1\nnot a pair\n");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  SUBCASE("effective text is sorted and reparses to the same map") {
    const std::string text = c.effective_text();
    CHECK(Config::from_text(text).values == c.values);
    CHECK(text.find("fusion=gated\n") < text.find("steps=12\n"));
  }
}

TEST_CASE("relative output directories are rooted at EXIN_OUT_ROOT") {
  ::setenv("EXIN_OUT_ROOT", "/tmp/exin_root", 1);
  CHECK(resolve_out_dir("runs/a") == "/tmp/exin_root/runs/a");
  CHECK(resolve_out_dir("/abs/path") == "/abs/path");
  ::unsetenv("EXIN_OUT_ROOT");
  CHECK(resolve_out_dir("runs/a") == "runs/a");
}

TEST_CASE("malformed command lines exit with the usage code") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"train", "--steps"}).code == kExitUsage);           // missing value
  CHECK(run({"train", "steps", "5"}).code == kExitUsage);        // stray positional
  CHECK(run({"--help"}).code == kExitOk);
  const CliRun help = run({"train", "--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("train keys") != std::string::npos);
}

TEST_CASE("failure classes map to fixed exit codes") {
  // config errors: unknown key, missing required key, bad enum value
  CHECK(run({"train", "--stepz", "5"}).code == kExitConfig);
  CHECK(run({"gen", "--seed", "1"}).code == kExitConfig);  // missing out
  CHECK(run({"train", "--corpus", corpus_dir(), "--out", test_root() + "/x", "--fusion",
             "quantum"})
            .code == kExitConfig);
  // io errors: missing files
  CHECK(run({"eval", "--checkpoint", test_root() + "/absent.eyxi", "--corpus", corpus_dir(),
             "--out", test_root() + "/x"})
            .code == kExitIo);
  CHECK(run({"train", "--config", test_root() + "/absent.cfg"}).code == kExitIo);
  CHECK(run({"inspect-checkpoint", "--checkpoint", test_root() + "/absent.eyxi"}).code ==
        kExitIo);
}

TEST_CASE("a numeric blow-up is detected and exits with the numeric code") {
  auto args = tiny_train_args(test_root() + "/blowup");
  args.insert(args.end(),
              {"--peak_lr", "nan", "--steps", "3", "--fusion", "none", "--injection", "none"});
  const CliRun r = run(args);
  CHECK(r.code == kExitNumeric);
  CHECK(r.err.find("numeric") != std::string::npos);

  SUBCASE("in a gated model the gate contract catches the NaN first") {
    auto gated = tiny_train_args(test_root() + "/blowup_gated");
    gated.insert(gated.end(), {"--peak_lr", "nan", "--steps", "3"});
    const CliRun rg = run(gated);
    CHECK(rg.code == kExitConfig);  // contract violations are config-class failures
    CHECK(rg.err.find("gate") != std::string::npos);
  }
}

TEST_CASE("gen reports split sizes and a manifest that regenerates byte-identically") {
  const CliRun r = run({"gen", "--out", test_root() + "/corpus_b", "--train_per_class", "2",
                        "--val_per_class", "1", "--test_per_class", "1", "--seed", "5"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("32 items") != std::string::npos);  // (2+1+1) * 8 classes
  CHECK(r.out.find("16 train") != std::string::npos);

  const CliRun r2 = run({"gen", "--out", test_root() + "/corpus_b2", "--manifest",
                         test_root() + "/corpus_b/manifest.json"});
  REQUIRE(r2.code == kExitOk);
  CHECK(slurp(test_root() + "/corpus_b/blobs.bin") == slurp(test_root() + "/corpus_b2/blobs.bin"));
  CHECK(slurp(test_root() + "/corpus_b/index.jsonl") ==
        slurp(test_root() + "/corpus_b2/index.jsonl"));
  CHECK(slurp(test_root() + "/corpus_b/manifest.json") ==
        slurp(test_root() + "/corpus_b2/manifest.json"));

  // a different seed produces different bytes
  const CliRun r3 = run({"gen", "--out", test_root() + "/corpus_c", "--train_per_class", "2",
                         "--val_per_class", "1", "--test_per_class", "1", "--seed", "6"});
  REQUIRE(r3.code == kExitOk);
  CHECK(slurp(test_root() + "/corpus_b/blobs.bin") != slurp(test_root() + "/corpus_c/blobs.bin"));
}

TEST_CASE("train then eval round trip produces a self-consistent report") {
  const std::string eval_dir = test_root() + "/eval_w1";
  const CliRun r = run({"eval", "--checkpoint", trained_dir() + "/ckpt_final.eyxi", "--corpus",
                        corpus_dir(), "--split", "test", "--out", eval_dir, "--workers", "1"});
  REQUIRE(r.code == kExitOk);

  const nlohmann::json report = nlohmann::json::parse(slurp(eval_dir + "/eval_report.json"));
  CHECK(report.at("items").get<int>() == 16);
  CHECK(report.at("closed_items").get<int>() + report.at("open_items").get<int>() == 16);

  // recompute every aggregate from predictions.jsonl + the corpus gold
  const Corpus corpus = Corpus::open(corpus_dir());
  std::map<std::string, const CorpusItem*> by_id;
  for (const auto& item : corpus.items) by_id[item.id] = &item;

  ConfusionTally tally, closed_tally;
  double bleu_sum = 0, rouge_sum = 0, meteor_sum = 0;
  int64_t open_n = 0, invalid = 0;
  std::istringstream pf(slurp(eval_dir + "/predictions.jsonl"));
  std::string line;
  int64_t rows = 0;
  while (std::getline(pf, line)) {
    if (line.empty()) continue;
    ++rows;
    const nlohmann::json j = nlohmann::json::parse(line);
    const CorpusItem* item = by_id.at(j.at("id").get<std::string>());
    REQUIRE(item != nullptr);
    CHECK(j.at("gold_class").get<int>() == item->class_id);
    const int pred = j.at("pred_class").get<int>();
    tally.add(item->class_id, pred);
    if (pred == -1) ++invalid;
    if (j.at("mode").get<std::string>() == "closed") {
      closed_tally.add(item->class_id, pred);
    } else {
      ++open_n;
      const std::vector<int> gen = j.at("generated_ids").get<std::vector<int>>();
      bleu_sum += bleu1(gen, item->answer_ids);
      rouge_sum += rouge_l(gen, item->answer_ids);
      meteor_sum += meteor_basic(gen, item->answer_ids);
    }
  }
  CHECK(rows == 16);
  CHECK(invalid == report.at("invalid_predictions").get<int64_t>());
  const MacroPrf all = macro_prf(tally);
  const MacroPrf closed = macro_prf(closed_tally);
  const auto& jm = report.at("metrics");
  CHECK(jm.at("f1_macro").get<double>() == doctest::Approx(all.f1).epsilon(1e-12));
  CHECK(jm.at("precision_macro").get<double>() == doctest::Approx(all.precision).epsilon(1e-12));
  CHECK(jm.at("recall_macro").get<double>() == doctest::Approx(all.recall).epsilon(1e-12));
  CHECK(jm.at("bleu1").get<double>() ==
        doctest::Approx(open_n ? bleu_sum / open_n : 0.0).epsilon(1e-12));
  CHECK(jm.at("rouge_l").get<double>() ==
        doctest::Approx(open_n ? rouge_sum / open_n : 0.0).epsilon(1e-12));
  CHECK(jm.at("meteor_basic").get<double>() ==
        doctest::Approx(open_n ? meteor_sum / open_n : 0.0).epsilon(1e-12));
  CHECK(report.at("closed").at("f1_macro").get<double>() ==
        doctest::Approx(closed.f1).epsilon(1e-12));

  // the gated model reports gate statistics
  CHECK(report.at("alpha").at("present").get<bool>() == true);
}

TEST_CASE("every worker count produces byte-identical evaluation artifacts") {
  const std::string w1 = test_root() + "/eval_w1";  // written by the round-trip case
  run({"eval", "--checkpoint", trained_dir() + "/ckpt_final.eyxi", "--corpus", corpus_dir(),
       "--split", "test", "--out", w1, "--workers", "1"});
  const std::string w3 = test_root() + "/eval_w3";
  const CliRun r = run({"eval", "--checkpoint", trained_dir() + "/ckpt_final.eyxi", "--corpus",
                        corpus_dir(), "--split", "test", "--out", w3, "--workers", "3"});
  REQUIRE(r.code == kExitOk);
  CHECK(slurp(w1 + "/predictions.jsonl") == slurp(w3 + "/predictions.jsonl"));

  // reports match except for the echoed eval config (workers differ)
  nlohmann::json a = nlohmann::json::parse(slurp(w1 + "/eval_report.json"));
  nlohmann::json b = nlohmann::json::parse(slurp(w3 + "/eval_report.json"));
  a.erase("eval_config");
  b.erase("eval_config");
  CHECK(a == b);

  CHECK(run({"eval", "--checkpoint", trained_dir() + "/ckpt_final.eyxi", "--corpus", corpus_dir(),
             "--split", "test", "--out", test_root() + "/eval_w0", "--workers", "0"})
            .code == kExitConfig);
}

TEST_CASE("resuming an interrupted run reproduces the final checkpoint bytes") {
  const std::string resumed = test_root() + "/run_resumed";
  auto args = tiny_train_args(resumed);
  args.insert(args.end(), {"--resume", trained_dir() + "/ckpt_latest.eyxi"});
  const CliRun r = run(args);
  REQUIRE(r.code == kExitOk);
  CHECK(slurp(trained_dir() + "/ckpt_final.eyxi") == slurp(resumed + "/ckpt_final.eyxi"));

  SUBCASE("resume refuses a mismatched architecture") {
    auto bad = tiny_train_args(test_root() + "/run_bad");
    bad.insert(bad.end(), {"--resume", trained_dir() + "/ckpt_latest.eyxi", "--d_llm", "48"});
    const CliRun rb = run(bad);
    CHECK(rb.code == kExitConfig);
    CHECK(rb.err.find("d_llm") != std::string::npos);
  }

  SUBCASE("resume refuses a checkpoint that already covers the requested steps") {
    auto done = tiny_train_args(test_root() + "/run_done");
    done.insert(done.end(), {"--resume", trained_dir() + "/ckpt_final.eyxi"});
    CHECK(run(done).code == kExitConfig);
  }
}

TEST_CASE("a corrupted checkpoint is rejected as an io failure") {
  const std::string path = test_root() + "/corrupt.eyxi";
  std::string bytes = slurp(trained_dir() + "/ckpt_final.eyxi");
  bytes[bytes.size() / 2] ^= 0x40;  // flip one bit inside the records region
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << bytes;
  }
  const CliRun r = run({"inspect-checkpoint", "--checkpoint", path});
  CHECK(r.code == kExitIo);
  CHECK(run({"eval", "--checkpoint", path, "--corpus", corpus_dir(), "--split", "test", "--out",
             test_root() + "/eval_corrupt"})
            .code == kExitIo);
}

TEST_CASE("inspect-checkpoint prints the embedded config and every record") {
  const CliRun r = run({"inspect-checkpoint", "--checkpoint", trained_dir() + "/ckpt_final.eyxi"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("seed=0") != std::string::npos);
  CHECK(r.out.find("fusion=gated") != std::string::npos);
  CHECK(r.out.find("records:") != std::string::npos);
  CHECK(r.out.find("optim.step") != std::string::npos);
  CHECK(r.out.find("total values:") != std::string::npos);
}

TEST_CASE("scoring the gold answers as predictions is perfect") {
  const Corpus corpus = Corpus::open(corpus_dir());
  ConfusionTally tally;
  double bleu_sum = 0, rouge_sum = 0, meteor_sum = 0;
  int64_t open_n = 0;
  for (size_t idx : corpus.split_indices("test")) {
    const CorpusItem& item = corpus.items[idx];
    tally.add(item.class_id, item.class_id);
    if (item.mode == "open") {
      ++open_n;
      bleu_sum += bleu1(item.answer_ids, item.answer_ids);
      rouge_sum += rouge_l(item.answer_ids, item.answer_ids);
      meteor_sum += meteor_basic(item.answer_ids, item.answer_ids);
    }
  }
  REQUIRE(open_n > 0);
  const MacroPrf prf = macro_prf(tally);
  CHECK(prf.precision == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(prf.recall == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(prf.f1 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bleu_sum / open_n == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rouge_sum / open_n == doctest::Approx(1.0).epsilon(1e-15));
  // identical sequences still pay the fragmentation penalty 0.5*(1/m)^3;
  // every open answer here is exactly 4 tokens
  CHECK(meteor_sum / open_n == doctest::Approx(1.0 - 0.5 / 64.0).epsilon(1e-12));
}

TEST_CASE("ablate writes a partial report when runs fail and still exits cleanly") {
  const std::string out = test_root() + "/ablate_fail";
  const CliRun r = run({"ablate", "--corpus", test_root() + "/no_such_corpus", "--out", out,
                        "--seeds", "0", "--steps", "2"});
  CHECK(r.code == kExitOk);  // per-run failures are reported, not fatal
  const nlohmann::json report = nlohmann::json::parse(slurp(out + "/ablation_report.json"));
  CHECK(report.at("complete").get<bool>() == false);
  CHECK(report.at("ordering_holds").get<bool>() == false);
  CHECK(report.at("runs").size() == 5);  // five variants, one seed each
  for (const auto& jr : report.at("runs")) CHECK(jr.at("failed").get<bool>() == true);
  CHECK(report.at("verdicts").empty());
  CHECK(r.out.find("some runs failed") != std::string::npos);
}

TEST_CASE("a tiny ablation grid runs end to end and scores every variant") {
  const std::string out = test_root() + "/ablate_tiny";
  const CliRun r = run({"ablate",     "--corpus", corpus_dir(), "--out",     out,
                        "--seeds",    "0",        "--steps",    "6",         "--batch",
                        "4",          "--d_llm",  "32",         "--d_exp",   "24",
                        "--depth",    "2",        "--heads",    "2",         "--mlp_hidden",
                        "64",         "--enc_depth", "1",       "--enc_hidden_general", "64",
                        "--enc_hidden_expert", "48", "--injection_layers", "1",
                        "--checkpoint_every", "100", "--log_every", "100"});
  REQUIRE(r.code == kExitOk);
  const nlohmann::json report = nlohmann::json::parse(slurp(out + "/ablation_report.json"));
  CHECK(report.at("complete").get<bool>() == true);
  CHECK(report.at("runs").size() == 5);
  for (const auto& jr : report.at("runs")) {
    CHECK(jr.at("failed").get<bool>() == false);
    CHECK(jr.at("closed_f1").get<double>() >= 0.0);
    CHECK(jr.at("closed_f1").get<double>() <= 1.0);
  }
  // gate statistics only exist for the gated variants
  const auto& means = report.at("means");
  CHECK(means.at("baseline").at("alpha_gap_present").get<bool>() == false);
  CHECK(means.at("add").at("alpha_gap_present").get<bool>() == false);
  CHECK(means.at("gated").at("alpha_gap_present").get<bool>() == true);
  CHECK(means.at("gated_adapt").at("alpha_gap_present").get<bool>() == true);
  CHECK(report.at("verdicts").size() == 7);
  // six steps of training separates nothing; the report must still be honest
  for (const auto& jv : report.at("verdicts")) {
    CHECK(jv.contains("pass"));
    CHECK(jv.contains("observed"));
  }
  // five cell directories with their own artifacts
  for (const char* v : {"baseline", "add", "gated", "gated_direct", "gated_adapt"}) {
    CHECK(fs::exists(out + "/" + v + "_seed0/ckpt_final.eyxi"));
    CHECK(fs::exists(out + "/" + v + "_seed0/eval_report.json"));
  }
}
