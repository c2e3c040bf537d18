#include "exin/ablate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "exin/error.hpp"
#include "exin/eval.hpp"
#include "exin/train.hpp"

namespace exin {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct VariantSpec {
  const char* name;
  const char* fusion;
  const char* injection;
};

// The ladder, weakest to strongest: general stream only; plain elementwise
// sum of the streams; gated fusion; gated fusion re-injected mid-decoder by
// a plain scaled add; gated fusion re-injected through the token router.
constexpr VariantSpec kVariants[] = {
    {"baseline", "none", "none"},
    {"add", "add", "none"},
    {"gated", "gated", "none"},
    {"gated_direct", "gated", "direct"},
    {"gated_adapt", "gated", "adapt"},
};

// Training keys an ablation config may override for every cell of the grid.
// fusion/injection are fixed per variant, out/resume per cell, so those are
// deliberately absent.
const char* const kSharedKeys[] = {
    "steps",    "batch",     "peak_lr",   "weight_decay",
    "warmup_frac", "lora_rank", "lora_alpha", "lora_targets",
    "injection_layers", "d_llm", "d_exp",  "mlp_hidden",
    "depth",    "heads",     "enc_depth", "enc_heads",
    "enc_hidden_general", "enc_hidden_expert", "image", "patch",
    "max_seq",  "checkpoint_every", "log_every",
};

struct VariantMean {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double alpha_gap = 0.0;
  bool has_alpha = false;
  int count = 0;
};

const AblationRun* find_run(const std::vector<AblationRun>& runs, const std::string& variant,
                            uint64_t seed) {
  for (const auto& r : runs)
    if (r.variant == variant && r.seed == seed) return &r;
  return nullptr;
}

}  // namespace

const std::set<std::string>& ablate_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = {"corpus", "out", "seeds", "eval_split", "workers"};
    for (const char* s : kSharedKeys) k.insert(s);
    return k;
  }();
  return keys;
}

AblationResult ablate_run(const Config& cfg, std::ostream& log) {
  cfg.check_keys(ablate_keys());
  const std::string corpus = cfg.require_str("corpus");
  const std::string out_dir = resolve_out_dir(cfg.require_str("out"));
  const std::string eval_split = cfg.get_str("eval_split", "test");
  const int64_t workers = cfg.get_int("workers", 1);

  std::vector<uint64_t> seeds;
  for (int s : cfg.get_int_list("seeds", {0, 1, 2})) {
    if (s < 0) throw ConfigError("ablate: seeds must be non-negative, got " + std::to_string(s));
    seeds.push_back(static_cast<uint64_t>(s));
  }
  if (seeds.empty()) throw ConfigError("ablate: seeds list is empty");

  fs::create_directories(out_dir);

  AblationResult result;
  result.complete = true;

  for (const auto& variant : kVariants) {
    for (uint64_t seed : seeds) {
      AblationRun run;
      run.variant = variant.name;
      run.seed = seed;
      const std::string cell_dir =
          (fs::path(out_dir) / (std::string(variant.name) + "_seed" + std::to_string(seed)))
              .string();
      log << "=== " << variant.name << " seed " << seed << " ===\n";
      try {
        Config tcfg;
        for (const char* key : kSharedKeys)
          if (cfg.has(key)) tcfg.set(key, cfg.values.at(key));
        tcfg.set("corpus", corpus);
        tcfg.set("out", cell_dir);
        tcfg.set("seed", std::to_string(seed));
        tcfg.set("fusion", variant.fusion);
        tcfg.set("injection", variant.injection);
        TrainResult trained = train_run(tcfg, log);

        Config ecfg;
        ecfg.set("checkpoint", trained.final_checkpoint);
        ecfg.set("corpus", corpus);
        ecfg.set("split", eval_split);
        ecfg.set("out", cell_dir);
        ecfg.set("workers", std::to_string(workers));
        EvalResult evaluated = eval_run(ecfg, log);

        run.closed_f1 = evaluated.closed.f1;
        run.closed_precision = evaluated.closed.precision;
        run.closed_recall = evaluated.closed.recall;
        run.alpha_gap = evaluated.alpha_gap;
        run.has_alpha = evaluated.has_alpha;
      } catch (const std::exception& e) {
        run.failed = true;
        run.error = e.what();
        result.complete = false;
        log << "run failed: " << e.what() << "\n";
      }
      result.runs.push_back(std::move(run));
    }
  }

  // Per-variant means over the seeds that finished.
  std::map<std::string, VariantMean> means;
  for (const auto& variant : kVariants) {
    VariantMean m;
    for (uint64_t seed : seeds) {
      const AblationRun* r = find_run(result.runs, variant.name, seed);
      if (!r || r->failed) continue;
      m.f1 += r->closed_f1;
      m.precision += r->closed_precision;
      m.recall += r->closed_recall;
      m.alpha_gap += r->alpha_gap;
      m.has_alpha = m.has_alpha || r->has_alpha;
      ++m.count;
    }
    if (m.count > 0) {
      m.f1 /= m.count;
      m.precision /= m.count;
      m.recall /= m.count;
      m.alpha_gap /= m.count;
    }
    means[variant.name] = m;
  }

  if (result.complete) {
    auto margin = [&](const char* hi, const char* lo) {
      return means[hi].f1 - means[lo].f1;
    };
    result.verdicts = {
        {"add_beats_baseline_f1", margin("add", "baseline") >= 0.02,
         margin("add", "baseline"), 0.02},
        {"gated_beats_add_f1", margin("gated", "add") >= 0.02, margin("gated", "add"), 0.02},
        {"direct_at_least_gated_f1", margin("gated_direct", "gated") >= 0.0,
         margin("gated_direct", "gated"), 0.0},
        {"adapt_beats_direct_f1", margin("gated_adapt", "gated_direct") >= 0.02,
         margin("gated_adapt", "gated_direct"), 0.02},
        {"adapt_precision_over_direct",
         means["gated_adapt"].precision > means["gated_direct"].precision,
         means["gated_adapt"].precision - means["gated_direct"].precision, 0.0},
        {"add_recall_over_baseline", means["add"].recall > means["baseline"].recall,
         means["add"].recall - means["baseline"].recall, 0.0},
        {"adapt_alpha_gap", means["gated_adapt"].has_alpha && means["gated_adapt"].alpha_gap >= 0.1,
         means["gated_adapt"].alpha_gap, 0.1},
    };
    result.ordering_holds = true;
    for (const auto& v : result.verdicts) result.ordering_holds = result.ordering_holds && v.pass;
  }

  // Human-readable table.
  log << "\nvariant        ";
  for (uint64_t seed : seeds) log << " f1(s" << seed << ")";
  log << "   mean-f1  mean-prec  mean-rec  alpha-gap\n";
  log << std::fixed << std::setprecision(4);
  for (const auto& variant : kVariants) {
    log << std::left << std::setw(15) << variant.name << std::right;
    for (uint64_t seed : seeds) {
      const AblationRun* r = find_run(result.runs, variant.name, seed);
      if (r && !r->failed)
        log << " " << std::setw(6) << r->closed_f1;
      else
        log << "   FAIL";
    }
    const VariantMean& m = means[variant.name];
    if (m.count > 0) {
      log << "    " << std::setw(6) << m.f1 << "     " << std::setw(6) << m.precision << "    "
          << std::setw(6) << m.recall;
      if (m.has_alpha)
        log << "     " << std::setw(6) << m.alpha_gap;
      else
        log << "          -";
    } else {
      log << "    all runs failed";
    }
    log << "\n";
  }
  log << "\n";
  if (result.complete) {
    for (const auto& v : result.verdicts)
      log << (v.pass ? "[PASS] " : "[FAIL] ") << v.name << ": observed " << v.observed
          << " (required " << (v.required > 0.0 ? ">= " : "> ") << v.required << ")\n";
    log << (result.ordering_holds ? "ordering holds\n" : "ordering violated\n");
  } else {
    log << "some runs failed; ordering not checked\n";
  }
  log.unsetf(std::ios::fixed);
  log << std::setprecision(6);

  // Machine-readable report.
  ordered_json report;
  report["ablation_config"] = cfg.effective_text();
  report["seeds"] = cfg.get_int_list("seeds", {0, 1, 2});
  report["eval_split"] = eval_split;
  report["complete"] = result.complete;
  ordered_json jruns = ordered_json::array();
  for (const auto& r : result.runs) {
    ordered_json jr;
    jr["variant"] = r.variant;
    jr["seed"] = r.seed;
    jr["failed"] = r.failed;
    if (r.failed) {
      jr["error"] = r.error;
    } else {
      jr["closed_f1"] = r.closed_f1;
      jr["closed_precision"] = r.closed_precision;
      jr["closed_recall"] = r.closed_recall;
      jr["alpha_gap_present"] = r.has_alpha;
      jr["alpha_gap"] = r.alpha_gap;
    }
    jruns.push_back(std::move(jr));
  }
  report["runs"] = std::move(jruns);
  ordered_json jmeans;
  for (const auto& variant : kVariants) {
    const VariantMean& m = means[variant.name];
    ordered_json jm;
    jm["runs_succeeded"] = m.count;
    jm["closed_f1"] = m.f1;
    jm["closed_precision"] = m.precision;
    jm["closed_recall"] = m.recall;
    jm["alpha_gap_present"] = m.has_alpha;
    jm["alpha_gap"] = m.alpha_gap;
    jmeans[variant.name] = std::move(jm);
  }
  report["means"] = std::move(jmeans);
  ordered_json jverdicts = ordered_json::array();
  for (const auto& v : result.verdicts) {
    ordered_json jv;
    jv["name"] = v.name;
    jv["pass"] = v.pass;
    jv["observed"] = v.observed;
    jv["required"] = v.required;
    jverdicts.push_back(std::move(jv));
  }
  report["verdicts"] = std::move(jverdicts);
  report["ordering_holds"] = result.ordering_holds;

  result.report_path = (fs::path(out_dir) / "ablation_report.json").string();
  std::ofstream rf(result.report_path, std::ios::binary | std::ios::trunc);
  if (!rf) throw IoError("cannot write " + result.report_path);
  rf << report.dump(2) << "\n";
  rf.close();
  if (!rf) throw IoError("failed writing " + result.report_path);
  log << "wrote " << result.report_path << "\n";
  return result;
}

}  // namespace exin
