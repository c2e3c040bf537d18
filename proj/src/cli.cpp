#include "exin/cli.hpp"

#include <exception>
#include <ostream>
#include <set>
#include <string>

#include "exin/ablate.hpp"
#include "exin/checkpoint.hpp"
#include "exin/config.hpp"
#include "exin/data.hpp"
#include "exin/error.hpp"
#include "exin/eval.hpp"
#include "exin/train.hpp"

namespace exin {
namespace {

constexpr const char* kUsage =
    "usage: exin <command> [--config <file>] [--key <value>]...\n"
    "\n"
    "commands:\n"
    "  gen                 generate a synthetic lesion-VQA corpus\n"
    "  train               train a model variant on a corpus\n"
    "  eval                evaluate a checkpoint on a corpus split\n"
    "  ablate              train+evaluate the fusion/injection ladder\n"
    "  inspect-checkpoint  describe a checkpoint file\n"
    "\n"
    "Options are flat key=value settings: `--config run.cfg` merges a file of\n"
    "`key = value` lines at that point, `--key value` sets one key. Later\n"
    "writers win. Run `exin <command> --help` for the command's keys.\n";

const char* command_keys_help(const std::string& cmd) {
  if (cmd == "gen")
    return "gen keys:\n"
           "  out (required)    output directory\n"
           "  seed              corpus seed (default 0)\n"
           "  train_per_class   items per class, train split (default 500)\n"
           "  val_per_class     items per class, val split (default 50)\n"
           "  test_per_class    items per class, test split (default 100)\n"
           "  imprint           lesion amplitude in the general view (default 0.04)\n"
           "  tint              warm/cool tint amplitude (default 0.10)\n"
           "  speckle           expert-channel distractor amplitude (default 0.30)\n"
           "  speckle_count     distractor dots per image (default 6)\n"
           "  decoy             false-detection motif amplitude (default 1.0)\n"
           "  decoy_count       false-detection motifs per image (default 2)\n"
           "  manifest          regenerate from an existing manifest.json\n"
           "                    (overrides seed/sizes/knobs)\n";
  if (cmd == "train")
    return "train keys (all except corpus/out optional):\n"
           "  corpus, out, resume, seed, steps, batch, peak_lr, weight_decay,\n"
           "  warmup_frac, fusion (none|add|gated), injection (none|direct|adapt),\n"
           "  injection_layers, lora_rank, lora_alpha, lora_targets, freeze_expert,\n"
           "  detach_fused, d_llm, d_exp, mlp_hidden, depth, heads, enc_depth,\n"
           "  enc_heads, enc_hidden_general, enc_hidden_expert, image, patch,\n"
           "  max_seq, checkpoint_every, log_every\n";
  if (cmd == "eval")
    return "eval keys:\n"
           "  checkpoint (required)  checkpoint file to evaluate\n"
           "  corpus (required)      corpus directory\n"
           "  out (required)         output directory for reports\n"
           "  split                  train|val|test (default test)\n"
           "  mode                   closed|open|empty for both (default both)\n"
           "  workers                parallel shards, 1..64 (default 1)\n"
           "  max_new_open           generation budget for open items (default 8)\n";
  if (cmd == "ablate")
    return "ablate keys:\n"
           "  corpus (required), out (required)\n"
           "  seeds              comma list (default 0,1,2)\n"
           "  eval_split         split scored (default test)\n"
           "  workers            eval shards per run (default 1)\n"
           "  plus shared training overrides: steps, batch, peak_lr, weight_decay,\n"
           "  warmup_frac, lora_rank, lora_alpha, lora_targets, injection_layers,\n"
           "  d_llm, d_exp, mlp_hidden, depth, heads, enc_depth, enc_heads,\n"
           "  enc_hidden_general, enc_hidden_expert, image, patch, max_seq,\n"
           "  checkpoint_every, log_every\n";
  if (cmd == "inspect-checkpoint")
    return "inspect-checkpoint keys:\n"
           "  checkpoint (required)  checkpoint file to describe\n";
  return "";
}

// Parse everything after the subcommand into a merged config.
// Returns false (after printing usage) on malformed argv structure.
bool parse_overrides(const std::vector<std::string>& args, size_t start, Config& cfg,
                     std::ostream& err) {
  for (size_t i = start; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.size() < 3 || a.rfind("--", 0) != 0) {
      err << "unexpected argument '" << a << "' (options look like --key value)\n";
      return false;
    }
    if (i + 1 >= args.size()) {
      err << "option '" << a << "' is missing its value\n";
      return false;
    }
    const std::string key = a.substr(2);
    const std::string& value = args[++i];
    if (key == "config") {
      Config file = Config::from_file(value);  // IoError/ConfigError propagate
      for (const auto& [k, v] : file.values) cfg.set(k, v);
    } else {
      cfg.set(key, value);
    }
  }
  return true;
}

int cmd_gen(const Config& cfg, std::ostream& out) {
  static const std::set<std::string> keys = {
      "out",     "seed", "train_per_class", "val_per_class", "test_per_class",
      "imprint", "tint", "speckle",         "speckle_count", "decoy",
      "decoy_count", "manifest"};
  cfg.check_keys(keys);
  const std::string out_dir = resolve_out_dir(cfg.require_str("out"));
  if (cfg.has("manifest")) {
    generate_from_manifest(cfg.require_str("manifest"), out_dir);
  } else {
    CorpusSizes sizes;
    sizes.train_per_class = static_cast<int>(cfg.get_int("train_per_class", 500));
    sizes.val_per_class = static_cast<int>(cfg.get_int("val_per_class", 50));
    sizes.test_per_class = static_cast<int>(cfg.get_int("test_per_class", 100));
    GenKnobs knobs;
    knobs.imprint = cfg.get_double("imprint", knobs.imprint);
    knobs.tint = cfg.get_double("tint", knobs.tint);
    knobs.speckle = cfg.get_double("speckle", knobs.speckle);
    knobs.speckle_count = static_cast<int>(cfg.get_int("speckle_count", knobs.speckle_count));
    knobs.decoy = cfg.get_double("decoy", knobs.decoy);
    knobs.decoy_count = static_cast<int>(cfg.get_int("decoy_count", knobs.decoy_count));
    generate_corpus(out_dir, cfg.get_u64("seed", 0), sizes, knobs);
  }
  const Corpus corpus = Corpus::open(out_dir);
  out << "wrote corpus to " << out_dir << " (" << corpus.items.size() << " items; "
      << corpus.split_indices("train").size() << " train, "
      << corpus.split_indices("val").size() << " val, "
      << corpus.split_indices("test").size() << " test)\n";
  return kExitOk;
}

int cmd_inspect(const Config& cfg, std::ostream& out) {
  static const std::set<std::string> keys = {"checkpoint"};
  cfg.check_keys(keys);
  const Checkpoint ckpt = Checkpoint::load(cfg.require_str("checkpoint"));
  out << "format version: " << Checkpoint::kVersion << "\n";
  out << "embedded config:\n";
  std::string line;
  for (char c : ckpt.config_text) {
    if (c == '\n') {
      out << "  " << line << "\n";
      line.clear();
    } else {
      line.push_back(c);
    }
  }
  if (!line.empty()) out << "  " << line << "\n";
  out << "records: " << ckpt.records.size() << "\n";
  int64_t total = 0;
  for (const auto& r : ckpt.records) {
    out << "  " << r.name << "  [";
    for (size_t i = 0; i < r.dims.size(); ++i) out << (i ? "," : "") << r.dims[i];
    out << "]  " << r.data.size() << " values\n";
    total += static_cast<int64_t>(r.data.size());
  }
  out << "total values: " << total << "\n";
  return kExitOk;
}

int dispatch(const std::string& cmd, const Config& cfg, std::ostream& out) {
  if (cmd == "gen") return cmd_gen(cfg, out);
  if (cmd == "train") {
    TrainResult r = train_run(cfg, out);
    out << "trained " << r.steps << " steps, final loss " << r.final_loss << ", checkpoint "
        << r.final_checkpoint << "\n";
    return kExitOk;
  }
  if (cmd == "eval") {
    EvalResult r = eval_run(cfg, out);
    out << "evaluated " << r.items << " items; closed macro-F1 " << r.closed.f1 << "; report "
        << r.report_path << "\n";
    return kExitOk;
  }
  if (cmd == "ablate") {
    ablate_run(cfg, out);
    return kExitOk;
  }
  if (cmd == "inspect-checkpoint") return cmd_inspect(cfg, out);
  return kExitUsage;  // unreachable; command validated by caller
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const std::set<std::string> commands = {"gen", "train", "eval", "ablate",
                                                 "inspect-checkpoint"};
  if (args.empty() || args[0] == "--help" || args[0] == "help" || args[0] == "-h") {
    (args.empty() ? err : out) << kUsage;
    return args.empty() ? kExitUsage : kExitOk;
  }
  const std::string cmd = args[0];
  if (!commands.count(cmd)) {
    err << "unknown command '" << cmd << "'\n\n" << kUsage;
    return kExitUsage;
  }
  for (size_t i = 1; i < args.size(); ++i)
    if (args[i] == "--help" || args[i] == "-h") {
      out << command_keys_help(cmd);
      return kExitOk;
    }

  try {
    Config cfg;
    if (!parse_overrides(args, 1, cfg, err)) return kExitUsage;
    out << "[config " << cmd << "]\n";
    const std::string text = cfg.effective_text();
    if (!text.empty()) out << text;
    out << "[run]\n";
    return dispatch(cmd, cfg, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace exin
