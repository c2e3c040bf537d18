#include "exin/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "exin/vocab.hpp"

namespace exin {

ModelConfig model_config_from(const Config& cfg) {
  ModelConfig mc;
  mc.d_llm = cfg.get_int("d_llm", mc.d_llm);
  mc.d_exp = cfg.get_int("d_exp", mc.d_exp);
  mc.mlp_hidden = cfg.get_int("mlp_hidden", mc.mlp_hidden);
  mc.depth = static_cast<int>(cfg.get_int("depth", mc.depth));
  mc.heads = static_cast<int>(cfg.get_int("heads", mc.heads));
  mc.enc_depth = static_cast<int>(cfg.get_int("enc_depth", mc.enc_depth));
  mc.enc_heads = static_cast<int>(cfg.get_int("enc_heads", mc.enc_heads));
  mc.enc_hidden_general = cfg.get_int("enc_hidden_general", mc.enc_hidden_general);
  mc.enc_hidden_expert = cfg.get_int("enc_hidden_expert", mc.enc_hidden_expert);
  mc.image = cfg.get_int("image", mc.image);
  mc.patch = cfg.get_int("patch", mc.patch);
  mc.max_seq = cfg.get_int("max_seq", mc.max_seq);
  mc.seed = cfg.get_u64("seed", mc.seed);
  mc.fusion = parse_fusion_kind(cfg.get_str("fusion", fusion_kind_name(mc.fusion)));
  mc.injection = parse_injection_kind(cfg.get_str("injection", injection_kind_name(mc.injection)));
  mc.injection_layers = cfg.get_int_list("injection_layers", mc.injection_layers);
  if (mc.injection == InjectionKind::kNone) mc.injection_layers.clear();
  mc.freeze_expert = cfg.get_bool("freeze_expert", mc.freeze_expert);
  mc.detach_fused = cfg.get_bool("detach_fused", mc.detach_fused);
  return mc;
}

void apply_lora_from(VlmModel& model, const Config& cfg) {
  const int64_t rank = cfg.get_int("lora_rank", 16);
  if (rank <= 0) return;
  const double alpha = cfg.get_double("lora_alpha", 32.0);
  const std::vector<std::string> targets = cfg.get_str_list("lora_targets", {"q", "v"});
  model.attach_lora(targets, rank, alpha);
}

Checkpoint snapshot(VlmModel& model, AdamW* optim, const std::string& config_text,
                    int64_t trained_steps) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  for (Parameter* p : model.parameters())
    ckpt.add(p->name, p->value.shape(), p->value.data(), p->value.size());
  if (optim != nullptr) {
    const auto& trainable = optim->trainable();
    for (size_t i = 0; i < trainable.size(); ++i) {
      const Parameter* p = trainable[i];
      const Shape& dims = p->value.shape();
      ckpt.add("optim.m." + p->name, dims, optim->moment1(i).data(), p->value.size());
      ckpt.add("optim.v." + p->name, dims, optim->moment2(i).data(), p->value.size());
    }
    const double step_value = static_cast<double>(optim->step());
    ckpt.add("optim.step", Shape{}, &step_value, 1);
  }
  const double steps_value = static_cast<double>(trained_steps);
  ckpt.add("trained_steps", Shape{}, &steps_value, 1);
  return ckpt;
}

std::string semantic_config_text(const Config& cfg) {
  Config c = cfg;
  for (const char* key : {"out", "resume", "checkpoint_every", "log_every"}) c.values.erase(key);
  return c.effective_text();
}

void restore_params(VlmModel& model, const Checkpoint& ckpt) {
  for (Parameter* p : model.parameters()) {
    const CheckpointRecord* rec = ckpt.find(p->name);
    if (rec == nullptr) throw ConfigError("checkpoint is missing parameter '" + p->name + "'");
    if (rec->dims != p->value.shape())
      throw ConfigError("checkpoint parameter '" + p->name + "' has a different shape");
    std::copy(rec->data.begin(), rec->data.end(), p->value.data());
  }
}

namespace {

void restore_optim(AdamW& optim, const Checkpoint& ckpt) {
  const auto& trainable = optim.trainable();
  for (size_t i = 0; i < trainable.size(); ++i) {
    const Parameter* p = trainable[i];
    for (const char* kind : {"m", "v"}) {
      const CheckpointRecord* rec = ckpt.find(std::string("optim.") + kind + "." + p->name);
      if (rec == nullptr)
        throw ConfigError("checkpoint is missing optimizer state for '" + p->name + "'");
      Buffer& dst = (kind[0] == 'm') ? optim.moment1(i) : optim.moment2(i);
      if (rec->data.size() != dst.size())
        throw ConfigError("optimizer state for '" + p->name + "' has a different size");
      std::copy(rec->data.begin(), rec->data.end(), dst.begin());
    }
  }
  const CheckpointRecord* step = ckpt.find("optim.step");
  if (step == nullptr || step->data.size() != 1)
    throw ConfigError("checkpoint is missing optimizer step");
  optim.set_step(static_cast<int64_t>(step->data[0]));
}

int64_t checkpoint_trained_steps(const Checkpoint& ckpt) {
  const CheckpointRecord* rec = ckpt.find("trained_steps");
  if (rec == nullptr || rec->data.size() != 1)
    throw ConfigError("checkpoint is missing the trained_steps record");
  return static_cast<int64_t>(rec->data[0]);
}

// architecture keys that must match between a resume checkpoint's embedded
// config and the current run
const char* kArchKeys[] = {
    "d_llm",        "d_exp",      "mlp_hidden",         "depth",
    "heads",        "enc_depth",  "enc_heads",          "enc_hidden_general",
    "enc_hidden_expert", "image", "patch",              "max_seq",
    "seed",         "fusion",     "injection",          "injection_layers",
    "lora_rank",    "lora_alpha", "lora_targets",       "freeze_expert",
    "detach_fused",
};

void check_resume_compatible(const Config& current, const Config& embedded) {
  for (const char* key : kArchKeys) {
    const std::string a = current.get_str(key, "");
    const std::string b = embedded.get_str(key, "");
    if (a != b)
      throw ConfigError(std::string("resume: key '") + key + "' differs from the checkpoint ('" +
                        a + "' vs '" + b + "')");
  }
}

uint64_t frozen_checksum(VlmModel& model) {
  uint64_t h = 0x9e3779b97f4a7c15ull;
  for (Parameter* p : model.parameters()) {
    if (!p->frozen) continue;
    for (int64_t i = 0; i < p->value.size(); ++i) {
      uint64_t bits;
      std::memcpy(&bits, &p->value.data()[i], 8);
      h = splitmix64(h ^ bits);
    }
  }
  return h;
}

}  // namespace

BatchData make_batch(const Corpus& corpus, const std::vector<size_t>& pool, uint64_t seed,
                     int64_t step, int64_t batch) {
  if (pool.empty()) throw ContractError("make_batch: empty sample pool");
  Rng rng(derive_seed(seed, "batch", static_cast<uint64_t>(step)));
  std::vector<const ImageSample*> ptrs;
  std::vector<ImageSample> images;
  std::vector<std::vector<int>> rows;
  std::vector<int64_t> qlens, row_lens;
  images.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    const CorpusItem& item =
        corpus.items[pool[static_cast<size_t>(rng.index(static_cast<int64_t>(pool.size())))]];
    images.push_back(corpus.load_image(item));
    std::vector<int> row = item.question_ids;
    row.insert(row.end(), item.answer_ids.begin(), item.answer_ids.end());
    row.push_back(vocab::kEos);
    qlens.push_back(static_cast<int64_t>(item.question_ids.size()));
    row_lens.push_back(static_cast<int64_t>(row.size()));
    rows.push_back(std::move(row));
  }
  for (const ImageSample& s : images) ptrs.push_back(&s);

  BatchData out;
  out.gen = stack_general(ptrs);
  out.exp = stack_expert_input(ptrs);
  out.tokens = TokenBatch::pad(rows, vocab::kPad);
  const int64_t L = out.tokens.len;
  out.targets.assign(static_cast<size_t>(batch * L), vocab::kPad);
  out.weights.assign(static_cast<size_t>(batch * L), 0.0);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t + 1 < L; ++t) {
      if (t + 1 >= row_lens[static_cast<size_t>(b)]) break;
      out.targets[static_cast<size_t>(b * L + t)] = out.tokens.at(b, t + 1);
      if (t + 1 >= qlens[static_cast<size_t>(b)])
        out.weights[static_cast<size_t>(b * L + t)] = 1.0;
    }
  return out;
}

Config resolved_train_config(const Config& cfg) {
  static const std::pair<const char*, const char*> kDefaults[] = {
      {"seed", "0"},          {"steps", "2000"},
      {"batch", "16"},        {"peak_lr", "3e-4"},
      {"weight_decay", "0.05"}, {"warmup_frac", "0.03"},
      {"fusion", "gated"},    {"injection", "adapt"},
      {"injection_layers", "2,4,6"}, {"lora_rank", "16"},
      {"lora_alpha", "32"},   {"lora_targets", "q,v"},
      {"freeze_expert", "false"}, {"detach_fused", "false"},
      {"d_llm", "64"},        {"d_exp", "48"},
      {"mlp_hidden", "256"},  {"depth", "8"},
      {"heads", "4"},         {"enc_depth", "2"},
      {"enc_heads", "4"},     {"enc_hidden_general", "256"},
      {"enc_hidden_expert", "192"}, {"image", "32"},
      {"patch", "8"},         {"max_seq", "128"},
      {"checkpoint_every", "500"}, {"log_every", "50"},
  };
  Config out = cfg;
  for (const auto& [key, value] : kDefaults)
    if (!out.has(key)) out.set(key, value);
  return out;
}

const std::set<std::string>& train_keys() {
  static const std::set<std::string> keys = {
      "corpus",      "out",          "seed",
      "steps",       "batch",        "peak_lr",
      "weight_decay", "warmup_frac", "fusion",
      "injection",   "injection_layers", "lora_rank",
      "lora_alpha",  "lora_targets", "freeze_expert",
      "detach_fused", "d_llm",       "d_exp",
      "mlp_hidden",  "depth",        "heads",
      "enc_depth",   "enc_heads",    "enc_hidden_general",
      "enc_hidden_expert", "image",  "patch",
      "max_seq",     "checkpoint_every", "log_every",
      "resume",
  };
  return keys;
}

TrainResult train_run(const Config& raw_cfg, std::ostream& log) {
  raw_cfg.check_keys(train_keys());
  const auto t0 = std::chrono::steady_clock::now();
  const Config cfg = resolved_train_config(raw_cfg);

  const std::string corpus_dir = cfg.require_str("corpus");
  const std::string out_dir = resolve_out_dir(cfg.require_str("out"));
  const uint64_t seed = cfg.get_u64("seed", 0);
  const int64_t steps = cfg.get_int("steps", 2000);
  const int64_t batch = cfg.get_int("batch", 16);
  const int64_t checkpoint_every = cfg.get_int("checkpoint_every", 500);
  const int64_t log_every = cfg.get_int("log_every", 50);
  if (steps <= 0) throw ConfigError("steps must be positive");
  if (batch <= 0) throw ConfigError("batch must be positive");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  VlmModel model(model_config_from(cfg));
  apply_lora_from(model, cfg);

  OptimConfig ocfg;
  ocfg.peak_lr = cfg.get_double("peak_lr", 3e-4);
  ocfg.weight_decay = cfg.get_double("weight_decay", 0.05);
  ocfg.warmup_frac = cfg.get_double("warmup_frac", 0.03);
  ocfg.total_steps = steps;
  AdamW optim(model.parameters(), ocfg);

  int64_t start_step = 0;
  if (cfg.has("resume") && !cfg.get_str("resume", "").empty()) {
    const Checkpoint ckpt = Checkpoint::load(cfg.require_str("resume"));
    check_resume_compatible(cfg, Config::from_text(ckpt.config_text));
    restore_params(model, ckpt);
    restore_optim(optim, ckpt);
    start_step = checkpoint_trained_steps(ckpt);
    if (start_step >= steps)
      throw ConfigError("resume checkpoint already has " + std::to_string(start_step) +
                        " steps; nothing to do for steps=" + std::to_string(steps));
    log << "resumed from " << cfg.get_str("resume", "") << " at step " << start_step << "\n";
  }

  const Corpus corpus = Corpus::open(corpus_dir);
  const std::vector<size_t> pool = corpus.split_indices("train");
  if (pool.empty()) throw IoError("corpus has no train split: " + corpus_dir);

  const std::string config_text = semantic_config_text(cfg);
  const uint64_t frozen_before = frozen_checksum(model);

  log << "training " << fusion_kind_name(model.cfg.fusion) << "/"
      << injection_kind_name(model.cfg.injection) << " seed=" << seed << " steps=" << steps
      << " batch=" << batch << " trainable=" << model.trainable_count() << "\n";

  double loss_value = 0.0;
  const std::string latest_path = out_dir + "/ckpt_latest.eyxi";
  for (int64_t step = start_step; step < steps; ++step) {
    BatchData data = make_batch(corpus, pool, seed, step, batch);
    Tape tape;
    Tensor logits = model.forward_batch(data.gen, data.exp, data.tokens);
    Tensor loss = cross_entropy(logits, data.targets, data.weights);
    loss_value = loss.item();
    if (!std::isfinite(loss_value))
      throw NumericError("loss is not finite at step " + std::to_string(step));
    tape.backward(loss);
    const double lr = optim.apply(tape);
    if (step % log_every == 0 || step + 1 == steps)
      log << "step=" << step << " lr=" << lr << " loss=" << loss_value << "\n";
    if (checkpoint_every > 0 && (step + 1) % checkpoint_every == 0 && step + 1 < steps)
      snapshot(model, &optim, config_text, step + 1).save(latest_path);
  }

  if (frozen_checksum(model) != frozen_before)
    throw ContractError("frozen parameters changed during training");

  const std::string final_path = out_dir + "/ckpt_final.eyxi";
  snapshot(model, &optim, config_text, steps).save(final_path);

  TrainResult result;
  result.steps = steps;
  result.final_loss = loss_value;
  result.final_checkpoint = final_path;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::ordered_json report;
  report["config"] = config_text;
  report["seed"] = seed;
  report["steps"] = steps;
  report["final_loss"] = result.final_loss;
  report["wall_seconds"] = result.wall_seconds;
  report["final_checkpoint"] = final_path;
  std::ofstream rf(out_dir + "/train_report.json", std::ios::trunc);
  if (!rf) throw IoError("cannot write train report in " + out_dir);
  rf << report.dump(2) << "\n";

  log << "done: loss=" << result.final_loss << " wall=" << result.wall_seconds << "s -> "
      << final_path << "\n";
  return result;
}

}  // namespace exin
