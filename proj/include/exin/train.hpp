#pragma once
#include <iosfwd>
#include <set>
#include <string>

#include "exin/checkpoint.hpp"
#include "exin/config.hpp"
#include "exin/data.hpp"
#include "exin/model.hpp"
#include "exin/optim.hpp"

namespace exin {

// Model geometry and variant wiring read from a flat config (every key has a
// desk-scale default, so an empty config is a valid full model).
ModelConfig model_config_from(const Config& cfg);

// Attach low-rank adapters per config (lora_rank 0 disables them).
void apply_lora_from(VlmModel& model, const Config& cfg);

// Serialize model parameters (and, when given, optimizer state) into a
// checkpoint embedding `config_text`.
Checkpoint snapshot(VlmModel& model, AdamW* optim, const std::string& config_text,
                    int64_t trained_steps);

// The config text embedded in checkpoints: the effective config minus keys
// that do not influence the trained weights (out, resume, checkpoint_every,
// log_every). An interrupted-and-resumed run therefore writes a final
// checkpoint byte-identical to the uninterrupted run's.
std::string semantic_config_text(const Config& cfg);

// Restore all model parameters from checkpoint records (ConfigError when a
// parameter is missing or shaped differently).
void restore_params(VlmModel& model, const Checkpoint& ckpt);

// One training batch: stacked images, padded token rows, and the shifted
// next-token targets with loss weights over answer positions only.
struct BatchData {
  Tensor gen;    // [B, 3, H, W]
  Tensor exp;    // [B, 4, H, W]
  TokenBatch tokens;
  std::vector<int> targets;     // batch*len
  std::vector<double> weights;  // batch*len
};

// Stateless batch assembly: the sample set for (seed, step) is a pure
// function of those values, so a resumed run draws exactly the batches the
// uninterrupted run would have drawn.
BatchData make_batch(const Corpus& corpus, const std::vector<size_t>& pool, uint64_t seed,
                     int64_t step, int64_t batch);

struct TrainResult {
  int64_t steps = 0;
  double final_loss = 0.0;
  std::string final_checkpoint;
  double wall_seconds = 0.0;
};

const std::set<std::string>& train_keys();

// Fill in the documented default for every absent training key (except the
// required/transient ones: corpus, out, resume). Checkpoints embed the
// resolved text, so they are self-describing even if defaults later change.
Config resolved_train_config(const Config& cfg);

// Full training run driven by config; writes checkpoints and a run report
// under the resolved output directory and logs progress to `log`.
TrainResult train_run(const Config& cfg, std::ostream& log);

}  // namespace exin
