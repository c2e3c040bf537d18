#pragma once
#include "exin/nn.hpp"

namespace exin {

// Warmup-then-cosine schedule and AdamW hyperparameters. The documented
// default peak rate follows the reference configuration; desk-scale training
// runs override it (see the training config defaults).
struct OptimConfig {
  double peak_lr = 2e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double warmup_frac = 0.03;
  int64_t total_steps = 1;
};

// lr(0) = 0, linear to peak_lr at round(warmup_frac * total_steps), then
// cosine decay reaching 0 at total_steps.
double schedule_lr(const OptimConfig& cfg, int64_t step);

// Decoupled-weight-decay Adam over the trainable subset of a parameter list.
// Frozen parameters are never touched. Parameters that received no gradient
// in a step are treated as having a zero gradient (their moments still decay).
struct AdamW {
  OptimConfig cfg;

  AdamW(const ParamList& params, OptimConfig cfg);

  // one update using the gradients accumulated on `tape`; returns the lr used
  double apply(Tape& tape);

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }  // checkpoint restore
  const std::vector<Parameter*>& trainable() const { return params_; }
  Buffer& moment1(size_t i) { return m_[i]; }
  Buffer& moment2(size_t i) { return v_[i]; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Buffer> m_, v_;
  int64_t step_ = 0;
};

}  // namespace exin
