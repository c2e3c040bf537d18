#include "exin/optim.hpp"

#include <cmath>
#include <numbers>

namespace exin {

double schedule_lr(const OptimConfig& cfg, int64_t step) {
  if (cfg.total_steps <= 0) throw ConfigError("schedule: total_steps must be positive");
  if (step < 0) throw ContractError("schedule: negative step");
  const int64_t warmup =
      std::max<int64_t>(1, std::llround(cfg.warmup_frac * static_cast<double>(cfg.total_steps)));
  if (step <= warmup)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= cfg.total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(cfg.total_steps - warmup);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(progress * std::numbers::pi));
}

AdamW::AdamW(const ParamList& params, OptimConfig c) : cfg(c) {
  if (cfg.total_steps <= 0) throw ConfigError("optimizer: total_steps must be positive");
  for (Parameter* p : params)
    if (!p->frozen) params_.push_back(p);
  for (Parameter* p : params_) {
    m_.emplace_back(static_cast<size_t>(p->value.size()), 0.0);
    v_.emplace_back(static_cast<size_t>(p->value.size()), 0.0);
  }
}

double AdamW::apply(Tape& tape) {
  const double lr = schedule_lr(cfg, step_);
  const int64_t t = step_ + 1;  // bias-correction time index
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    const Buffer* g = tape.grad(p->value);
    double* w = p->value.data();
    Buffer& m = m_[i];
    Buffer& v = v_[i];
    const int64_t n = p->value.size();
    for (int64_t j = 0; j < n; ++j) {
      const double gj = g ? (*g)[static_cast<size_t>(j)] : 0.0;
      m[static_cast<size_t>(j)] = cfg.beta1 * m[static_cast<size_t>(j)] + (1.0 - cfg.beta1) * gj;
      v[static_cast<size_t>(j)] =
          cfg.beta2 * v[static_cast<size_t>(j)] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[static_cast<size_t>(j)] / bc1;
      const double vhat = v[static_cast<size_t>(j)] / bc2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[j]);
    }
  }
  ++step_;
  return lr;
}

}  // namespace exin
