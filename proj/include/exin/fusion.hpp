#pragma once
#include "exin/nn.hpp"

namespace exin {

// Token-wise gate over the concatenated streams: alpha = sigmoid(MLP([g | e])),
// one scalar per token. Final layer is zero-initialized so alpha starts at 0.5.
struct FusionRouter {
  RouterMlp mlp;

  FusionRouter() = default;
  FusionRouter(const std::string& name, int64_t dim, Rng& rng)
      : mlp(name, 2 * dim, std::max<int64_t>(1, dim / 4), 1, rng) {}

  // f_gen [B, N, D], f_exp [B, N, D] -> alpha [B, N, 1] in (0, 1)
  Tensor operator()(const Tensor& f_gen, const Tensor& f_exp) const;
  void collect(ParamList& out) { mlp.collect(out); }
};

// Convex blend: fused = (1 - alpha) * f_gen + alpha * f_exp, alpha broadcast
// over the feature axis. Rejects gate values outside [0, 1].
Tensor fuse_gated(const Tensor& f_gen, const Tensor& f_exp, const Tensor& alpha);

// Ablation arm: plain elementwise sum of the streams.
Tensor fuse_add(const Tensor& f_gen, const Tensor& f_exp);

}  // namespace exin
