#pragma once
#include "exin/nn.hpp"

namespace exin {

// Adaptive injection adapter for one decoder layer. The route gate
// g = sigmoid(MLP([h_vis | fused])) is token-wise scalar and starts at 0.5;
// gamma is a zero-initialized scalar so injection starts as an exact identity
// and its strength is learned.
struct InjectionLayer {
  int layer_index = -1;
  RouterMlp route_mlp;
  Parameter gamma;

  InjectionLayer() = default;
  InjectionLayer(const std::string& name, int layer_index_, int64_t dim, Rng& rng)
      : layer_index(layer_index_),
        route_mlp(name + ".route", 2 * dim, std::max<int64_t>(1, dim / 4), 1, rng),
        gamma(name + ".gamma", Tensor({1}, 0.0), /*frozen=*/false) {}

  // h_vis [B, N, D], fused [B, N, D] -> g [B, N, 1] in (0, 1)
  Tensor compute_route(const Tensor& h_vis, const Tensor& fused) const;
  // h_vis + tanh(gamma) * (g * fused)
  Tensor operator()(const Tensor& h_vis, const Tensor& fused) const;
  void collect(ParamList& out);
};

// Ablation arm: unconditional residual add of the fused features with a
// learned strength but no router — h + tanh(gamma) * fused. Equivalent to
// the adaptive form with the gate forced to all-ones.
Tensor direct_inject(const Tensor& h_vis, const Tensor& fused, const Tensor& gamma);

}  // namespace exin
