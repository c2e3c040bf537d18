#pragma once
#include <string>
#include <vector>

#include "exin/ops.hpp"
#include "exin/rng.hpp"

namespace exin {

using ParamList = std::vector<Parameter*>;

// y = x . w + b with w: [in, out], b: [out]. Weight init N(0, 1/sqrt(in)).
struct Linear {
  Parameter w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, int64_t in, int64_t out, Rng& rng, bool bias = true,
         bool frozen = false);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out);
  void zero_out();  // zero both weight and bias (router final layers)
};

// Pre-norm layer norm parameters (gain=1, bias=0 at init).
struct LayerNormParams {
  Parameter gain, bias;

  LayerNormParams() = default;
  LayerNormParams(const std::string& name, int64_t dim, bool frozen = false);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain.value, bias.value); }
  void collect(ParamList& out);
};

// Two affine layers with GELU between; final layer zero-initialized so the
// pre-sigmoid output is exactly 0 at step 0 (gates open at 0.5).
struct RouterMlp {
  Linear fc1, fc2;

  RouterMlp() = default;
  RouterMlp(const std::string& name, int64_t in, int64_t hidden, int64_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
  void collect(ParamList& out);
};

// Frozen base weight with an optional low-rank adapter. The effective weight
// base + s.(A.B) is materialized once per forward (cached per tape
// generation during training), so the main path stays one dense GEMM and
// gradients reach A and B through the fold. B is zero-initialized: attaching
// an adapter leaves the forward pass bit-identical until training moves B.
struct LoraLinear {
  Parameter w, b;  // frozen base
  Parameter lora_a, lora_b;
  bool has_lora = false;
  double scale = 0.0;

  LoraLinear() = default;
  LoraLinear(const std::string& name, int64_t in, int64_t out, Rng& rng);
  void attach_lora(int64_t rank, double alpha, Rng& rng);
  Tensor effective_weight() const;
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out);

 private:
  mutable Tensor fold_cache_;
  mutable uint64_t fold_gen_ = 0;
};

// q,k,v: [B,S,D] already projected; returns attention output [B,S,D].
// mask, if given, is [S,S] added to the scaled scores (0 = visible,
// large negative = blocked).
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                           const Tensor* mask);

// [S,S] mask for a visual-prefix sequence: the first n_visual positions are
// fully visible to everyone (bidirectional prefix); text positions are causal.
Tensor prefix_causal_mask(int64_t n_visual, int64_t total_len);

}  // namespace exin
