#pragma once
#include <span>

#include "exin/tensor.hpp"

namespace exin {

// Differentiable ops. Each op validates shapes, computes a fresh output
// tensor, and (when a tape is active and any input participates in autodiff)
// records a backward closure on the active tape. Inputs are never mutated.
//
// Broadcasting for add/sub/mul: the right operand broadcasts to the left
// one, numpy-style right-aligned; each rhs dim must equal the lhs dim or 1.

// a: [..., M, K] (leading dims arbitrary), b: [K, P] -> [..., M, P]
Tensor matmul(const Tensor& a, const Tensor& b);

// batched: a [B, M, K], b [B, K, P] -> [B, M, P];
// transpose_b: b [B, P, K], multiplied as a . b^T per batch slice
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// y = mul_by * x + add_c, elementwise with scalar constants
Tensor affine(const Tensor& x, double mul_by, double add_c);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
// exact (erf-based) GELU
Tensor gelu(const Tensor& x);

// softmax over the last axis
Tensor softmax_rows(const Tensor& x);

// normalize over the last axis D; gain and bias are [D]
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// logits: [..., V] flattened to R rows; targets, weights: length R.
// Returns scalar: sum_i w_i * nll_i / sum_i w_i (0 if all weights are 0).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> weights);

// concatenate along `axis`; all other dims must match
Tensor concat(const Tensor& a, const Tensor& b, int axis);

// channel concatenation [.., D1] || [.., D2] -> [.., D1+D2]
inline Tensor concat_last(const Tensor& a, const Tensor& b) { return concat(a, b, -1); }

// slice [start, start+len) along `axis` (copies; backward scatters)
Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t len);

// table: [V, D]; ids are flat with shape_size(lead) entries -> [lead..., D]
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& lead);

// sum of all elements -> scalar
Tensor sum(const Tensor& x);

}  // namespace exin
