#include "exin/nn.hpp"

#include <cmath>

namespace exin {

namespace {
Tensor gaussian_tensor(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.gaussian(0.0, stddev);
  return t;
}
}  // namespace

Linear::Linear(const std::string& name, int64_t in, int64_t out, Rng& rng, bool bias, bool frozen)
    : w(name + ".w", gaussian_tensor({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))),
        frozen),
      has_bias(bias) {
  if (bias) b = Parameter(name + ".b", Tensor({out}, 0.0), frozen);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, w.value);
  return has_bias ? add(y, b.value) : y;
}

void Linear::collect(ParamList& out) {
  out.push_back(&w);
  if (has_bias) out.push_back(&b);
}

void Linear::zero_out() {
  for (auto& v : w.value.vec()) v = 0.0;
  if (has_bias)
    for (auto& v : b.value.vec()) v = 0.0;
}

LayerNormParams::LayerNormParams(const std::string& name, int64_t dim, bool frozen)
    : gain(name + ".gain", Tensor({dim}, 1.0), frozen), bias(name + ".bias", Tensor({dim}, 0.0), frozen) {}

void LayerNormParams::collect(ParamList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

RouterMlp::RouterMlp(const std::string& name, int64_t in, int64_t hidden, int64_t out, Rng& rng)
    : fc1(name + ".fc1", in, hidden, rng), fc2(name + ".fc2", hidden, out, rng) {
  fc2.zero_out();
}

void RouterMlp::collect(ParamList& out) {
  fc1.collect(out);
  fc2.collect(out);
}

LoraLinear::LoraLinear(const std::string& name, int64_t in, int64_t out, Rng& rng)
    : w(name + ".w", gaussian_tensor({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))),
        /*frozen=*/true),
      b(name + ".b", Tensor({out}, 0.0), /*frozen=*/true) {}

void LoraLinear::attach_lora(int64_t rank, double alpha, Rng& rng) {
  const int64_t in = w.value.dim(0), out = w.value.dim(1);
  lora_a = Parameter(w.name + ".lora_a",
                     gaussian_tensor({in, rank}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
  lora_b = Parameter(w.name + ".lora_b", Tensor({rank, out}, 0.0));
  scale = alpha / static_cast<double>(rank);
  has_lora = true;
  fold_cache_ = Tensor();
  fold_gen_ = 0;
}

Tensor LoraLinear::effective_weight() const {
  if (!has_lora) return w.value;
  Tape* tp = Tape::active();
  if (tp) {
    if (fold_gen_ != tp->generation() || !fold_cache_.defined()) {
      fold_cache_ = add(w.value, affine(matmul(lora_a.value, lora_b.value), scale, 0.0));
      fold_gen_ = tp->generation();
    }
    return fold_cache_;
  }
  return add(w.value, affine(matmul(lora_a.value, lora_b.value), scale, 0.0));
}

Tensor LoraLinear::operator()(const Tensor& x) const { return add(matmul(x, effective_weight()), b.value); }

void LoraLinear::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
  if (has_lora) {
    out.push_back(&lora_a);
    out.push_back(&lora_b);
  }
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                           const Tensor* mask) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape())
    throw ShapeError("attention: q/k/v must share a [B,S,D] shape");
  const int64_t D = q.dim(2);
  if (D % heads != 0)
    throw ShapeError("attention: width " + std::to_string(D) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const int64_t dh = D / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = narrow(q, 2, h * dh, dh);
    Tensor kh = narrow(k, 2, h * dh, dh);
    Tensor vh = narrow(v, 2, h * dh, dh);
    Tensor scores = affine(bmm(qh, kh, /*transpose_b=*/true), inv_sqrt, 0.0);
    if (mask) scores = add(scores, *mask);
    Tensor ctx = bmm(softmax_rows(scores), vh);
    out = out.defined() ? concat_last(out, ctx) : ctx;
  }
  return out;
}

Tensor prefix_causal_mask(int64_t n_visual, int64_t total_len) {
  if (n_visual < 0 || n_visual > total_len) throw ContractError("prefix_causal_mask: bad spans");
  // -1e30 instead of -inf keeps every downstream finite check meaningful
  constexpr double kBlock = -1e30;
  Tensor m({total_len, total_len}, 0.0);
  for (int64_t i = 0; i < total_len; ++i)
    for (int64_t j = 0; j < total_len; ++j)
      if (j >= n_visual && j > i) m.data()[i * total_len + j] = kBlock;
  return m;
}

}  // namespace exin
