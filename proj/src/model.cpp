#include "exin/model.hpp"

#include <algorithm>
#include <cmath>

#include "exin/ops.hpp"

namespace exin {

const char* fusion_kind_name(FusionKind k) {
  switch (k) {
    case FusionKind::kNone: return "none";
    case FusionKind::kAdd: return "add";
    case FusionKind::kGated: return "gated";
  }
  return "?";
}

const char* injection_kind_name(InjectionKind k) {
  switch (k) {
    case InjectionKind::kNone: return "none";
    case InjectionKind::kDirect: return "direct";
    case InjectionKind::kAdapt: return "adapt";
  }
  return "?";
}

FusionKind parse_fusion_kind(const std::string& s) {
  if (s == "none") return FusionKind::kNone;
  if (s == "add") return FusionKind::kAdd;
  if (s == "gated") return FusionKind::kGated;
  throw ConfigError("unknown fusion kind '" + s + "' (expected none|add|gated)");
}

InjectionKind parse_injection_kind(const std::string& s) {
  if (s == "none") return InjectionKind::kNone;
  if (s == "direct") return InjectionKind::kDirect;
  if (s == "adapt") return InjectionKind::kAdapt;
  throw ConfigError("unknown injection kind '" + s + "' (expected none|direct|adapt)");
}

TokenBatch TokenBatch::pad(const std::vector<std::vector<int>>& rows, int pad_id) {
  TokenBatch tb;
  tb.batch = static_cast<int64_t>(rows.size());
  for (const auto& r : rows) tb.len = std::max(tb.len, static_cast<int64_t>(r.size()));
  tb.ids.assign(static_cast<size_t>(tb.batch * tb.len), pad_id);
  for (size_t b = 0; b < rows.size(); ++b)
    std::copy(rows[b].begin(), rows[b].end(), tb.ids.begin() + (int64_t)b * tb.len);
  return tb;
}

DecoderBlock::DecoderBlock(const std::string& name, int64_t dim, int heads_, int64_t hidden,
                           Rng& rng)
    : ln1(name + ".ln1", dim, /*frozen=*/true),
      ln2(name + ".ln2", dim, /*frozen=*/true),
      q(name + ".q", dim, dim, rng),
      k(name + ".k", dim, dim, rng),
      v(name + ".v", dim, dim, rng),
      o(name + ".o", dim, dim, rng),
      up(name + ".up", dim, hidden, rng),
      down(name + ".down", hidden, dim, rng),
      heads(heads_) {}

Tensor DecoderBlock::operator()(const Tensor& x, const Tensor& mask) const {
  Tensor h = ln1(x);
  Tensor attn = multihead_attention(q(h), k(h), v(h), heads, &mask);
  Tensor y = add(x, o(attn));
  Tensor h2 = ln2(y);
  return add(y, down(gelu(up(h2))));
}

void DecoderBlock::attach(const std::string& target, int64_t rank, double alpha, Rng& rng) {
  LoraLinear* layer = nullptr;
  if (target == "q") layer = &q;
  else if (target == "k") layer = &k;
  else if (target == "v") layer = &v;
  else if (target == "o") layer = &o;
  else if (target == "mlp_up") layer = &up;
  else if (target == "mlp_down") layer = &down;
  else
    throw ConfigError("unknown adapter target '" + target +
                      "' (expected q|k|v|o|mlp_up|mlp_down)");
  layer->attach_lora(rank, alpha, rng);
}

void DecoderBlock::collect(ParamList& out) {
  ln1.collect(out);
  ln2.collect(out);
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
  up.collect(out);
  down.collect(out);
}

static Tensor init_frozen(const std::string& name, Shape shape, uint64_t seed, double stddev,
                          Parameter& slot) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.gaussian(0.0, stddev);
  slot = Parameter(name, std::move(t), /*frozen=*/true);
  return slot.value;
}

VlmModel::VlmModel(const ModelConfig& c) : cfg(c) {
  if (cfg.vocab != vocab::kSize) throw ConfigError("vocab size must match the fixed tokenizer");
  if (cfg.image % cfg.patch != 0) throw ConfigError("image size not divisible by patch size");
  for (int l : cfg.injection_layers)
    if (l < 0 || l >= cfg.depth)
      throw ConfigError("injection layer " + std::to_string(l) + " out of range for depth " +
                        std::to_string(cfg.depth));

  {
    Rng rng(derive_seed(cfg.seed, "general_encoder"));
    general_enc = VitEncoder("gen", 3, cfg.image, cfg.patch, cfg.d_llm, cfg.enc_depth,
                             cfg.enc_heads, cfg.enc_hidden_general, rng, /*frozen=*/true);
  }
  if (cfg.fusion != FusionKind::kNone) {
    Rng erng(derive_seed(cfg.seed, "expert_encoder"));
    expert_enc.emplace("exp", 4, cfg.image, cfg.patch, cfg.d_exp, cfg.enc_depth, cfg.enc_heads,
                       cfg.enc_hidden_expert, erng, /*frozen=*/cfg.freeze_expert);
    Rng prng(derive_seed(cfg.seed, "expert_projection"));
    expert_proj.emplace("phi", cfg.d_exp, cfg.d_llm, prng);
  }
  if (cfg.fusion == FusionKind::kGated) {
    Rng rng(derive_seed(cfg.seed, "fusion_router"));
    fusion_router.emplace("fuse", cfg.d_llm, rng);
  }
  if (cfg.injection == InjectionKind::kAdapt) {
    if (cfg.fusion == FusionKind::kNone)
      throw ConfigError("injection requires a fused expert stream (fusion must not be none)");
    for (int l : cfg.injection_layers) {
      Rng rng(derive_seed(cfg.seed, "injection_" + std::to_string(l)));
      injections.emplace_back("inj" + std::to_string(l), l, cfg.d_llm, rng);
    }
  }
  if (cfg.injection == InjectionKind::kDirect) {
    if (cfg.fusion == FusionKind::kNone)
      throw ConfigError("injection requires a fused expert stream (fusion must not be none)");
    direct_gammas.reserve(cfg.injection_layers.size());
    for (int l : cfg.injection_layers)
      direct_gammas.emplace_back("inj" + std::to_string(l) + ".gamma", Tensor({1}, 0.0),
                                 /*frozen=*/false);
  }

  blocks.reserve(static_cast<size_t>(cfg.depth));
  for (int i = 0; i < cfg.depth; ++i) {
    Rng rng(derive_seed(cfg.seed, "decoder_block_" + std::to_string(i)));
    blocks.emplace_back("dec" + std::to_string(i), cfg.d_llm, cfg.heads, cfg.mlp_hidden, rng);
  }

  init_frozen("tok_embed", {cfg.vocab, cfg.d_llm}, derive_seed(cfg.seed, "tok_embed"), 1.0,
              tok_embed);
  init_frozen("pos_embed", {cfg.max_seq, cfg.d_llm}, derive_seed(cfg.seed, "pos_embed"), 0.5,
              pos_embed);
  init_frozen("lm_head", {cfg.d_llm, cfg.vocab}, derive_seed(cfg.seed, "lm_head"),
              1.0 / std::sqrt(static_cast<double>(cfg.d_llm)), lm_head);
  ln_final = LayerNormParams("ln_f", cfg.d_llm, /*frozen=*/true);
}

Tensor VlmModel::encode_fused(const Tensor& gen_imgs, const Tensor& exp_imgs,
                              ForwardTrace* trace) const {
  Tensor f_gen = general_enc(gen_imgs);
  if (cfg.fusion == FusionKind::kNone) {
    if (trace) trace->f_fused = f_gen;
    return f_gen;
  }
  Tensor f_exp = (*expert_proj)((*expert_enc)(exp_imgs));
  Tensor fused;
  if (cfg.fusion == FusionKind::kAdd) {
    fused = fuse_add(f_gen, f_exp);
  } else {
    Tensor alpha = (*fusion_router)(f_gen, f_exp);
    fused = fuse_gated(f_gen, f_exp, alpha);
    if (trace) trace->alpha = alpha;
  }
  if (trace) trace->f_fused = fused;
  return fused;
}

Tensor VlmModel::forward_batch(const Tensor& gen_imgs, const Tensor& exp_imgs,
                               const TokenBatch& text, ForwardTrace* trace) const {
  const int64_t nv = cfg.n_visual();
  const int64_t T = text.len, B = text.batch;
  if (B <= 0 || T <= 0) throw ContractError("forward_batch: empty token batch");
  if (gen_imgs.shape()[0] != B) throw ShapeError("forward_batch: image/text batch mismatch");
  if (nv + T > cfg.max_seq)
    throw ContractError("sequence length " + std::to_string(nv + T) + " exceeds max_seq " +
                        std::to_string(cfg.max_seq));
  for (int id : text.ids)
    if (id < 0 || id >= cfg.vocab) throw IndexError("token id out of range: " + std::to_string(id));

  Tensor fused = encode_fused(gen_imgs, exp_imgs, trace);
  Tensor inj_src = cfg.detach_fused ? fused.detached() : fused;

  Tensor tok = embedding(tok_embed.value, text.ids, {B, T});
  Tensor pos = narrow(pos_embed.value, 0, 0, T);
  Tensor x = concat(fused, add(tok, pos), 1);

  Tensor mask = prefix_causal_mask(nv, nv + T);
  size_t inj_i = 0;
  for (int l = 0; l < cfg.depth; ++l) {
    const bool inject_here =
        cfg.injection != InjectionKind::kNone &&
        std::find(cfg.injection_layers.begin(), cfg.injection_layers.end(), l) !=
            cfg.injection_layers.end();
    if (inject_here) {
      Tensor xv = narrow(x, 1, 0, nv);
      Tensor xt = narrow(x, 1, nv, T);
      Tensor xv2;
      if (cfg.injection == InjectionKind::kDirect) {
        xv2 = direct_inject(xv, inj_src, direct_gammas[inj_i++].value);
      } else {
        const InjectionLayer& inj = injections[inj_i++];
        if (trace) trace->routes.push_back(inj.compute_route(xv, inj_src));
        xv2 = inj(xv, inj_src);
      }
      x = concat(xv2, xt, 1);
    }
    x = blocks[static_cast<size_t>(l)](x, mask);
  }
  Tensor h_text = narrow(ln_final(x), 1, nv, T);
  return matmul(h_text, lm_head.value);
}

std::vector<int> VlmModel::generate(const Tensor& gen_img, const Tensor& exp_img,
                                    const std::vector<int>& prompt, int max_new,
                                    const std::vector<int>* allowed) const {
  if (prompt.empty()) throw ContractError("generate: empty prompt");
  std::vector<int> ids = prompt;
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    if (cfg.n_visual() + static_cast<int64_t>(ids.size()) >= cfg.max_seq) break;
    TokenBatch tb;
    tb.ids = ids;
    tb.batch = 1;
    tb.len = static_cast<int64_t>(ids.size());
    Tensor logits = forward_batch(gen_img, exp_img, tb, nullptr);
    const double* last = logits.data() + (tb.len - 1) * cfg.vocab;
    int best = -1;
    if (allowed && !allowed->empty()) {
      for (int id : *allowed) {
        if (id < 0 || id >= cfg.vocab) throw IndexError("allowlist id out of range");
        if (best < 0 || last[id] > last[best]) best = id;
      }
    } else {
      best = 0;
      for (int idv = 1; idv < cfg.vocab; ++idv)
        if (last[idv] > last[best]) best = idv;
    }
    if (best == vocab::kEos) break;
    out.push_back(best);
    ids.push_back(best);
  }
  return out;
}

void VlmModel::attach_lora(const std::vector<std::string>& targets, int64_t rank, double alpha) {
  if (rank <= 0) throw ConfigError("adapter rank must be positive");
  for (size_t i = 0; i < blocks.size(); ++i) {
    for (const auto& t : targets) {
      Rng rng(derive_seed(cfg.seed, "lora_" + std::to_string(i) + "_" + t));
      blocks[i].attach(t, rank, alpha, rng);
    }
  }
}

ParamList VlmModel::parameters() {
  ParamList out;
  general_enc.collect(out);
  if (expert_enc) expert_enc->collect(out);
  if (expert_proj) expert_proj->collect(out);
  if (fusion_router) fusion_router->collect(out);
  for (auto& inj : injections) inj.collect(out);
  for (auto& g : direct_gammas) out.push_back(&g);
  for (auto& blk : blocks) blk.collect(out);
  out.push_back(&tok_embed);
  out.push_back(&pos_embed);
  out.push_back(&lm_head);
  ln_final.collect(out);
  return out;
}

int64_t VlmModel::trainable_count() {
  int64_t n = 0;
  for (Parameter* p : parameters())
    if (!p->frozen) n += p->value.size();
  return n;
}

}  // namespace exin
