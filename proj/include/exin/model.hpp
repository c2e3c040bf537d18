#pragma once
#include <optional>
#include <string>
#include <vector>

#include "exin/encoders.hpp"
#include "exin/fusion.hpp"
#include "exin/injection.hpp"
#include "exin/nn.hpp"
#include "exin/vocab.hpp"

namespace exin {

// How the two visual streams are combined into the prefix.
enum class FusionKind { kNone, kAdd, kGated };
// How (and whether) the fused features are re-injected into deeper layers.
enum class InjectionKind { kNone, kDirect, kAdapt };

const char* fusion_kind_name(FusionKind k);
const char* injection_kind_name(InjectionKind k);
FusionKind parse_fusion_kind(const std::string& s);          // ConfigError on unknown
InjectionKind parse_injection_kind(const std::string& s);    // ConfigError on unknown

struct ModelConfig {
  int64_t d_llm = 64;   // decoder width; also the fused feature width
  int64_t d_exp = 48;   // expert encoder width before projection
  int64_t mlp_hidden = 256;
  int depth = 8;
  int heads = 4;
  int enc_depth = 2;
  int enc_heads = 4;
  int64_t enc_hidden_general = 256;
  int64_t enc_hidden_expert = 192;
  int64_t image = 32;
  int64_t patch = 8;
  int64_t vocab = vocab::kSize;
  int64_t max_seq = 128;
  uint64_t seed = 7;
  FusionKind fusion = FusionKind::kGated;
  InjectionKind injection = InjectionKind::kAdapt;
  std::vector<int> injection_layers = {2, 4, 6};
  bool freeze_expert = false;   // freeze the expert encoder (projection stays trainable)
  bool detach_fused = false;    // stop gradients from the injection branch into fusion

  int64_t n_visual() const { return (image / patch) * (image / patch); }
};

// A padded batch of token rows.
struct TokenBatch {
  std::vector<int> ids;  // batch*len, row-major
  int64_t batch = 0, len = 0;

  static TokenBatch pad(const std::vector<std::vector<int>>& rows, int pad_id);
  int at(int64_t b, int64_t t) const { return ids[static_cast<size_t>(b * len + t)]; }
};

// Values captured during a forward pass for diagnostics and gate analysis.
struct ForwardTrace {
  Tensor alpha;                // [B, N, 1] fusion gate (gated fusion only)
  Tensor f_fused;              // [B, N, d_llm] fused visual features
  std::vector<Tensor> routes;  // per injection layer, [B, N, 1] (adaptive only)
};

// Pre-norm decoder block; all projections carry an optional low-rank adapter
// over a frozen base.
struct DecoderBlock {
  LayerNormParams ln1, ln2;
  LoraLinear q, k, v, o, up, down;
  int heads = 1;

  DecoderBlock() = default;
  DecoderBlock(const std::string& name, int64_t dim, int heads, int64_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& mask) const;
  void attach(const std::string& target, int64_t rank, double alpha, Rng& rng);
  void collect(ParamList& out);
};

// Dual-stream visual frontend + frozen decoder backbone with trainable
// fusion/injection adapters. Every module draws its initial weights from a
// seed derived from (config seed, module label), so the presence or absence
// of one module never shifts another module's initialization.
struct VlmModel {
  ModelConfig cfg;
  VitEncoder general_enc;                    // frozen
  std::optional<VitEncoder> expert_enc;      // trainable unless freeze_expert
  std::optional<Linear> expert_proj;         // d_exp -> d_llm, trainable
  std::optional<FusionRouter> fusion_router; // gated fusion only
  std::vector<InjectionLayer> injections;    // adaptive injection only
  std::vector<Parameter> direct_gammas;      // direct injection only, one per layer
  std::vector<DecoderBlock> blocks;
  Parameter tok_embed;  // [vocab, d_llm] frozen
  Parameter pos_embed;  // [max_seq, d_llm] frozen, text positions only
  Parameter lm_head;    // [d_llm, vocab] frozen
  LayerNormParams ln_final;

  explicit VlmModel(const ModelConfig& cfg);

  // fused visual prefix [B, N, d_llm]; fills trace if given
  Tensor encode_fused(const Tensor& gen_imgs, const Tensor& exp_imgs, ForwardTrace* trace) const;

  // full pass -> logits [B, T, vocab] over the text positions; logits[b,t]
  // scores the token at text position t+1 (next-token prediction)
  Tensor forward_batch(const Tensor& gen_imgs, const Tensor& exp_imgs, const TokenBatch& text,
                       ForwardTrace* trace = nullptr) const;

  // greedy decode for one sample; stops at EOS or max_new tokens. If
  // allowed is given, every generated token is the argmax over that id set
  // only (closed-question evaluation restricts to the class tokens).
  std::vector<int> generate(const Tensor& gen_img, const Tensor& exp_img,
                            const std::vector<int>& prompt, int max_new,
                            const std::vector<int>* allowed = nullptr) const;

  // attach adapters to the named projections in every decoder block;
  // valid targets: q, k, v, o, mlp_up, mlp_down
  void attach_lora(const std::vector<std::string>& targets, int64_t rank, double alpha);

  ParamList parameters();
  int64_t trainable_count();
};

}  // namespace exin
