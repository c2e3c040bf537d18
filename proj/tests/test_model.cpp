#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "exin/model.hpp"
#include "exin/ops.hpp"
#include "testutil.hpp"

using namespace exin;
using namespace exin::testutil;

namespace {

ModelConfig tiny_config(FusionKind f, InjectionKind inj) {
  ModelConfig c;
  c.d_llm = 8;
  c.d_exp = 6;
  c.mlp_hidden = 16;
  c.depth = 3;
  c.heads = 2;
  c.enc_depth = 1;
  c.enc_heads = 2;
  c.enc_hidden_general = 16;
  c.enc_hidden_expert = 12;
  c.image = 8;
  c.patch = 4;  // 4 visual tokens
  c.max_seq = 32;
  c.seed = 7;
  c.fusion = f;
  c.injection = inj;
  c.injection_layers = {1};
  return c;
}

ModelConfig desk_config(FusionKind f, InjectionKind inj) {
  ModelConfig c;
  c.seed = 7;
  c.fusion = f;
  c.injection = inj;
  return c;
}

struct Inputs {
  Tensor gen, exp;
  TokenBatch text;
};

Inputs make_inputs(const ModelConfig& c, int64_t B, uint64_t seed) {
  Rng rng(seed);
  Inputs in;
  in.gen = rand_tensor({B, 3, c.image, c.image}, rng, 0.3);
  in.exp = rand_tensor({B, 4, c.image, c.image}, rng, 0.3);
  std::vector<std::vector<int>> rows;
  for (int64_t b = 0; b < B; ++b) {
    std::vector<int> r = vocab::closed_question();
    r.push_back(vocab::class_token(static_cast<int>(b) % vocab::kNumClasses));
    r.push_back(vocab::kEos);
    rows.push_back(r);
  }
  in.text = TokenBatch::pad(rows, vocab::kPad);
  return in;
}

}  // namespace

TEST_CASE("token batch: pads rows to the longest with the pad id") {
  TokenBatch tb = TokenBatch::pad({{5, 6}, {7, 8, 9}}, 0);
  CHECK(tb.batch == 2);
  CHECK(tb.len == 3);
  CHECK(tb.at(0, 0) == 5);
  CHECK(tb.at(0, 2) == 0);
  CHECK(tb.at(1, 2) == 9);
}

TEST_CASE("model: construction validates its knobs") {
  ModelConfig c = tiny_config(FusionKind::kNone, InjectionKind::kAdapt);
  CHECK_THROWS_AS(VlmModel{c}, ConfigError);  // injection needs an expert stream
  c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  c.injection_layers = {99};
  CHECK_THROWS_AS(VlmModel{c}, ConfigError);
  c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  c.vocab = 100;
  CHECK_THROWS_AS(VlmModel{c}, ConfigError);
  CHECK(parse_fusion_kind("gated") == FusionKind::kGated);
  CHECK_THROWS_AS(parse_fusion_kind("fancy"), ConfigError);
  CHECK(parse_injection_kind("adapt") == InjectionKind::kAdapt);
  CHECK_THROWS_AS(parse_injection_kind("x"), ConfigError);
}

TEST_CASE("model: logits have one row per text position over the vocabulary") {
  ModelConfig c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m(c);
  Inputs in = make_inputs(c, 2, 11);
  ForwardTrace trace;
  Tensor logits = m.forward_batch(in.gen, in.exp, in.text, &trace);
  CHECK(seq_eq(logits.shape(), {2, in.text.len, c.vocab}));
  CHECK(seq_eq(trace.alpha.shape(), {2, c.n_visual(), 1}));
  CHECK(seq_eq(trace.f_fused.shape(), {2, c.n_visual(), c.d_llm}));
  REQUIRE(trace.routes.size() == 1);
  CHECK(seq_eq(trace.routes[0].shape(), {2, c.n_visual(), 1}));
}

TEST_CASE("model: enabling fusion or injection modules never shifts shared initializations") {
  VlmModel base(tiny_config(FusionKind::kNone, InjectionKind::kNone));
  VlmModel full(tiny_config(FusionKind::kGated, InjectionKind::kAdapt));
  CHECK(bitwise_equal(base.tok_embed.value, full.tok_embed.value));
  CHECK(bitwise_equal(base.pos_embed.value, full.pos_embed.value));
  CHECK(bitwise_equal(base.lm_head.value, full.lm_head.value));
  CHECK(bitwise_equal(base.general_enc.patch_embed.w.value, full.general_enc.patch_embed.w.value));
  for (size_t i = 0; i < base.blocks.size(); ++i) {
    CHECK(bitwise_equal(base.blocks[i].q.w.value, full.blocks[i].q.w.value));
    CHECK(bitwise_equal(base.blocks[i].down.w.value, full.blocks[i].down.w.value));
  }
}

TEST_CASE("model: adaptive injection starts as a bit-exact no-op") {
  // same seed, same inputs: with gamma at zero the adapt variant must produce
  // exactly the gated variant's logits
  ModelConfig cg = tiny_config(FusionKind::kGated, InjectionKind::kNone);
  ModelConfig ca = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel mg(cg), ma(ca);
  Inputs in = make_inputs(cg, 2, 13);
  CHECK(bitwise_equal(mg.forward_batch(in.gen, in.exp, in.text),
                      ma.forward_batch(in.gen, in.exp, in.text)));
}

TEST_CASE("model: direct injection starts as a no-op and wakes with its strength") {
  ModelConfig cg = tiny_config(FusionKind::kGated, InjectionKind::kNone);
  ModelConfig cd = tiny_config(FusionKind::kGated, InjectionKind::kDirect);
  VlmModel mg(cg), md(cd);
  REQUIRE(md.direct_gammas.size() == cd.injection_layers.size());
  for (const Parameter& g : md.direct_gammas) {
    CHECK_FALSE(g.frozen);
    CHECK(g.value.data()[0] == 0.0);
  }
  Inputs in = make_inputs(cg, 2, 13);
  Tensor base = mg.forward_batch(in.gen, in.exp, in.text);
  CHECK(bitwise_equal(base, md.forward_batch(in.gen, in.exp, in.text)));
  md.direct_gammas[0].value.data()[0] = 0.5;
  CHECK_FALSE(bitwise_equal(base, md.forward_batch(in.gen, in.exp, in.text)));
}

TEST_CASE("model: attaching zero-initialized adapters keeps logits bit-identical") {
  ModelConfig c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m(c);
  Inputs in = make_inputs(c, 2, 17);
  Tensor before = m.forward_batch(in.gen, in.exp, in.text);
  m.attach_lora({"q", "k", "v", "o", "mlp_up", "mlp_down"}, 2, 4.0);
  Tensor after = m.forward_batch(in.gen, in.exp, in.text);
  CHECK(bitwise_equal(before, after));
  CHECK(m.trainable_count() > 0);
}

TEST_CASE("model: the baseline variant is blind to the expert channel") {
  ModelConfig c = tiny_config(FusionKind::kNone, InjectionKind::kNone);
  VlmModel m(c);
  Inputs in = make_inputs(c, 1, 19);
  Tensor l1 = m.forward_batch(in.gen, in.exp, in.text);
  Rng rng(999);
  Tensor other_exp = rand_tensor({1, 4, c.image, c.image}, rng, 0.9);
  Tensor l2 = m.forward_batch(in.gen, other_exp, in.text);
  CHECK(bitwise_equal(l1, l2));

  // while any fused variant does react to it
  ModelConfig c2 = tiny_config(FusionKind::kAdd, InjectionKind::kNone);
  VlmModel m2(c2);
  Tensor a = m2.forward_batch(in.gen, in.exp, in.text);
  Tensor b = m2.forward_batch(in.gen, other_exp, in.text);
  bool differs = false;
  for (int64_t i = 0; i < a.size() && !differs; ++i) differs = a.data()[i] != b.data()[i];
  CHECK(differs);
}

TEST_CASE("model: future text tokens cannot change earlier logits") {
  ModelConfig c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m(c);
  Inputs in = make_inputs(c, 1, 23);
  Tensor l1 = m.forward_batch(in.gen, in.exp, in.text);
  TokenBatch mutated = in.text;
  mutated.ids[static_cast<size_t>(mutated.len - 1)] = vocab::kUnk;
  Tensor l2 = m.forward_batch(in.gen, in.exp, mutated);
  const int64_t V = c.vocab;
  for (int64_t t = 0; t + 1 < in.text.len; ++t)
    for (int64_t j = 0; j < V; ++j) CHECK(l1.data()[t * V + j] == l2.data()[t * V + j]);
}

TEST_CASE("model: repeated forwards are bit-stable and seeds are reproducible") {
  ModelConfig c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m1(c), m2(c);
  m1.attach_lora({"q", "v"}, 2, 4.0);
  m2.attach_lora({"q", "v"}, 2, 4.0);
  Inputs in = make_inputs(c, 2, 29);
  Tensor a = m1.forward_batch(in.gen, in.exp, in.text);
  Tensor b = m1.forward_batch(in.gen, in.exp, in.text);
  Tensor cc = m2.forward_batch(in.gen, in.exp, in.text);
  CHECK(bitwise_equal(a, b));
  CHECK(bitwise_equal(a, cc));
}

TEST_CASE("model: end-to-end gradients match finite differences") {
  ModelConfig c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m(c);
  m.attach_lora({"q", "mlp_down"}, 2, 4.0);
  // move gamma off zero so the injection path carries gradient
  m.injections[0].gamma.value.data()[0] = 0.3;
  Inputs in = make_inputs(c, 1, 31);
  std::vector<int> targets(static_cast<size_t>(in.text.len), vocab::kEos);
  std::vector<double> weights(static_cast<size_t>(in.text.len), 0.0);
  // score the class answer position and the EOS after it
  targets[4] = in.text.at(0, 5);
  weights[4] = 1.0;
  targets[3] = in.text.at(0, 4);
  weights[3] = 1.0;
  auto fwd = [&]() {
    Tensor logits = m.forward_batch(in.gen, in.exp, in.text);
    return cross_entropy(logits, targets, weights);
  };
  auto rep = fd_check(fwd, {&m.injections[0].gamma.value,
                            &m.fusion_router->mlp.fc2.w.value,
                            &m.expert_proj->b.value,
                            &m.blocks[1].q.lora_a.value,
                            &m.blocks[2].down.lora_b.value},
                      1e-5);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("model: stop-gradient on the injected features blocks that gradient path") {
  ModelConfig c1 = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  ModelConfig c2 = c1;
  c2.detach_fused = true;
  VlmModel m1(c1), m2(c2);
  m1.injections[0].gamma.value.data()[0] = 0.8;
  m2.injections[0].gamma.value.data()[0] = 0.8;
  Inputs in = make_inputs(c1, 1, 37);
  std::vector<int> targets(static_cast<size_t>(in.text.len), vocab::kEos);
  std::vector<double> weights(static_cast<size_t>(in.text.len), 1.0);
  auto phi_grad = [&](VlmModel& m) {
    Tape tape;
    Tensor loss = cross_entropy(m.forward_batch(in.gen, in.exp, in.text), targets, weights);
    tape.backward(loss);
    const Buffer* g = tape.grad(m.expert_proj->w.value);
    REQUIRE(g != nullptr);
    return std::vector<double>(g->begin(), g->end());
  };
  auto g1 = phi_grad(m1), g2 = phi_grad(m2);
  bool differs = false;
  for (size_t i = 0; i < g1.size() && !differs; ++i) differs = g1[i] != g2[i];
  CHECK(differs);  // injection path contributes to phi only when not detached
}

TEST_CASE("model: greedy generation is deterministic and honors the allowlist") {
  ModelConfig c = tiny_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m(c);
  Inputs in = make_inputs(c, 1, 41);
  std::vector<int> prompt = vocab::closed_question();
  auto a = m.generate(in.gen, in.exp, prompt, 6);
  auto b = m.generate(in.gen, in.exp, prompt, 6);
  CHECK(a == b);
  CHECK(a.size() <= 6);

  std::vector<int> classes;
  for (int k = 0; k < vocab::kNumClasses; ++k) classes.push_back(vocab::class_token(k));
  auto r = m.generate(in.gen, in.exp, prompt, 1, &classes);
  REQUIRE(r.size() == 1);
  CHECK(vocab::is_class_token(r[0]));

  // an allowlist of one forces a run of that token
  std::vector<int> only{vocab::kRegionBase};
  auto forced = m.generate(in.gen, in.exp, prompt, 3, &only);
  CHECK(forced == std::vector<int>{vocab::kRegionBase, vocab::kRegionBase, vocab::kRegionBase});
}

TEST_CASE("model: desk-scale configuration builds with the documented geometry") {
  ModelConfig c = desk_config(FusionKind::kGated, InjectionKind::kAdapt);
  VlmModel m(c);
  CHECK(c.n_visual() == 16);
  CHECK(m.blocks.size() == 8);
  CHECK(m.injections.size() == 3);
  m.attach_lora({"q", "k", "v", "o", "mlp_up", "mlp_down"}, 4, 8.0);
  // adapters: 8 blocks * 6 targets * rank 4 * (64 + 64) for q/k/v/o,
  // (64+256) and (256+64) for the mlp pair
  int64_t lora = 8 * (4 * 4 * (64 + 64) + 4 * (64 + 256) + 4 * (256 + 64));
  ParamList ps = m.parameters();
  int64_t adapters = 0;
  for (Parameter* p : ps)
    if (!p->frozen && p->name.find("lora") != std::string::npos) adapters += p->value.size();
  CHECK(adapters == lora);
}
