#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "exin/encoders.hpp"
#include "exin/ops.hpp"
#include "testutil.hpp"

using namespace exin;
using namespace exin::testutil;

TEST_CASE("patchify: impulse lands at the expected patch and offset") {
  Tensor img({1, 2, 8, 8}, 0.0);
  // channel 1, pixel (y=5, x=6), patch size 4 -> grid cell (1,1) = token 3,
  // offset inside the patch vector: (c*4 + (y%4))*4 + (x%4) = (1*4+1)*4+2 = 22
  img.data()[(1 * 8 + 5) * 8 + 6] = 1.0;
  Tensor p = patchify(img, 4);
  REQUIRE(seq_eq(p.shape(), {1, 4, 2 * 4 * 4}));
  for (int64_t t = 0; t < 4; ++t) {
    for (int64_t i = 0; i < 32; ++i) {
      const double want = (t == 3 && i == 22) ? 1.0 : 0.0;
      CHECK(p.data()[t * 32 + i] == want);
    }
  }
}

TEST_CASE("patchify: rejects bad ranks and non-divisible sizes") {
  Tensor img3({2, 8, 8}, 0.0);
  CHECK_THROWS_AS((void)patchify(img3, 4), ShapeError);
  Tensor img({1, 1, 9, 9}, 0.0);
  CHECK_THROWS_AS((void)patchify(img, 4), ShapeError);
}

TEST_CASE("encoder: constant image gives identical tokens (no positional signal)") {
  Rng rng(derive_seed(7, "general_encoder"));
  VitEncoder enc("gen", 3, 32, 8, 64, 2, 4, 256, rng, /*frozen=*/true);
  CHECK(enc.tokens() == 16);
  Tensor img({1, 3, 32, 32}, 0.37);
  Tensor f = enc(img);
  REQUIRE(seq_eq(f.shape(), {1, 16, 64}));
  for (int64_t t = 1; t < 16; ++t)
    for (int64_t d = 0; d < 64; ++d) CHECK(f.data()[t * 64 + d] == f.data()[d]);
}

TEST_CASE("encoder: same seed builds the same weights and the same outputs") {
  Rng r1(derive_seed(7, "general_encoder"));
  VitEncoder a("gen", 3, 32, 8, 64, 2, 4, 256, r1, true);
  Rng r2(derive_seed(7, "general_encoder"));
  VitEncoder b("gen", 3, 32, 8, 64, 2, 4, 256, r2, true);
  Rng ir(55);
  Tensor img = rand_tensor({2, 3, 32, 32}, ir, 0.3);
  CHECK(bitwise_equal(a(img), b(img)));
}

TEST_CASE("encoder: frozen flag controls trainability of every tensor") {
  Rng r1(1), r2(2);
  VitEncoder gen("gen", 3, 32, 8, 64, 2, 4, 256, r1, /*frozen=*/true);
  VitEncoder exp("exp", 4, 32, 8, 48, 2, 4, 192, r2, /*frozen=*/false);
  ParamList pg, pe;
  gen.collect(pg);
  exp.collect(pe);
  CHECK(pg.size() == pe.size());
  for (Parameter* p : pg) CHECK(p->frozen);
  for (Parameter* p : pe) CHECK_FALSE(p->frozen);
  Tensor img({1, 4, 32, 32}, 0.1);
  Tensor f = exp(img);
  CHECK(seq_eq(f.shape(), {1, 16, 48}));
}

TEST_CASE("encoder: zero image maps every patch to the embedding bias") {
  Rng rng(13);
  VitEncoder enc("e", 1, 8, 4, 6, 1, 2, 12, rng, false);
  Tensor img({1, 1, 8, 8}, 0.0);
  Tensor e = enc.embed_patches(img);
  REQUIRE(seq_eq(e.shape(), {1, 4, 6}));
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t d = 0; d < 6; ++d) CHECK(e.data()[t * 6 + d] == enc.patch_embed.b.value.data()[d]);
}

TEST_CASE("encoder: rejects mismatched input planes") {
  Rng rng(17);
  VitEncoder enc("e", 3, 32, 8, 16, 1, 2, 32, rng, false);
  Tensor wrong_ch({1, 4, 32, 32}, 0.0);
  CHECK_THROWS_AS((void)enc(wrong_ch), ShapeError);
  Tensor wrong_sz({1, 3, 16, 16}, 0.0);
  CHECK_THROWS_AS((void)enc(wrong_sz), ShapeError);
}

TEST_CASE("encoder: parameter gradients match finite differences") {
  Rng rng(19);
  VitEncoder enc("e", 2, 4, 2, 6, 1, 2, 8, rng, false);
  Rng ir(23);
  Tensor img = rand_tensor({1, 2, 4, 4}, ir, 0.5);
  auto fwd = [&]() {
    Tensor f = enc(img);
    return sum(mul(f, f));
  };
  auto rep = fd_check(fwd, {&enc.patch_embed.w.value, &enc.blocks[0].q.w.value,
                            &enc.blocks[0].down.w.value, &enc.ln_out.gain.value});
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("sample stacking: expert stream sees the extra channel, general does not") {
  Rng rng(29);
  ImageSample s1{rand_tensor({3, 8, 8}, rng, 0.2), rand_tensor({1, 8, 8}, rng, 0.2),
                 Tensor({8, 8}, 0.0)};
  ImageSample s2 = s1;
  s2.expert_channel = rand_tensor({1, 8, 8}, rng, 0.9);

  Tensor g1 = stack_general({&s1});
  Tensor g2 = stack_general({&s2});
  CHECK(bitwise_equal(g1, g2));  // general input is independent of the expert channel

  Tensor x = stack_expert_input({&s1, &s2});
  REQUIRE(seq_eq(x.shape(), {2, 4, 8, 8}));
  // channels 0..2 replicate the general view, channel 3 is the expert plane
  for (int64_t i = 0; i < 3 * 64; ++i) CHECK(x.data()[i] == s1.general_view.data()[i]);
  for (int64_t i = 0; i < 64; ++i) CHECK(x.data()[3 * 64 + i] == s1.expert_channel.data()[i]);
  const double* b2 = x.data() + 4 * 64;
  for (int64_t i = 0; i < 64; ++i) CHECK(b2[3 * 64 + i] == s2.expert_channel.data()[i]);
}

TEST_CASE("sample stacking: validates shapes") {
  ImageSample bad{Tensor({2, 8, 8}, 0.0), Tensor({1, 8, 8}, 0.0), Tensor({8, 8}, 0.0)};
  CHECK_THROWS_AS((void)stack_general({&bad}), ShapeError);
  CHECK_THROWS_AS((void)stack_expert_input(std::vector<const ImageSample*>{}), ContractError);
}
