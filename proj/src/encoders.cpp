#include "exin/encoders.hpp"

#include "exin/ops.hpp"

namespace exin {

Tensor patchify(const Tensor& images, int64_t patch) {
  if (images.shape().size() != 4) throw ShapeError("patchify expects [B, C, H, W]");
  const int64_t b = images.shape()[0], c = images.shape()[1];
  const int64_t h = images.shape()[2], w = images.shape()[3];
  if (patch <= 0 || h % patch != 0 || w % patch != 0)
    throw ShapeError("patchify: image size not divisible by patch size");
  const int64_t gh = h / patch, gw = w / patch, n = gh * gw;
  const int64_t pv = c * patch * patch;
  Tensor out({b, n, pv}, 0.0);
  const double* src = images.data();
  double* dst = out.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t py = 0; py < gh; ++py) {
      for (int64_t px = 0; px < gw; ++px) {
        double* pd = dst + ((bi * n) + (py * gw + px)) * pv;
        for (int64_t ci = 0; ci < c; ++ci) {
          for (int64_t r = 0; r < patch; ++r) {
            const double* row = src + (((bi * c) + ci) * h + (py * patch + r)) * w + px * patch;
            std::copy(row, row + patch, pd + (ci * patch + r) * patch);
          }
        }
      }
    }
  }
  return out;
}

EncoderBlock::EncoderBlock(const std::string& name, int64_t dim, int heads_, int64_t hidden,
                           Rng& rng, bool frozen)
    : ln1(name + ".ln1", dim, frozen),
      ln2(name + ".ln2", dim, frozen),
      q(name + ".q", dim, dim, rng, /*bias=*/true, frozen),
      k(name + ".k", dim, dim, rng, /*bias=*/true, frozen),
      v(name + ".v", dim, dim, rng, /*bias=*/true, frozen),
      o(name + ".o", dim, dim, rng, /*bias=*/true, frozen),
      up(name + ".up", dim, hidden, rng, /*bias=*/true, frozen),
      down(name + ".down", hidden, dim, rng, /*bias=*/true, frozen),
      heads(heads_) {}

Tensor EncoderBlock::operator()(const Tensor& x) const {
  Tensor h = ln1(x);
  Tensor attn = multihead_attention(q(h), k(h), v(h), heads, nullptr);
  Tensor y = add(x, o(attn));
  Tensor h2 = ln2(y);
  return add(y, down(gelu(up(h2))));
}

void EncoderBlock::collect(ParamList& out) {
  ln1.collect(out);
  ln2.collect(out);
  q.collect(out);
  k.collect(out);
  v.collect(out);
  o.collect(out);
  up.collect(out);
  down.collect(out);
}

VitEncoder::VitEncoder(const std::string& name, int64_t channels_, int64_t image_, int64_t patch_,
                       int64_t dim_, int depth, int heads, int64_t hidden, Rng& rng, bool frozen)
    : channels(channels_),
      image(image_),
      patch(patch_),
      dim(dim_),
      patch_embed(name + ".patch_embed", channels_ * patch_ * patch_, dim_, rng, /*bias=*/true,
                  frozen) {
  if (image % patch != 0) throw ConfigError("encoder image size not divisible by patch size");
  blocks.reserve(depth);
  for (int i = 0; i < depth; ++i)
    blocks.emplace_back(name + ".block" + std::to_string(i), dim, heads, hidden, rng, frozen);
  ln_out = LayerNormParams(name + ".ln_out", dim, frozen);
}

Tensor VitEncoder::embed_patches(const Tensor& images) const {
  if (images.shape().size() != 4 || images.shape()[1] != channels || images.shape()[2] != image ||
      images.shape()[3] != image)
    throw ShapeError("encoder input must be [B, " + std::to_string(channels) + ", " +
                     std::to_string(image) + ", " + std::to_string(image) + "]");
  return patch_embed(patchify(images, patch));
}

Tensor VitEncoder::operator()(const Tensor& images) const {
  Tensor x = embed_patches(images);
  for (const auto& blk : blocks) x = blk(x);
  return ln_out(x);
}

void VitEncoder::collect(ParamList& out) {
  patch_embed.collect(out);
  for (auto& blk : blocks) blk.collect(out);
  ln_out.collect(out);
}

static void check_sample(const ImageSample& s) {
  if (s.general_view.shape().size() != 3 || s.general_view.shape()[0] != 3)
    throw ShapeError("general_view must be [3, H, W]");
  if (s.expert_channel.shape().size() != 3 || s.expert_channel.shape()[0] != 1)
    throw ShapeError("expert_channel must be [1, H, W]");
  if (s.expert_channel.shape()[1] != s.general_view.shape()[1] ||
      s.expert_channel.shape()[2] != s.general_view.shape()[2])
    throw ShapeError("expert_channel spatial size must match general_view");
}

Tensor stack_general(const std::vector<const ImageSample*>& samples) {
  if (samples.empty()) throw ContractError("stack_general: empty batch");
  check_sample(*samples[0]);
  const int64_t h = samples[0]->general_view.shape()[1];
  const int64_t w = samples[0]->general_view.shape()[2];
  Tensor out({(int64_t)samples.size(), 3, h, w}, 0.0);
  const int64_t plane = 3 * h * w;
  for (size_t i = 0; i < samples.size(); ++i) {
    check_sample(*samples[i]);
    std::copy(samples[i]->general_view.data(), samples[i]->general_view.data() + plane,
              out.data() + (int64_t)i * plane);
  }
  return out;
}

Tensor stack_expert_input(const std::vector<const ImageSample*>& samples) {
  if (samples.empty()) throw ContractError("stack_expert_input: empty batch");
  check_sample(*samples[0]);
  const int64_t h = samples[0]->general_view.shape()[1];
  const int64_t w = samples[0]->general_view.shape()[2];
  Tensor out({(int64_t)samples.size(), 4, h, w}, 0.0);
  const int64_t gplane = 3 * h * w, eplane = h * w;
  for (size_t i = 0; i < samples.size(); ++i) {
    check_sample(*samples[i]);
    double* dst = out.data() + (int64_t)i * (gplane + eplane);
    std::copy(samples[i]->general_view.data(), samples[i]->general_view.data() + gplane, dst);
    std::copy(samples[i]->expert_channel.data(), samples[i]->expert_channel.data() + eplane,
              dst + gplane);
  }
  return out;
}

}  // namespace exin
