#pragma once
#include "exin/nn.hpp"

namespace exin {

// One synthetic sample's image tensors. The general view is what a broad
// vision encoder would see; the expert channel carries lesion saliency that
// only the expert stream receives; the mask is ground truth for analysis.
struct ImageSample {
  Tensor general_view;    // [3, H, W], values in [0,1]
  Tensor expert_channel;  // [1, H, W], values in [0,1]
  Tensor lesion_mask;     // [H, W], values in {0,1}
};

// images [B, C, H, W] -> patch vectors [B, N, C*ps*ps], N = (H/ps)*(W/ps).
// Patch vector layout: channel-major, then row, then column within the patch.
// Pure data movement; patch tokens are constants on the tape.
Tensor patchify(const Tensor& images, int64_t patch);

// Bidirectional pre-norm transformer block.
struct EncoderBlock {
  LayerNormParams ln1, ln2;
  Linear q, k, v, o, up, down;
  int heads = 1;

  EncoderBlock() = default;
  EncoderBlock(const std::string& name, int64_t dim, int heads, int64_t hidden, Rng& rng,
               bool frozen);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out);
};

// Toy ViT: patch embedding + transformer blocks + output norm. No positional
// embedding — patch embedding is translation invariant on constant input and
// token i always corresponds to patch i for every encoder built on the same
// grid.
struct VitEncoder {
  int64_t channels = 0, image = 0, patch = 0, dim = 0;
  Linear patch_embed;
  std::vector<EncoderBlock> blocks;
  LayerNormParams ln_out;

  VitEncoder() = default;
  VitEncoder(const std::string& name, int64_t channels, int64_t image, int64_t patch, int64_t dim,
             int depth, int heads, int64_t hidden, Rng& rng, bool frozen);

  int64_t tokens() const { return (image / patch) * (image / patch); }
  // pre-attention patch embeddings [B, N, dim]
  Tensor embed_patches(const Tensor& images) const;
  // full forward [B, C, H, W] -> [B, N, dim]
  Tensor operator()(const Tensor& images) const;
  void collect(ParamList& out);
};

// stack per-sample planes into encoder inputs
Tensor stack_general(const std::vector<const ImageSample*>& samples);  // [B, 3, H, W]
// general view and expert channel concatenated on the channel axis
Tensor stack_expert_input(const std::vector<const ImageSample*>& samples);  // [B, 4, H, W]

}  // namespace exin
