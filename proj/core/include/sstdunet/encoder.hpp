#ifndef SSTDUNET_ENCODER_HPP
#define SSTDUNET_ENCODER_HPP

#include "sstdunet/attention.hpp"
#include "sstdunet/conv.hpp"

namespace sstdunet {

struct EncoderConfig {
  std::size_t in_channels = 1;
  std::size_t base_channels = 48;
  std::size_t head_dim = 16;
  std::size_t window = 4;
  std::size_t stages = 3;       // attention stages; a final merge emits scale 4
  std::size_t blocks_per_stage = 1;
  std::size_t mlp_ratio = 4;

  std::size_t stage_channels(std::size_t s) const { return base_channels << s; }
  std::size_t stage_heads(std::size_t s) const {
    const std::size_t c = stage_channels(s);
    if (head_dim == 0 || c % head_dim != 0)
      throw ConfigError("stage channels " + std::to_string(c) +
                        " not divisible by head_dim " + std::to_string(head_dim));
    return c / head_dim;
  }
};

// Layer norm over the channel axis of a [B,C,D,H,W] feature map.
template <typename T>
Tensor<T> channel_layer_norm(const Tensor<T>& x, const LayerNormParams<T>& ln) {
  Tensor<T> t = transpose(x, {0, 2, 3, 4, 1});
  t = layer_norm(t, ln.gamma, ln.beta);
  return transpose(t, {0, 4, 1, 2, 3});
}

// Stride-2 convolutional stem: [B,1,D,H,W] -> [B,C0,D/2,H/2,W/2], then LN.
template <typename T>
struct PatchEmbedParams {
  Tensor<T> w, b;
  LayerNormParams<T> ln;

  PatchEmbedParams() = default;
  PatchEmbedParams(std::size_t in_channels, std::size_t out_channels)
      : w(Shape{out_channels, in_channels, 3, 3, 3}), b(Shape{out_channels}),
        ln(out_channels) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", w, InitKind::kFanInUniform, w.dim(1) * 27});
    out.push_back({prefix + ".b", b, InitKind::kZeros, 0});
    ln.collect(out, prefix + ".ln");
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.ndim() != 5) throw ShapeError("patch_embed expects [B,C,D,H,W]");
    for (int a = 2; a < 5; ++a)
      if (x.dim(a) % 2 != 0)
        throw ShapeError("patch_embed requires even extents, got " + shape_str(x.shape()));
    return channel_layer_norm(conv3d(x, w, b, 2, 1), ln);
  }
};

// 2x2x2 neighborhood concatenation (z-major, then y, then x) followed by a
// linear 8C -> 2C and LN: halves every spatial extent, doubles channels.
template <typename T>
struct PatchMergeParams {
  Tensor<T> w, b;
  LayerNormParams<T> ln;

  PatchMergeParams() = default;
  explicit PatchMergeParams(std::size_t in_channels)
      : w(Shape{8 * in_channels, 2 * in_channels}), b(Shape{2 * in_channels}),
        ln(2 * in_channels) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", w, InitKind::kFanInUniform, w.dim(0)});
    out.push_back({prefix + ".b", b, InitKind::kZeros, 0});
    ln.collect(out, prefix + ".ln");
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.ndim() != 5) throw ShapeError("patch_merge expects [B,C,D,H,W]");
    const std::size_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    if (D % 2 || H % 2 || W % 2)
      throw ShapeError("patch_merge requires even extents, got " + shape_str(x.shape()));
    const std::size_t OD = D / 2, OH = H / 2, OW = W / 2;
    // tokens [B,OD,OH,OW,8C]: block o = ((dz*2)+dy)*2+dx holds source channels
    auto map = std::make_shared<std::vector<std::size_t>>(B * OD * OH * OW * 8 * C);
    std::size_t o = 0;
    for (std::size_t b2 = 0; b2 < B; ++b2)
      for (std::size_t z = 0; z < OD; ++z)
        for (std::size_t y = 0; y < OH; ++y)
          for (std::size_t xx = 0; xx < OW; ++xx)
            for (std::size_t dz = 0; dz < 2; ++dz)
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx)
                  for (std::size_t c = 0; c < C; ++c)
                    (*map)[o++] = (((b2 * C + c) * D + 2 * z + dz) * H + 2 * y + dy) * W +
                                  2 * xx + dx;
    Tensor<T> tokens = gather(x, map, Shape{B, OD, OH, OW, 8 * C});
    tokens = layer_norm(linear(tokens, w, b), ln.gamma, ln.beta);
    return transpose(tokens, {0, 4, 1, 2, 3});
  }
};

template <typename T>
struct SstEncoderParams {
  EncoderConfig cfg;
  PatchEmbedParams<T> embed;
  std::vector<std::vector<SwinBlockParams<T>>> stages;  // [stage][block]
  std::vector<PatchMergeParams<T>> merges;              // one per stage

  SstEncoderParams() = default;
  // `input_spatial` is the raw volume extent; stage s runs at 1/2^(s+1).
  SstEncoderParams(const EncoderConfig& cfg_, const Extent3& input_spatial) : cfg(cfg_) {
    embed = PatchEmbedParams<T>(cfg.in_channels, cfg.base_channels);
    Extent3 sp{input_spatial[0] / 2, input_spatial[1] / 2, input_spatial[2] / 2};
    for (std::size_t s = 0; s < cfg.stages; ++s) {
      WindowConfig wc{cfg.window, cfg.stage_heads(s)};
      std::vector<SwinBlockParams<T>> blocks;
      for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b)
        blocks.emplace_back(cfg.stage_channels(s), wc, sp, cfg.mlp_ratio);
      stages.push_back(std::move(blocks));
      merges.emplace_back(cfg.stage_channels(s));
      sp = {sp[0] / 2, sp[1] / 2, sp[2] / 2};
    }
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    embed.collect(out, prefix + ".embed");
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (std::size_t b = 0; b < stages[s].size(); ++b)
        stages[s][b].collect(out, prefix + ".stage" + std::to_string(s + 1) + ".block" +
                                      std::to_string(b + 1));
      merges[s].collect(out, prefix + ".merge" + std::to_string(s + 1));
    }
  }
};

// Emits stages+1 feature scales; F_s has channels C0*2^(s-1) at 1/2^s of the
// input (s = 1..stages+1).
template <typename T>
std::vector<Tensor<T>> encoder_forward(const Tensor<T>& x, const SstEncoderParams<T>& p) {
  if (x.ndim() != 5 || x.dim(1) != p.cfg.in_channels)
    throw ShapeError("encoder_forward expects [B," + std::to_string(p.cfg.in_channels) +
                     ",D,H,W], got " + shape_str(x.shape()));
  std::vector<Tensor<T>> features;
  Tensor<T> cur = p.embed.forward(x);
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    for (const auto& blk : p.stages[s]) cur = swin_block_forward(cur, blk);
    features.push_back(cur);
    cur = p.merges[s].forward(cur);
  }
  features.push_back(cur);
  return features;
}

}  // namespace sstdunet

#endif
