#ifndef SSTDUNET_ATTENTION_HPP
#define SSTDUNET_ATTENTION_HPP

#include <array>
#include <optional>

#include "sstdunet/params.hpp"
#include "sstdunet/tensor.hpp"

namespace sstdunet {

using Extent3 = std::array<std::size_t, 3>;

// Window geometry for one attention stage. The nominal window is cubic; per
// axis it clamps to the feature extent, and axes equal to their window get no
// shift (a single window wraps onto itself otherwise).
struct WindowConfig {
  std::size_t window = 4;
  std::size_t num_heads = 1;

  Extent3 effective_window(const Extent3& spatial) const {
    return {std::min(window, spatial[0]), std::min(window, spatial[1]),
            std::min(window, spatial[2])};
  }
  Extent3 shift_offsets(const Extent3& spatial) const {
    const Extent3 w = effective_window(spatial);
    Extent3 s{};
    for (int a = 0; a < 3; ++a) s[a] = (spatial[a] > w[a]) ? w[a] / 2 : 0;
    return s;
  }
};

namespace detail {

inline void check_window_divisibility(const Extent3& spatial, const Extent3& win) {
  for (int a = 0; a < 3; ++a)
    if (win[a] == 0 || spatial[a] % win[a] != 0)
      throw ShapeError("spatial extent " + std::to_string(spatial[a]) +
                       " not divisible by window " + std::to_string(win[a]));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Window partitioning over token layout [B, D, H, W, C]
// ---------------------------------------------------------------------------

// [B, D, H, W, C] -> [B*nW, P, C] with P = wd*wh*ww; windows ordered
// z-major then y then x, positions within a window likewise.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& tokens, const Extent3& win) {
  if (tokens.ndim() != 5) throw ShapeError("window_partition expects [B,D,H,W,C]");
  const std::size_t B = tokens.dim(0), D = tokens.dim(1), H = tokens.dim(2),
                    W = tokens.dim(3), C = tokens.dim(4);
  detail::check_window_divisibility({D, H, W}, win);
  const std::size_t nd = D / win[0], nh = H / win[1], nw = W / win[2];
  const std::size_t P = win[0] * win[1] * win[2];
  auto map = std::make_shared<std::vector<std::size_t>>(tokens.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t wz = 0; wz < nd; ++wz)
      for (std::size_t wy = 0; wy < nh; ++wy)
        for (std::size_t wx = 0; wx < nw; ++wx)
          for (std::size_t lz = 0; lz < win[0]; ++lz)
            for (std::size_t ly = 0; ly < win[1]; ++ly)
              for (std::size_t lx = 0; lx < win[2]; ++lx) {
                const std::size_t src =
                    (((b * D + wz * win[0] + lz) * H + wy * win[1] + ly) * W +
                     wx * win[2] + lx) * C;
                for (std::size_t c = 0; c < C; ++c) (*map)[o++] = src + c;
              }
  return gather(tokens, map, Shape{B * nd * nh * nw, P, C});
}

// Inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& windows, const Extent3& win, std::size_t B,
                         const Extent3& spatial) {
  const std::size_t D = spatial[0], H = spatial[1], W = spatial[2];
  detail::check_window_divisibility(spatial, win);
  const std::size_t nd = D / win[0], nh = H / win[1], nw = W / win[2];
  const std::size_t P = win[0] * win[1] * win[2];
  const std::size_t C = windows.dim(2);
  if (windows.dim(0) != B * nd * nh * nw || windows.dim(1) != P)
    throw ShapeError("window_reverse shape mismatch: " + shape_str(windows.shape()));
  auto map = std::make_shared<std::vector<std::size_t>>(windows.size());
  // map[out] = in: iterate over output (token) order
  std::size_t stride_c = 1;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t z = 0; z < D; ++z)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t wz = z / win[0], lz = z % win[0];
          const std::size_t wy = y / win[1], ly = y % win[1];
          const std::size_t wx = x / win[2], lx = x % win[2];
          const std::size_t wi = ((b * nd + wz) * nh + wy) * nw + wx;
          const std::size_t pos = (lz * win[1] + ly) * win[2] + lx;
          const std::size_t dst = (((b * D + z) * H + y) * W + x) * C;
          const std::size_t src = (wi * P + pos) * C;
          for (std::size_t c = 0; c < C; ++c) map->at(dst + c) = src + c * stride_c;
        }
  return gather(windows, map, Shape{B, D, H, W, C});
}

// Toroidal roll of the three spatial axes of [B, D, H, W, C].
// out[z] = in[(z - offset) mod N] per axis, so shift/unshift are inverses.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& tokens, const std::array<std::ptrdiff_t, 3>& offsets) {
  if (tokens.ndim() != 5) throw ShapeError("cyclic_shift expects [B,D,H,W,C]");
  const std::size_t B = tokens.dim(0), D = tokens.dim(1), H = tokens.dim(2),
                    W = tokens.dim(3), C = tokens.dim(4);
  auto wrap = [](std::ptrdiff_t i, std::size_t n) {
    std::ptrdiff_t r = i % std::ptrdiff_t(n);
    if (r < 0) r += std::ptrdiff_t(n);
    return std::size_t(r);
  };
  auto map = std::make_shared<std::vector<std::size_t>>(tokens.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t z = 0; z < D; ++z) {
      const std::size_t sz = wrap(std::ptrdiff_t(z) - offsets[0], D);
      for (std::size_t y = 0; y < H; ++y) {
        const std::size_t sy = wrap(std::ptrdiff_t(y) - offsets[1], H);
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t sx = wrap(std::ptrdiff_t(x) - offsets[2], W);
          const std::size_t src = (((b * D + sz) * H + sy) * W + sx) * C;
          for (std::size_t c = 0; c < C; ++c) (*map)[o++] = src + c;
        }
      }
    }
  return gather(tokens, map, tokens.shape());
}

template <typename T>
Tensor<T> cyclic_unshift(const Tensor<T>& tokens, const std::array<std::ptrdiff_t, 3>& offsets) {
  return cyclic_shift(tokens, {-offsets[0], -offsets[1], -offsets[2]});
}

// ---------------------------------------------------------------------------
// Shift-validity mask
// ---------------------------------------------------------------------------

// Fixed {0, -inf} masks for shifted-window attention. Windows that contain a
// single contiguous source region share the all-zero group; boundary windows
// along shifted axes get cross-region pairs blocked. Only distinct groups are
// materialized; window_group maps each window to its group.
template <typename T>
struct ValidityMask {
  Tensor<T> groups;                        // [G, P, P], entries in {0, -inf}
  std::vector<std::size_t> window_group;   // length nW
  std::size_t positions = 0;               // P

  // [nW, 1, P, P] expansion for broadcasting against per-head biases.
  Tensor<T> per_window() const {
    const std::size_t nW = window_group.size(), P = positions;
    auto map = std::make_shared<std::vector<std::size_t>>(nW * P * P);
    for (std::size_t w = 0; w < nW; ++w)
      for (std::size_t i = 0; i < P * P; ++i)
        (*map)[w * P * P + i] = window_group[w] * P * P + i;
    return gather(groups, map, Shape{nW, 1, P, P});
  }
};

template <typename T>
ValidityMask<T> build_validity_mask(const Extent3& spatial, const Extent3& win,
                                    const Extent3& shift) {
  detail::check_window_divisibility(spatial, win);
  const std::size_t P = win[0] * win[1] * win[2];
  // Per-axis region id of a global coordinate; constant 0 when unshifted.
  auto axis_id = [](std::size_t i, std::size_t n, std::size_t m, std::size_t s) -> int {
    if (s == 0) return 0;
    if (i < n - m) return 0;
    return i < n - s ? 1 : 2;
  };

  const std::size_t nd = spatial[0] / win[0], nh = spatial[1] / win[1], nw = spatial[2] / win[2];
  ValidityMask<T> vm;
  vm.positions = P;
  vm.window_group.resize(nd * nh * nw);

  // Group key: per axis, whether this is the boundary (last, shifted) window.
  std::vector<std::array<bool, 3>> group_keys;
  auto group_of = [&](std::array<bool, 3> key) {
    for (std::size_t g = 0; g < group_keys.size(); ++g)
      if (group_keys[g] == key) return g;
    group_keys.push_back(key);
    return group_keys.size() - 1;
  };
  std::size_t w = 0;
  for (std::size_t wz = 0; wz < nd; ++wz)
    for (std::size_t wy = 0; wy < nh; ++wy)
      for (std::size_t wx = 0; wx < nw; ++wx, ++w)
        vm.window_group[w] = group_of({shift[0] > 0 && wz == nd - 1,
                                       shift[1] > 0 && wy == nh - 1,
                                       shift[2] > 0 && wx == nw - 1});

  const T ninf = -std::numeric_limits<T>::infinity();
  std::vector<T> data(group_keys.size() * P * P, T(0));
  for (std::size_t g = 0; g < group_keys.size(); ++g) {
    // Representative window origin per axis: last window when boundary.
    std::array<std::size_t, 3> origin{};
    for (int a = 0; a < 3; ++a)
      origin[a] = group_keys[g][a] ? spatial[a] - win[a] : 0;
    std::vector<int> ids(P);
    std::size_t p = 0;
    for (std::size_t lz = 0; lz < win[0]; ++lz)
      for (std::size_t ly = 0; ly < win[1]; ++ly)
        for (std::size_t lx = 0; lx < win[2]; ++lx, ++p) {
          const int iz = axis_id(origin[0] + lz, spatial[0], win[0], shift[0]);
          const int iy = axis_id(origin[1] + ly, spatial[1], win[1], shift[1]);
          const int ix = axis_id(origin[2] + lx, spatial[2], win[2], shift[2]);
          ids[p] = (iz * 3 + iy) * 3 + ix;
        }
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < P; ++j)
        if (ids[i] != ids[j]) data[(g * P + i) * P + j] = ninf;
  }
  vm.groups = Tensor<T>::from_data({group_keys.size(), P, P}, std::move(data));
  return vm;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention over windows
// ---------------------------------------------------------------------------

template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;

  AttentionParams() = default;
  explicit AttentionParams(std::size_t channels)
      : wq(Shape{channels, channels}), bq(Shape{channels}),
        wk(Shape{channels, channels}), bk(Shape{channels}),
        wv(Shape{channels, channels}), bv(Shape{channels}),
        wo(Shape{channels, channels}), bo(Shape{channels}) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    const std::size_t c = wq.dim(0);
    out.push_back({prefix + ".wq", wq, InitKind::kFanInUniform, c});
    out.push_back({prefix + ".bq", bq, InitKind::kZeros, 0});
    out.push_back({prefix + ".wk", wk, InitKind::kFanInUniform, c});
    out.push_back({prefix + ".bk", bk, InitKind::kZeros, 0});
    out.push_back({prefix + ".wv", wv, InitKind::kFanInUniform, c});
    out.push_back({prefix + ".bv", bv, InitKind::kZeros, 0});
    // Residual-branch output projection: zero so the block starts as identity.
    out.push_back({prefix + ".wo", wo, InitKind::kZeros, 0});
    out.push_back({prefix + ".bo", bo, InitKind::kZeros, 0});
  }
};

// Learnable per-head additive attention bias for the smart-shifted pass.
// The effective mask is bias + fixed shift-validity; zero bias reduces to a
// standard shifted-window block.
template <typename T>
struct SmartMask {
  Tensor<T> bias;  // [num_heads, P, P]

  SmartMask() = default;
  SmartMask(std::size_t num_heads, std::size_t positions)
      : bias(Shape{num_heads, positions, positions}) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".bias", bias, InitKind::kZeros, 0});
  }

  // [nW, H, P, P] effective additive mask.
  Tensor<T> effective(const ValidityMask<T>& validity) const {
    return add(validity.per_window(), reshape(bias, Shape{1, bias.dim(0), bias.dim(1),
                                                          bias.dim(2)}));
  }
};

// windows:[NW, P, C]; mask broadcastable to scores [NW, H, P, P] — either
// [H|1, P, P] or [nW, H|1, P, P] with NW a multiple of nW (batch repeat).
template <typename T>
Tensor<T> msa_forward(const Tensor<T>& windows, const AttentionParams<T>& p,
                      std::size_t num_heads, const std::optional<Tensor<T>>& mask = {}) {
  if (windows.ndim() != 3) throw ShapeError("msa_forward expects [NW, P, C]");
  const std::size_t NW = windows.dim(0), P = windows.dim(1), C = windows.dim(2);
  if (num_heads == 0 || C % num_heads != 0)
    throw ShapeError("channels " + std::to_string(C) + " not divisible by heads " +
                     std::to_string(num_heads));
  const std::size_t d = C / num_heads;

  auto split_heads = [&](Tensor<T> t) {
    return transpose(reshape(t, Shape{NW, P, num_heads, d}), {0, 2, 1, 3});
  };
  Tensor<T> q = split_heads(linear(windows, p.wq, p.bq));
  Tensor<T> k = split_heads(linear(windows, p.wk, p.bk));
  Tensor<T> v = split_heads(linear(windows, p.wv, p.bv));

  Tensor<T> scores = mul_scalar(matmul(q, transpose(k, {0, 1, 3, 2})),
                                T(1) / std::sqrt(T(d)));  // [NW, H, P, P]
  if (mask) {
    const Tensor<T>& m = *mask;
    if (m.ndim() == 3) {
      scores = add(scores, m);
    } else if (m.ndim() == 4) {
      const std::size_t nW = m.dim(0);
      if (nW == 0 || NW % nW != 0)
        throw ShapeError("mask window count " + std::to_string(nW) +
                         " does not divide NW=" + std::to_string(NW));
      scores = reshape(add(reshape(scores, Shape{NW / nW, nW, num_heads, P, P}), m),
                       Shape{NW, num_heads, P, P});
    } else {
      throw ShapeError("attention mask must be rank 3 or 4, got " + shape_str(m.shape()));
    }
  }
  Tensor<T> attn = softmax(scores, 3);
  Tensor<T> ctx = matmul(attn, v);  // [NW, H, P, d]
  Tensor<T> merged = reshape(transpose(ctx, {0, 2, 1, 3}), Shape{NW, P, C});
  return linear(merged, p.wo, p.bo);
}

// ---------------------------------------------------------------------------
// Swin block: W-MSA -> MLP -> SSW-MSA (smart mask) -> MLP, each pre-normed
// with a residual connection.
// ---------------------------------------------------------------------------

template <typename T>
struct MlpParams {
  Tensor<T> w1, b1, w2, b2;

  MlpParams() = default;
  MlpParams(std::size_t channels, std::size_t hidden)
      : w1(Shape{channels, hidden}), b1(Shape{hidden}),
        w2(Shape{hidden, channels}), b2(Shape{channels}) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".w1", w1, InitKind::kFanInUniform, w1.dim(0)});
    out.push_back({prefix + ".b1", b1, InitKind::kZeros, 0});
    out.push_back({prefix + ".w2", w2, InitKind::kZeros, 0});
    out.push_back({prefix + ".b2", b2, InitKind::kZeros, 0});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return linear(gelu(linear(x, w1, b1)), w2, b2);
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma, beta;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t channels)
      : gamma(Shape{channels}), beta(Shape{channels}) {}

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", gamma, InitKind::kOnes, 0});
    out.push_back({prefix + ".beta", beta, InitKind::kZeros, 0});
  }
};

template <typename T>
struct SwinBlockParams {
  std::size_t channels = 0;
  WindowConfig window;
  Extent3 eff_window{};   // resolved against the stage's spatial extents
  Extent3 shift{};
  LayerNormParams<T> ln1, ln2, ln3, ln4;
  AttentionParams<T> wmsa, sswmsa;
  SmartMask<T> smart_mask;
  MlpParams<T> mlp1, mlp2;

  SwinBlockParams() = default;
  SwinBlockParams(std::size_t channels_, const WindowConfig& wc, const Extent3& spatial,
                  std::size_t mlp_ratio = 4)
      : channels(channels_), window(wc),
        eff_window(wc.effective_window(spatial)), shift(wc.shift_offsets(spatial)),
        ln1(channels_), ln2(channels_), ln3(channels_), ln4(channels_),
        wmsa(channels_), sswmsa(channels_),
        smart_mask(wc.num_heads, eff_window[0] * eff_window[1] * eff_window[2]),
        mlp1(channels_, channels_ * mlp_ratio), mlp2(channels_, channels_ * mlp_ratio) {
    if (channels_ % wc.num_heads != 0)
      throw ConfigError("channels must be divisible by num_heads");
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    ln1.collect(out, prefix + ".ln1");
    wmsa.collect(out, prefix + ".wmsa");
    ln2.collect(out, prefix + ".ln2");
    mlp1.collect(out, prefix + ".mlp1");
    ln3.collect(out, prefix + ".ln3");
    sswmsa.collect(out, prefix + ".sswmsa");
    smart_mask.collect(out, prefix + ".smart_mask");
    ln4.collect(out, prefix + ".ln4");
    mlp2.collect(out, prefix + ".mlp2");
  }
};

// One full block over feature maps [B, C, D, H, W]; shape preserving.
template <typename T>
Tensor<T> swin_block_forward(const Tensor<T>& x, const SwinBlockParams<T>& p) {
  if (x.ndim() != 5) throw ShapeError("swin_block_forward expects [B,C,D,H,W]");
  if (x.dim(1) != p.channels)
    throw ShapeError("swin_block_forward channel mismatch: " + shape_str(x.shape()));
  const std::size_t B = x.dim(0);
  const Extent3 spatial{x.dim(2), x.dim(3), x.dim(4)};
  detail::check_window_divisibility(spatial, p.eff_window);

  Tensor<T> t = transpose(x, {0, 2, 3, 4, 1});  // [B,D,H,W,C]

  // x <- x + W-MSA(LN(x))
  {
    Tensor<T> w = window_partition(layer_norm(t, p.ln1.gamma, p.ln1.beta), p.eff_window);
    Tensor<T> a = msa_forward(w, p.wmsa, p.window.num_heads);
    t = add(t, window_reverse(a, p.eff_window, B, spatial));
  }
  // x <- x + MLP(LN(x))
  t = add(t, p.mlp1.forward(layer_norm(t, p.ln2.gamma, p.ln2.beta)));

  // x <- x + unshift(SSW-MSA(LN(shift(x)), smart mask))
  {
    const std::array<std::ptrdiff_t, 3> off{-std::ptrdiff_t(p.shift[0]),
                                            -std::ptrdiff_t(p.shift[1]),
                                            -std::ptrdiff_t(p.shift[2])};
    Tensor<T> s = cyclic_shift(t, off);
    Tensor<T> w = window_partition(layer_norm(s, p.ln3.gamma, p.ln3.beta), p.eff_window);
    ValidityMask<T> vm = build_validity_mask<T>(spatial, p.eff_window, p.shift);
    Tensor<T> a = msa_forward(w, p.sswmsa, p.window.num_heads,
                              std::optional<Tensor<T>>(p.smart_mask.effective(vm)));
    t = add(t, cyclic_unshift(window_reverse(a, p.eff_window, B, spatial), off));
  }
  // x <- x + MLP(LN(x))
  t = add(t, p.mlp2.forward(layer_norm(t, p.ln4.gamma, p.ln4.beta)));

  return transpose(t, {0, 4, 1, 2, 3});
}

}  // namespace sstdunet

#endif
