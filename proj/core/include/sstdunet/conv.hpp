#ifndef SSTDUNET_CONV_HPP
#define SSTDUNET_CONV_HPP

#include "sstdunet/tensor.hpp"

namespace sstdunet {

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  if (in + 2 * p < k)
    throw ShapeError("conv kernel " + std::to_string(k) + " larger than padded extent " +
                     std::to_string(in + 2 * p));
  return (in + 2 * p - k) / s + 1;
}

// Valid output range for one kernel tap: iw = ow*s + kk - p must land in [0, in).
inline void tap_range(std::size_t in, std::size_t out, std::size_t s, std::ptrdiff_t off,
                      std::size_t& lo, std::size_t& hi) {
  std::ptrdiff_t l = 0;
  if (off < 0) l = (-off + std::ptrdiff_t(s) - 1) / std::ptrdiff_t(s);
  std::ptrdiff_t h = (std::ptrdiff_t(in) - 1 - off) / std::ptrdiff_t(s) + 1;
  h = std::min<std::ptrdiff_t>(h, std::ptrdiff_t(out));
  lo = std::size_t(std::max<std::ptrdiff_t>(l, 0));
  hi = std::size_t(std::max<std::ptrdiff_t>(h, std::ptrdiff_t(lo)));
}

}  // namespace detail

// 3D cross-correlation. x:[B,Ci,D,H,W], w:[Co,Ci,kd,kh,kw], b:[Co].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride = 1, std::size_t padding = 0) {
  if (x.ndim() != 5 || w.ndim() != 5)
    throw ShapeError("conv3d expects 5D input and weight, got " + shape_str(x.shape()) +
                     " and " + shape_str(w.shape()));
  if (stride < 1) throw ConfigError("conv3d stride must be >= 1");
  const std::size_t B = x.dim(0), Ci = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t Co = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(1) != Ci)
    throw ShapeError("conv3d channel mismatch: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(w.shape()));
  if (b.size() != Co) throw ShapeError("conv3d bias extent != out channels");
  const std::size_t OD = detail::conv_out_extent(D, kd, stride, padding);
  const std::size_t OH = detail::conv_out_extent(H, kh, stride, padding);
  const std::size_t OW = detail::conv_out_extent(W, kw, stride, padding);
  const std::ptrdiff_t p = std::ptrdiff_t(padding);
  const std::size_t s = stride;

  std::vector<T> out(B * Co * OD * OH * OW);
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (std::size_t bb = 0; bb < B; ++bb)
    for (std::size_t co = 0; co < Co; ++co) {
      T* oslab = out.data() + (bb * Co + co) * OD * OH * OW;
      std::fill_n(oslab, OD * OH * OW, b[co]);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* islab = xd + (bb * Ci + ci) * D * H * W;
        for (std::size_t zk = 0; zk < kd; ++zk)
          for (std::size_t yk = 0; yk < kh; ++yk)
            for (std::size_t xk = 0; xk < kw; ++xk) {
              const T wv = wd[(((co * Ci + ci) * kd + zk) * kh + yk) * kw + xk];
              if (wv == T(0)) continue;
              std::size_t dlo, dhi, hlo, hhi, wlo, whi;
              detail::tap_range(D, OD, s, std::ptrdiff_t(zk) - p, dlo, dhi);
              detail::tap_range(H, OH, s, std::ptrdiff_t(yk) - p, hlo, hhi);
              detail::tap_range(W, OW, s, std::ptrdiff_t(xk) - p, wlo, whi);
              for (std::size_t od = dlo; od < dhi; ++od) {
                const std::size_t id = od * s + zk - padding;
                for (std::size_t oh = hlo; oh < hhi; ++oh) {
                  const std::size_t ih = oh * s + yk - padding;
                  const T* irow = islab + (id * H + ih) * W + (wlo * s + xk - padding);
                  T* orow = oslab + (od * OH + oh) * OW + wlo;
                  const std::size_t nw = whi - wlo;
                  if (s == 1) {
                    for (std::size_t i = 0; i < nw; ++i) orow[i] += wv * irow[i];
                  } else {
                    for (std::size_t i = 0; i < nw; ++i) orow[i] += wv * irow[i * s];
                  }
                }
              }
            }
      }
    }

  auto xn = x.node(); auto wn = w.node(); auto bn = b.node();
  return detail::make_result<T>(
      Shape{B, Co, OD, OH, OW}, std::move(out), {&x, &w, &b},
      [=](detail::TensorNode<T>& self) {
        const T* g = self.grad.data();
        for (std::size_t bb = 0; bb < B; ++bb)
          for (std::size_t co = 0; co < Co; ++co) {
            const T* gslab = g + (bb * Co + co) * OD * OH * OW;
            {  // bias
              T acc = 0;
              for (std::size_t i = 0; i < OD * OH * OW; ++i) acc += gslab[i];
              bn->grad[co] += acc;
            }
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* islab = xn->data.data() + (bb * Ci + ci) * D * H * W;
              T* dslab = xn->grad.data() + (bb * Ci + ci) * D * H * W;
              for (std::size_t zk = 0; zk < kd; ++zk)
                for (std::size_t yk = 0; yk < kh; ++yk)
                  for (std::size_t xk = 0; xk < kw; ++xk) {
                    const std::size_t widx = (((co * Ci + ci) * kd + zk) * kh + yk) * kw + xk;
                    const T wv = wn->data[widx];
                    T wacc = 0;
                    std::size_t dlo, dhi, hlo, hhi, wlo, whi;
                    detail::tap_range(D, OD, s, std::ptrdiff_t(zk) - p, dlo, dhi);
                    detail::tap_range(H, OH, s, std::ptrdiff_t(yk) - p, hlo, hhi);
                    detail::tap_range(W, OW, s, std::ptrdiff_t(xk) - p, wlo, whi);
                    for (std::size_t od = dlo; od < dhi; ++od) {
                      const std::size_t id = od * s + zk - padding;
                      for (std::size_t oh = hlo; oh < hhi; ++oh) {
                        const std::size_t ih = oh * s + yk - padding;
                        const std::size_t ibase = (id * H + ih) * W + (wlo * s + xk - padding);
                        const T* grow = gslab + (od * OH + oh) * OW + wlo;
                        const std::size_t nw = whi - wlo;
                        for (std::size_t i = 0; i < nw; ++i) {
                          wacc += grow[i] * islab[ibase + i * s];
                          dslab[ibase + i * s] += wv * grow[i];
                        }
                      }
                    }
                    wn->grad[widx] += wacc;
                  }
            }
          }
      });
}

// Transposed 3D convolution. x:[B,Ci,D,H,W], w:[Ci,Co,kd,kh,kw], b:[Co].
// Output extent = (in-1)*stride + k - 2*padding. Adjoint pair of conv3d.
template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::size_t stride = 2, std::size_t padding = 0) {
  if (x.ndim() != 5 || w.ndim() != 5)
    throw ShapeError("conv_transpose3d expects 5D input and weight");
  if (stride < 1) throw ConfigError("conv_transpose3d stride must be >= 1");
  const std::size_t B = x.dim(0), Ci = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t Co = w.dim(1), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(0) != Ci)
    throw ShapeError("conv_transpose3d channel mismatch: input " + shape_str(x.shape()) +
                     ", weight " + shape_str(w.shape()));
  if (b.size() != Co) throw ShapeError("conv_transpose3d bias extent != out channels");
  auto oext = [&](std::size_t in, std::size_t k) {
    const std::ptrdiff_t e = std::ptrdiff_t((in - 1) * stride + k) - 2 * std::ptrdiff_t(padding);
    if (e <= 0) throw ShapeError("conv_transpose3d produces non-positive extent");
    return std::size_t(e);
  };
  const std::size_t OD = oext(D, kd), OH = oext(H, kh), OW = oext(W, kw);
  const std::size_t s = stride;
  const std::ptrdiff_t p = std::ptrdiff_t(padding);

  std::vector<T> out(B * Co * OD * OH * OW);
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (std::size_t bb = 0; bb < B; ++bb)
    for (std::size_t co = 0; co < Co; ++co) {
      T* oslab = out.data() + (bb * Co + co) * OD * OH * OW;
      std::fill_n(oslab, OD * OH * OW, b[co]);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* islab = xd + (bb * Ci + ci) * D * H * W;
        for (std::size_t zk = 0; zk < kd; ++zk)
          for (std::size_t yk = 0; yk < kh; ++yk)
            for (std::size_t xk = 0; xk < kw; ++xk) {
              const T wv = wd[(((ci * Co + co) * kd + zk) * kh + yk) * kw + xk];
              if (wv == T(0)) continue;
              for (std::size_t id = 0; id < D; ++id) {
                const std::ptrdiff_t od = std::ptrdiff_t(id * s + zk) - p;
                if (od < 0 || od >= std::ptrdiff_t(OD)) continue;
                for (std::size_t ih = 0; ih < H; ++ih) {
                  const std::ptrdiff_t oh = std::ptrdiff_t(ih * s + yk) - p;
                  if (oh < 0 || oh >= std::ptrdiff_t(OH)) continue;
                  const T* irow = islab + (id * H + ih) * W;
                  T* orow = oslab + (std::size_t(od) * OH + std::size_t(oh)) * OW;
                  for (std::size_t iw = 0; iw < W; ++iw) {
                    const std::ptrdiff_t ow = std::ptrdiff_t(iw * s + xk) - p;
                    if (ow < 0 || ow >= std::ptrdiff_t(OW)) continue;
                    orow[ow] += wv * irow[iw];
                  }
                }
              }
            }
      }
    }

  auto xn = x.node(); auto wn = w.node(); auto bn = b.node();
  return detail::make_result<T>(
      Shape{B, Co, OD, OH, OW}, std::move(out), {&x, &w, &b},
      [=](detail::TensorNode<T>& self) {
        const T* g = self.grad.data();
        for (std::size_t bb = 0; bb < B; ++bb)
          for (std::size_t co = 0; co < Co; ++co) {
            const T* gslab = g + (bb * Co + co) * OD * OH * OW;
            {
              T acc = 0;
              for (std::size_t i = 0; i < OD * OH * OW; ++i) acc += gslab[i];
              bn->grad[co] += acc;
            }
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* islab = xn->data.data() + (bb * Ci + ci) * D * H * W;
              T* dslab = xn->grad.data() + (bb * Ci + ci) * D * H * W;
              for (std::size_t zk = 0; zk < kd; ++zk)
                for (std::size_t yk = 0; yk < kh; ++yk)
                  for (std::size_t xk = 0; xk < kw; ++xk) {
                    const std::size_t widx = (((ci * Co + co) * kd + zk) * kh + yk) * kw + xk;
                    const T wv = wn->data[widx];
                    T wacc = 0;
                    for (std::size_t id = 0; id < D; ++id) {
                      const std::ptrdiff_t od = std::ptrdiff_t(id * s + zk) - p;
                      if (od < 0 || od >= std::ptrdiff_t(OD)) continue;
                      for (std::size_t ih = 0; ih < H; ++ih) {
                        const std::ptrdiff_t oh = std::ptrdiff_t(ih * s + yk) - p;
                        if (oh < 0 || oh >= std::ptrdiff_t(OH)) continue;
                        const T* irow = islab + (id * H + ih) * W;
                        T* drow = dslab + (id * H + ih) * W;
                        const T* grow = gslab + (std::size_t(od) * OH + std::size_t(oh)) * OW;
                        for (std::size_t iw = 0; iw < W; ++iw) {
                          const std::ptrdiff_t ow = std::ptrdiff_t(iw * s + xk) - p;
                          if (ow < 0 || ow >= std::ptrdiff_t(OW)) continue;
                          wacc += grow[ow] * irow[iw];
                          drow[iw] += wv * grow[ow];
                        }
                      }
                    }
                    wn->grad[widx] += wacc;
                  }
            }
          }
      });
}

// Max pooling with kernel == stride (non-overlapping). Gradient routes to the
// first (lowest linear index) maximum of each window.
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x, std::size_t kernel = 2, std::size_t stride = 2) {
  if (x.ndim() != 5) throw ShapeError("maxpool3d expects 5D input");
  if (kernel != stride) throw ConfigError("maxpool3d supports kernel == stride only");
  const std::size_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  if (D % stride || H % stride || W % stride)
    throw ShapeError("maxpool3d extents " + shape_str(x.shape()) + " not divisible by stride " +
                     std::to_string(stride));
  const std::size_t OD = D / stride, OH = H / stride, OW = W / stride;
  std::vector<T> out(B * C * OD * OH * OW);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* slab = x.data().data() + bc * D * H * W;
    const std::size_t base = bc * D * H * W;
    for (std::size_t od = 0; od < OD; ++od)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t bidx = 0;
          for (std::size_t zk = 0; zk < kernel; ++zk)
            for (std::size_t yk = 0; yk < kernel; ++yk)
              for (std::size_t xk = 0; xk < kernel; ++xk) {
                const std::size_t idx =
                    ((od * stride + zk) * H + oh * stride + yk) * W + ow * stride + xk;
                if (slab[idx] > best) {
                  best = slab[idx];
                  bidx = idx;
                }
              }
          out[o] = best;
          (*arg)[o] = base + bidx;
        }
  }
  auto xn = x.node();
  return detail::make_result<T>(Shape{B, C, OD, OH, OW}, std::move(out), {&x},
                                [xn, arg](detail::TensorNode<T>& self) {
                                  for (std::size_t i = 0; i < self.data.size(); ++i)
                                    xn->grad[(*arg)[i]] += self.grad[i];
                                });
}

}  // namespace sstdunet

#endif
