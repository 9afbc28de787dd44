#ifndef SSTDUNET_TENSOR_HPP
#define SSTDUNET_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sstdunet/errors.hpp"

namespace sstdunet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Row-major strides.
inline std::vector<std::size_t> make_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` viewed under broadcast target `out` (0 on broadcast axes).
inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  auto st = make_strides(s);
  std::vector<std::size_t> r(out.size(), 0);
  const std::size_t off = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i)
    r[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on demand, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // pushes this->grad into parents

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

// Dense row-major tensor with reverse-mode autodiff. Copies are shallow
// (shared storage); ops produce fresh nodes recorded on the implicit tape.
template <typename T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() : n_(std::make_shared<Node>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : n_(std::make_shared<Node>()) {
    n_->shape = std::move(shape);
    n_->data.assign(numel(n_->shape), T(0));
    n_->requires_grad = requires_grad;
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.n_->shape = std::move(shape);
    t.n_->data = std::move(data);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data({}, {v}, requires_grad);
  }

  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->data.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t ndim() const { return n_->shape.size(); }

  std::vector<T>& data() { return n_->data; }
  const std::vector<T>& data() const { return n_->data; }
  T& operator[](std::size_t i) { return n_->data[i]; }
  const T& operator[](std::size_t i) const { return n_->data[i]; }

  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of size " + std::to_string(size()));
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool v) { n_->requires_grad = v; }

  bool has_grad() const { return n_->grad.size() == n_->data.size(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) throw ContractError("grad accessed before backward()");
    return n_->grad;
  }
  void zero_grad() { n_->grad.clear(); }

  std::shared_ptr<Node> node() const { return n_; }

  // Reverse-mode sweep from a scalar result. Grads accumulate across calls.
  void backward() const {
    if (size() != 1) throw ContractError("backward() requires a scalar, got " + shape_str(shape()));
    // Topological order by iterative DFS over recorded parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{n_.get(), 0}};
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    // Intermediate grads are transient per sweep; only leaves accumulate.
    for (Node* node : order)
      if (node->backprop) node->grad.assign(node->data.size(), T(0));
    n_->ensure_grad();
    n_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (!node->backprop) continue;
      for (auto& p : node->parents) p->ensure_grad();
      node->backprop(*node);
    }
  }

  // Detach from the tape (shared storage, no history).
  Tensor detach() const {
    Tensor t;
    t.n_->shape = n_->shape;
    t.n_->data = n_->data;
    return t;
  }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

template <typename T>
inline bool any_requires(std::initializer_list<const Tensor<T>*> ts) {
  for (auto* t : ts)
    if (t->requires_grad() || t->node()->backprop) return true;
  return false;
}

template <typename T>
inline Tensor<T> make_result(Shape shape, std::vector<T> data,
                             std::initializer_list<const Tensor<T>*> inputs,
                             std::function<void(TensorNode<T>&)> backprop) {
  Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(data));
  if (any_requires(inputs)) {
    out.node()->requires_grad = true;
    for (auto* t : inputs) out.node()->parents.push_back(t->node());
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

// Accumulate `g` (shaped `from`) into `dst` (shaped `to`), summing broadcast axes.
template <typename T>
inline void reduce_into(const std::vector<T>& g, const Shape& from, std::vector<T>& dst,
                        const Shape& to) {
  if (from == to) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    return;
  }
  const auto bs = broadcast_strides(to, from);
  const std::size_t n = numel(from);
  std::vector<std::size_t> idx(from.size(), 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dst[off] += g[i];
    for (std::size_t d = from.size(); d-- > 0;) {
      off += bs[d];
      if (++idx[d] < from[d]) break;
      idx[d] = 0;
      off -= bs[d] * from[d];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Broadcast elementwise binary ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Bwd bwd) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(n);
  std::vector<std::size_t> idx(out_shape.size(), 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(a[oa], b[ob]);
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      oa += sa[d]; ob += sb[d];
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
      oa -= sa[d] * out_shape[d];
      ob -= sb[d] * out_shape[d];
    }
  }
  auto an = a.node(); auto bn = b.node();
  Shape ash = a.shape(), bsh = b.shape();
  return detail::make_result<T>(
      out_shape, std::move(out), {&a, &b},
      [an, bn, ash, bsh, out_shape, sa, sb, bwd](detail::TensorNode<T>& self) {
        const std::size_t n = self.data.size();
        std::vector<std::size_t> idx(out_shape.size(), 0);
        std::size_t oa = 0, ob = 0;
        for (std::size_t i = 0; i < n; ++i) {
          T ga, gb;
          bwd(an->data[oa], bn->data[ob], self.grad[i], ga, gb);
          an->grad[oa] += ga;
          bn->grad[ob] += gb;
          for (std::size_t d = out_shape.size(); d-- > 0;) {
            oa += sa[d]; ob += sb[d];
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
          }
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x + y; },
                   [](T, T, T g, T& ga, T& gb) { ga = g; gb = g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x - y; },
                   [](T, T, T g, T& ga, T& gb) { ga = g; gb = -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x * y; },
                   [](T x, T y, T g, T& ga, T& gb) { ga = g * y; gb = g * x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, [](T x, T y) { return x / y; },
                   [](T x, T y, T g, T& ga, T& gb) { ga = g / y; gb = -g * x / (y * y); });
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  auto xn = x.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {&x},
      [xn, bwd](detail::TensorNode<T>& self) {
        for (std::size_t i = 0; i < self.data.size(); ++i)
          xn->grad[i] += bwd(xn->data[i], self.data[i]) * self.grad[i];
      });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}
template <typename T> Tensor<T> operator-(const Tensor<T>& x) { return neg(x); }

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> pow_const(const Tensor<T>& x, T p) {
  return unary_op(x, [p](T v) { return std::pow(v, p); },
                  [p](T v, T) { return p == T(0) ? T(0) : p * std::pow(v, p - T(1)); });
}

// Clamp with straight-through interior gradient, zero at the rails.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary_op(x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
                  [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return unary_op(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
  return unary_op(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

// s - x
template <typename T>
Tensor<T> rsub_scalar(T s, const Tensor<T>& x) {
  return unary_op(x, [s](T v) { return s - v; }, [](T, T) { return T(-1); });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
  if (!(slope > T(0) && slope < T(1)))
    throw ConfigError("leaky_relu slope must be in (0,1)");
  return unary_op(x, [slope](T v) { return v >= T(0) ? v : slope * v; },
                  [slope](T v, T) { return v >= T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                  [](T, T y) { return y * (T(1) - y); });
}

// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(
      x,
      [](T v) { return T(0.5) * v * (T(1) + T(std::erf(double(v) * inv_sqrt2))); },
      [](T v, T) {
        const double cdf = 0.5 * (1.0 + std::erf(double(v) * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return T(cdf + double(v) * pdf);
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto xn = x.node();
  return detail::make_result<T>(Shape{}, {acc}, {&x}, [xn](detail::TensorNode<T>& self) {
    const T g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T inv = T(1) / T(x.size());
  auto xn = x.node();
  return detail::make_result<T>(Shape{}, {acc * inv}, {&x},
                                [xn, inv](detail::TensorNode<T>& self) {
                                  const T g = self.grad[0] * inv;
                                  for (auto& gv : xn->grad) gv += g;
                                });
}

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  auto xn = x.node();
  std::vector<T> out = x.data();
  return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                [xn](detail::TensorNode<T>& self) {
                                  for (std::size_t i = 0; i < self.data.size(); ++i)
                                    xn->grad[i] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  if (perm.size() != x.ndim()) throw ShapeError("transpose permutation rank mismatch");
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.shape()[perm[i]];
  const auto in_strides = make_strides(x.shape());
  std::vector<std::size_t> src_strides(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_strides[i] = in_strides[perm[i]];
  const std::size_t n = x.size();
  std::vector<T> out(n);
  std::vector<std::size_t> map(n);  // out index -> in index
  std::vector<std::size_t> idx(out_shape.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[src];
    map[i] = src;
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      src += src_strides[d];
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
      src -= src_strides[d] * out_shape[d];
    }
  }
  auto xn = x.node();
  auto map_p = std::make_shared<std::vector<std::size_t>>(std::move(map));
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [xn, map_p](detail::TensorNode<T>& self) {
                                  for (std::size_t i = 0; i < self.data.size(); ++i)
                                    xn->grad[(*map_p)[i]] += self.grad[i];
                                });
}

// out[i] = x[index_map[i]]; adjoint scatter-adds.
template <typename T>
Tensor<T> gather(const Tensor<T>& x, std::shared_ptr<const std::vector<std::size_t>> index_map,
                 Shape out_shape) {
  if (index_map->size() != numel(out_shape))
    throw ShapeError("gather index map size does not match output shape");
  std::vector<T> out(index_map->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if ((*index_map)[i] >= x.size()) throw ShapeError("gather index out of range");
    out[i] = x[(*index_map)[i]];
  }
  auto xn = x.node();
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [xn, index_map](detail::TensorNode<T>& self) {
                                  for (std::size_t i = 0; i < self.data.size(); ++i)
                                    xn->grad[(*index_map)[i]] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = s0;
  std::size_t total_axis = 0;
  for (const auto& x : xs) {
    if (x.ndim() != s0.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (d != axis && x.shape()[d] != s0[d])
        throw ShapeError("concat extent mismatch at axis " + std::to_string(d) + ": " +
                         shape_str(x.shape()) + " vs " + shape_str(s0));
    total_axis += x.shape()[axis];
  }
  out_shape[axis] = total_axis;

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<T> out(numel(out_shape));
  const std::size_t out_row = total_axis * inner;
  std::size_t col = 0;
  for (const auto& x : xs) {
    const std::size_t w = x.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.data().begin() + o * w, w, out.begin() + o * out_row + col);
    col += w;
  }

  std::vector<std::shared_ptr<detail::TensorNode<T>>> nodes;
  std::vector<std::size_t> widths;
  bool rec = false;
  for (const auto& x : xs) {
    nodes.push_back(x.node());
    widths.push_back(x.shape()[axis] * inner);
    rec = rec || x.requires_grad() || x.node()->backprop;
  }
  Tensor<T> result = Tensor<T>::from_data(out_shape, std::move(out));
  if (rec) {
    result.node()->requires_grad = true;
    result.node()->parents = nodes;
    result.node()->backprop = [nodes, widths, outer, out_row](detail::TensorNode<T>& self) {
      std::size_t col = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto& g = nodes[k]->grad;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i)
            g[o * widths[k] + i] += self.grad[o * out_row + col + i];
        col += widths[k];
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// Batched matmul: [..., m, k] x [..., k, n] with broadcastable batch dims
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw ShapeError("matmul requires rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.shape()[a.ndim() - 2], k = a.shape()[a.ndim() - 1];
  const std::size_t kb = b.shape()[b.ndim() - 2], n = b.shape()[b.ndim() - 1];
  if (k != kb)
    throw ShapeError("matmul inner extent mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shape(abatch, bbatch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  const std::size_t nb = numel(batch);
  // Per-batch element offsets into a and b (stride 0 on broadcast axes).
  const auto sa = broadcast_strides(abatch, batch);
  const auto sb = broadcast_strides(bbatch, batch);
  std::vector<std::size_t> aoff(nb), boff(nb);
  {
    std::vector<std::size_t> idx(batch.size(), 0);
    for (std::size_t i = 0; i < nb; ++i) {
      std::size_t fa = 0, fb = 0;
      for (std::size_t d = 0; d < batch.size(); ++d) {
        fa += idx[d] * sa[d];
        fb += idx[d] * sb[d];
      }
      aoff[i] = fa * m * k;
      boff[i] = fb * k * n;
      for (std::size_t d = batch.size(); d-- > 0;) {
        if (++idx[d] < batch[d]) break;
        idx[d] = 0;
      }
    }
  }

  std::vector<T> out(nb * m * n, T(0));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    const T* A = ad + aoff[bi];
    const T* B = bd + boff[bi];
    T* C = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T av = A[i * k + p];
        const T* Brow = B + p * n;
        T* Crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) Crow[j] += av * Brow[j];
      }
  }

  auto an = a.node(); auto bn = b.node();
  return detail::make_result<T>(
      out_shape, std::move(out), {&a, &b},
      [an, bn, aoff, boff, nb, m, n, k](detail::TensorNode<T>& self) {
        const T* ad = an->data.data();
        const T* bd = bn->data.data();
        for (std::size_t bi = 0; bi < nb; ++bi) {
          const T* A = ad + aoff[bi];
          const T* B = bd + boff[bi];
          const T* G = self.grad.data() + bi * m * n;
          T* dA = an->grad.data() + aoff[bi];
          T* dB = bn->grad.data() + boff[bi];
          // dA = G * B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T acc = 0;
              const T* Grow = G + i * n;
              const T* Brow = B + p * n;
              for (std::size_t j = 0; j < n; ++j) acc += Grow[j] * Brow[j];
              dA[i * k + p] += acc;
            }
          // dB = A^T * G
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
              const T av = A[i * k + p];
              const T* Grow = G + i * n;
              T* dBrow = dB + p * n;
              for (std::size_t j = 0; j < n; ++j) dBrow[j] += av * Grow[j];
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Softmax along an axis. -inf inputs map to exactly 0; a slice of all -inf
// raises DegenerateMaskError.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.ndim()) throw ShapeError("softmax axis out of range");
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  const std::size_t c = s[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];

  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * c * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[base + j * inner]);
      if (std::isinf(mx) && mx < T(0))
        throw DegenerateMaskError("softmax slice has every entry masked (-inf)");
      T z = 0;
      for (std::size_t j = 0; j < c; ++j) {
        const T v = x[base + j * inner];
        const T e = std::isinf(v) && v < T(0) ? T(0) : std::exp(v - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < c; ++j) out[base + j * inner] /= z;
    }

  auto xn = x.node();
  return detail::make_result<T>(
      s, std::move(out), {&x},
      [xn, outer, inner, c](detail::TensorNode<T>& self) {
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * c * inner + in;
            T dot = 0;
            for (std::size_t j = 0; j < c; ++j)
              dot += self.grad[base + j * inner] * self.data[base + j * inner];
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t k = base + j * inner;
              xn->grad[k] += self.data[k] * (self.grad[k] - dot);
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Layer norm over the last axis, affine gamma/beta of extent C.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  if (x.ndim() == 0) throw ShapeError("layer_norm requires rank >= 1");
  const std::size_t c = x.shape().back();
  if (gamma.size() != c || beta.size() != c)
    throw ShapeError("layer_norm affine extent mismatch: C=" + std::to_string(c));
  if (!(eps > T(0))) throw ConfigError("layer_norm eps must be positive");
  const std::size_t rows = x.size() / c;

  std::vector<T> out(x.size());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto invstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * c;
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += x[base + j];
    mu /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const T d = x[base + j] - mu;
      var += d * d;
    }
    var /= T(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*invstd)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (x[base + j] - mu) * is;
      (*xhat)[base + j] = h;
      out[base + j] = gamma[j] * h + beta[j];
    }
  }

  auto xn = x.node(); auto gn = gamma.node(); auto bn = beta.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [xn, gn, bn, xhat, invstd, rows, c](detail::TensorNode<T>& self) {
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * c;
          T mean_dh = 0, mean_dhh = 0;
          for (std::size_t j = 0; j < c; ++j) {
            const T g = self.grad[base + j];
            const T h = (*xhat)[base + j];
            const T dh = g * gn->data[j];
            mean_dh += dh;
            mean_dhh += dh * h;
            gn->grad[j] += g * h;
            bn->grad[j] += g;
          }
          mean_dh /= T(c);
          mean_dhh /= T(c);
          const T is = (*invstd)[r];
          for (std::size_t j = 0; j < c; ++j) {
            const T dh = self.grad[base + j] * gn->data[j];
            xn->grad[base + j] += is * (dh - mean_dh - (*xhat)[base + j] * mean_dhh);
          }
        }
      });
}

// Affine map over the last axis: x:[..., in] * w:[in, out] + b:[out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() < 1 || w.ndim() != 2)
    throw ShapeError("linear expects x rank>=1 and 2D weight");
  const std::size_t in = w.shape()[0], out = w.shape()[1];
  if (x.shape().back() != in)
    throw ShapeError("linear input extent " + std::to_string(x.shape().back()) +
                     " != weight rows " + std::to_string(in));
  Shape xm{x.size() / in, in};
  Shape out_shape = x.shape();
  out_shape.back() = out;
  Tensor<T> y = matmul(reshape(x, xm), w);
  y = add(y, b);
  return reshape(y, out_shape);
}

}  // namespace sstdunet

#endif
