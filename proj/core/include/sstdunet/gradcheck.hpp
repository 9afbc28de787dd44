#ifndef SSTDUNET_GRADCHECK_HPP
#define SSTDUNET_GRADCHECK_HPP

#include <functional>

#include "sstdunet/tensor.hpp"

namespace sstdunet {

template <typename T>
struct GradCheckReport {
  T max_rel_error = 0;
  std::size_t worst_leaf = 0;
  std::size_t worst_coord = 0;
  T worst_analytic = 0;
  T worst_numeric = 0;
  std::size_t checked = 0;

  bool passed(T tol) const { return max_rel_error < tol; }
};

// Central-difference check of d f / d leaves. `f` must be deterministic and
// scalar-valued; it is re-evaluated with perturbed leaf entries. When
// max_coords_per_leaf > 0 only an evenly spaced subset of coordinates of each
// leaf is perturbed. Intended for 64-bit scalars.
template <typename T>
GradCheckReport<T> check_gradients(const std::function<Tensor<T>()>& f,
                                   std::vector<Tensor<T>> leaves, T h = T(1e-5),
                                   std::size_t max_coords_per_leaf = 0) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  Tensor<T> y = f();
  if (y.size() != 1) throw ContractError("check_gradients requires a scalar-valued function");
  {
    Tensor<T> y2 = f();
    if (y2.item() != y.item())
      throw ContractError("check_gradients requires a deterministic function");
  }
  y.backward();

  GradCheckReport<T> rep;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const auto& g = leaf.grad();
    const std::size_t n = leaf.size();
    std::size_t count = n;
    if (max_coords_per_leaf > 0) count = std::min(count, max_coords_per_leaf);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = count == n ? c : c * n / count;
      const T saved = leaf[i];
      leaf[i] = saved + h;
      const T yp = f().item();
      leaf[i] = saved - h;
      const T ym = f().item();
      leaf[i] = saved;
      const T num = (yp - ym) / (2 * h);
      const T ana = g[i];
      const T err = std::abs(ana - num) / std::max<T>(std::abs(ana) + std::abs(num), T(1));
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_leaf = li;
        rep.worst_coord = i;
        rep.worst_analytic = ana;
        rep.worst_numeric = num;
      }
    }
  }
  return rep;
}

// Single-input convenience form: max relative error of d f(x) / d x.
template <typename T>
GradCheckReport<T> finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                                     Tensor<T> x, T h = T(1e-5),
                                     std::size_t max_coords = 0) {
  return check_gradients<T>([&] { return f(x); }, {x}, h, max_coords);
}

}  // namespace sstdunet

#endif
