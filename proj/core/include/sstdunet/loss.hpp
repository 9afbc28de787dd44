#ifndef SSTDUNET_LOSS_HPP
#define SSTDUNET_LOSS_HPP

#include "sstdunet/tensor.hpp"

namespace sstdunet {

struct LossConfig {
  double alpha = 0.4;      // focal weight; dice gets 1 - alpha
  double gamma = 2.0;
  double dice_eps = 1e-6;
  double clamp_eps = 1e-7;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw ConfigError("gamma must be finite and >= 0");
    if (!(dice_eps > 0.0) || !(clamp_eps > 0.0))
      throw ConfigError("loss eps values must be positive");
  }
};

namespace detail {

template <typename T>
void check_loss_shapes(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  if (pred.size() == 0) throw ShapeError("loss of empty tensors");
}

// Row sums of a [B, N] view via matmul with a constant ones vector, so the
// reduction participates in the autodiff graph.
template <typename T>
Tensor<T> row_sums(const Tensor<T>& x, std::size_t batch) {
  const std::size_t n = x.size() / batch;
  Tensor<T> flat = reshape(x, Shape{batch, n});
  Tensor<T> ones(Shape{n, 1});
  std::fill(ones.data().begin(), ones.data().end(), T(1));
  return matmul(flat, ones);  // [B, 1]
}

}  // namespace detail

// Soft overlap loss, 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps); the
// shared eps makes the both-empty case come out 0. Computed per leading-axis
// item for 5D inputs, then averaged; lower-rank inputs are a single item.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target,
                    double eps = 1e-6) {
  detail::check_loss_shapes(pred, target);
  const std::size_t batch = pred.ndim() == 5 ? pred.dim(0) : 1;
  Tensor<T> inter = add_scalar(mul_scalar(detail::row_sums(mul(pred, target), batch), T(2)),
                               T(eps));
  Tensor<T> denom = add_scalar(add(detail::row_sums(pred, batch),
                                   detail::row_sums(target, batch)),
                               T(eps));
  return mean(rsub_scalar(T(1), div(inter, denom)));
}

namespace detail {

// p_t: prediction confidence assigned to the true class, clamped away from
// {0, 1} so logs stay finite.
template <typename T>
Tensor<T> true_class_prob(const Tensor<T>& pred, const Tensor<T>& target, double clamp_eps) {
  check_loss_shapes(pred, target);
  Tensor<T> pt = add(mul(target, pred), mul(rsub_scalar(T(1), target),
                                            rsub_scalar(T(1), pred)));
  return clamp(pt, T(clamp_eps), T(1) - T(clamp_eps));
}

}  // namespace detail

template <typename T>
Tensor<T> ce_loss(const Tensor<T>& pred, const Tensor<T>& target,
                  double clamp_eps = 1e-7) {
  Tensor<T> pt = detail::true_class_prob(pred, target, clamp_eps);
  return mean(neg(log(pt)));
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& pred, const Tensor<T>& target, double gamma,
                     double clamp_eps = 1e-7) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  Tensor<T> pt = detail::true_class_prob(pred, target, clamp_eps);
  Tensor<T> weight = pow_const(rsub_scalar(T(1), pt), T(gamma));
  return mean(neg(mul(weight, log(pt))));
}

template <typename T>
Tensor<T> combo_loss(const Tensor<T>& pred, const Tensor<T>& target,
                     const LossConfig& cfg = {}) {
  cfg.validate();
  Tensor<T> lf = focal_loss(pred, target, cfg.gamma, cfg.clamp_eps);
  Tensor<T> ld = dice_loss(pred, target, cfg.dice_eps);
  return add(mul_scalar(lf, T(cfg.alpha)), mul_scalar(ld, T(1.0 - cfg.alpha)));
}

}  // namespace sstdunet

#endif
