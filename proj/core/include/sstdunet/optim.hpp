#ifndef SSTDUNET_OPTIM_HPP
#define SSTDUNET_OPTIM_HPP

#include <cmath>

#include "sstdunet/params.hpp"

namespace sstdunet {

struct LrSchedule {
  double target = 1e-5;
  std::size_t warmup_epochs = 50;
  std::size_t total_epochs = 100;
  double start_fraction = 0.01;  // lr at epoch 0, as a fraction of target
  double end_fraction = 0.01;    // lr at the last epoch

  void validate() const {
    if (!(target > 0.0)) throw ConfigError("learning rate must be positive");
    if (warmup_epochs > total_epochs)
      throw ConfigError("warmup_epochs must not exceed total_epochs");
    if (!(start_fraction > 0.0) || !(end_fraction > 0.0))
      throw ConfigError("schedule fractions must be positive");
  }
};

// Linear ramp to the target over the warmup, then cosine decay to the floor.
// Continuous at the junction: both phases hit the target at warmup_epochs.
inline double lr_at(std::size_t epoch, const LrSchedule& s) {
  s.validate();
  if (epoch >= s.total_epochs) throw ConfigError("epoch out of schedule range");
  const double start = s.target * s.start_fraction;
  const double floor = s.target * s.end_fraction;
  if (epoch <= s.warmup_epochs) {
    if (s.warmup_epochs == 0) return s.target;
    return start + (s.target - start) * double(epoch) / double(s.warmup_epochs);
  }
  const double span = double(s.total_epochs - s.warmup_epochs);
  const double phase = double(epoch - s.warmup_epochs) / span;
  return floor + 0.5 * (s.target - floor) * (1.0 + std::cos(M_PI * phase));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <typename T>
struct AdamWState {
  std::vector<std::vector<double>> m, v;  // double accumulators per parameter
  std::size_t step = 0;
};

// One decoupled-weight-decay Adam step over all parameters. Decay multiplies
// the weights directly (theta *= 1 - lr*wd) before the moment update; a
// missing gradient counts as zero.
template <typename T>
void adamw_step(ParamList<T>& params, AdamWState<T>& state, double lr,
                const AdamWConfig& cfg = {}) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.size(), 0.0);
      state.v[i].assign(params[i].tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ContractError("optimizer state does not match parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& data = p.tensor.data();
    if (state.m[i].size() != data.size())
      throw ContractError("optimizer state shape mismatch at " + p.name);
    const bool has = p.tensor.has_grad();
    const std::vector<T>* g = has ? &p.tensor.grad() : nullptr;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double gk = has ? double((*g)[k]) : 0.0;
      if (!std::isfinite(gk))
        throw TrainingError("non-finite gradient in parameter " + p.name);
      double theta = double(data[k]) * (1.0 - lr * cfg.weight_decay);
      state.m[i][k] = cfg.beta1 * state.m[i][k] + (1.0 - cfg.beta1) * gk;
      state.v[i][k] = cfg.beta2 * state.v[i][k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = state.m[i][k] / bc1;
      const double vhat = state.v[i][k] / bc2;
      theta -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      data[k] = T(theta);
    }
  }
}

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace sstdunet

#endif
