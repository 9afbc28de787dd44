#ifndef SSTDUNET_PARAMS_HPP
#define SSTDUNET_PARAMS_HPP

#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "sstdunet/tensor.hpp"

namespace sstdunet {

enum class InitKind { kFanInUniform, kZeros, kOnes };

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  InitKind init = InitKind::kZeros;
  std::size_t fan_in = 0;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Seeded, order-dependent initialization: conv/linear weights from a
// fan-in-scaled uniform, norms to one, everything marked kZeros to zero.
template <typename T>
void init_params(ParamList<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params) {
    switch (p.init) {
      case InitKind::kZeros:
        std::fill(p.tensor.data().begin(), p.tensor.data().end(), T(0));
        break;
      case InitKind::kOnes:
        std::fill(p.tensor.data().begin(), p.tensor.data().end(), T(1));
        break;
      case InitKind::kFanInUniform: {
        const double bound = 1.0 / std::sqrt(double(std::max<std::size_t>(p.fan_in, 1)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : p.tensor.data()) v = T(dist(rng));
        break;
      }
    }
    p.tensor.set_requires_grad(true);
  }
}

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

// Order-independent checksum of parameter values (FNV over the byte image).
template <typename T>
std::uint64_t param_checksum(const ParamList<T>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params)
    for (T v : p.tensor.data()) {
      std::uint64_t bits = 0;
      static_assert(sizeof(T) <= sizeof(bits));
      std::memcpy(&bits, &v, sizeof(T));
      h ^= bits;
      h *= 1099511628211ull;
    }
  return h;
}

}  // namespace sstdunet

#endif
