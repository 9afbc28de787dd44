#include <algorithm>
#include <cmath>
#include <random>

#include "sstdunet/volume.hpp"

namespace sstdunet {

void AugmentConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(blur_sigma >= 0.0)) throw ConfigError("blur_sigma must be >= 0");
  if (!(contrast > 0.0)) throw ConfigError("contrast must be positive");
  if (!std::isfinite(brightness)) throw ConfigError("brightness must be finite");
  if (!(lowres_factor >= 1.0)) throw ConfigError("lowres_factor must be >= 1");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
}

namespace {

void gaussian_blur_axis(std::vector<float>& data, std::array<std::size_t, 3> dims,
                        int axis, double sigma) {
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * double(k) * double(k) / (sigma * sigma));
    ksum += kernel[k + radius];
  }
  for (auto& v : kernel) v /= ksum;

  const long nx = long(dims[0]), ny = long(dims[1]), nz = long(dims[2]);
  const long n[3] = {nx, ny, nz};
  const long stride[3] = {1, nx, nx * ny};
  std::vector<float> line(std::size_t(n[axis]));
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (long j = 0; j < n[a1]; ++j)
    for (long k = 0; k < n[a2]; ++k) {
      const long base = j * stride[a1] + k * stride[a2];
      for (long i = 0; i < n[axis]; ++i) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const long src = std::clamp(i + t, 0L, n[axis] - 1);  // replicate edges
          acc += kernel[t + radius] * data[std::size_t(base + src * stride[axis])];
        }
        line[std::size_t(i)] = float(acc);
      }
      for (long i = 0; i < n[axis]; ++i)
        data[std::size_t(base + i * stride[axis])] = line[std::size_t(i)];
    }
}

}  // namespace

Volume augment(const Volume& vol, const AugmentConfig& cfg) {
  cfg.validate();
  if (vol.is_4d()) throw ContractError("augment expects a 3D volume");
  Volume out = vol;
  std::mt19937_64 rng(cfg.seed);

  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (auto& v : out.data) v = float(v + noise(rng));
  }
  if (cfg.blur_sigma > 0.0)
    for (int axis = 0; axis < 3; ++axis)
      gaussian_blur_axis(out.data, out.dims, axis, cfg.blur_sigma);
  if (cfg.contrast != 1.0 || cfg.brightness != 0.0)
    for (auto& v : out.data)
      v = float((v - 0.5) * cfg.contrast + 0.5 + cfg.brightness);
  if (cfg.lowres_factor > 1.0) {
    std::array<std::size_t, 3> small{};
    for (int a = 0; a < 3; ++a)
      small[a] = std::max<std::size_t>(1, std::size_t(std::floor(
                     double(out.dims[a]) / cfg.lowres_factor)));
    out = resize(resize(out, small, ResizeMode::kTrilinear), vol.dims,
                 ResizeMode::kTrilinear);
  }
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  if (cfg.gamma != 1.0)
    for (auto& v : out.data) v = float(std::pow(double(v), cfg.gamma));
  return out;
}

Volume rician_noise(const Volume& vol, double sigma_fraction, std::uint64_t seed) {
  if (!(sigma_fraction >= 0.0)) throw ConfigError("sigma_fraction must be >= 0");
  Volume out = vol;
  if (sigma_fraction == 0.0 || vol.data.empty()) return out;
  const float peak = *std::max_element(vol.data.begin(), vol.data.end());
  const double sigma = sigma_fraction * double(peak);
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& v : out.data) {
    const double n1 = gauss(rng), n2 = gauss(rng);
    v = float(std::sqrt((double(v) + n1) * (double(v) + n1) + n2 * n2));
  }
  return out;
}

}  // namespace sstdunet
