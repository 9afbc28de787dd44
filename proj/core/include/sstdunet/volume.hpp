#ifndef SSTDUNET_VOLUME_HPP
#define SSTDUNET_VOLUME_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sstdunet/errors.hpp"

namespace sstdunet {

// Scalar grid in file order: x fastest, then y, z, and (for time series)
// t slowest. dims are {nx, ny, nz}; spacing is mm per axis.
struct Volume {
  std::array<std::size_t, 3> dims{};
  std::size_t nt = 1;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<float> data;

  std::size_t voxels() const { return dims[0] * dims[1] * dims[2]; }
  bool is_4d() const { return nt > 1; }

  float& at(std::size_t x, std::size_t y, std::size_t z, std::size_t t = 0) {
    return data[((t * dims[2] + z) * dims[1] + y) * dims[0] + x];
  }
  float at(std::size_t x, std::size_t y, std::size_t z, std::size_t t = 0) const {
    return data[((t * dims[2] + z) * dims[1] + y) * dims[0] + x];
  }
};

// NIfTI-1 single-file volumes (.nii). Reads uint8/int16/float32/float64 with
// either endianness and applies scl_slope/scl_inter; writes float32.
Volume read_nifti(const std::string& path);
void write_nifti(const Volume& vol, const std::string& path);

// Voxelwise mean over the time axis; identity for 3D input.
Volume temporal_mean(const Volume& series);

enum class ResizeMode { kTrilinear, kNearest };

// Sampling uses voxel centers at (i + 0.5) / N of the extent (align-corners
// false); edges clamp. Nearest mode preserves binary masks.
Volume resize(const Volume& vol, std::array<std::size_t, 3> target, ResizeMode mode);

// Min-max rescale to [0, 1]. A constant volume has no contrast to normalize.
Volume normalize(const Volume& vol);

struct AugmentConfig {
  double noise_sigma = 0.0;    // additive gaussian, intensity units
  double blur_sigma = 0.0;     // gaussian blur, voxel units
  double brightness = 0.0;     // additive shift
  double contrast = 1.0;       // scaling about mid-gray 0.5
  double lowres_factor = 1.0;  // >= 1; downsample then restore
  double gamma = 1.0;          // intensity exponent
  std::uint64_t seed = 0;

  void validate() const;
};

// Fixed order: noise, blur, brightness/contrast, low-res, gamma; the result
// is clamped back to [0, 1]. Deterministic under cfg.seed.
Volume augment(const Volume& vol, const AugmentConfig& cfg);

// out = sqrt((v + n1)^2 + n2^2), n1, n2 ~ N(0, sigma^2) with
// sigma = sigma_fraction * max intensity.
Volume rician_noise(const Volume& vol, double sigma_fraction, std::uint64_t seed);

}  // namespace sstdunet

#endif
