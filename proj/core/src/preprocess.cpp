#include <algorithm>
#include <cmath>

#include "sstdunet/volume.hpp"

namespace sstdunet {

Volume temporal_mean(const Volume& series) {
  if (series.data.size() != series.voxels() * series.nt)
    throw ContractError("volume data length does not match dims");
  Volume out;
  out.dims = series.dims;
  out.spacing = series.spacing;
  out.nt = 1;
  const std::size_t n = series.voxels();
  out.data.assign(n, 0.0f);
  for (std::size_t t = 0; t < series.nt; ++t)
    for (std::size_t i = 0; i < n; ++i) out.data[i] += series.data[t * n + i];
  const float inv = 1.0f / float(series.nt);
  for (auto& v : out.data) v *= inv;
  return out;
}

namespace {

// source coordinate of target sample i: centers at (i + 0.5) / N
inline double src_coord(std::size_t i, std::size_t target_n, std::size_t src_n) {
  return (double(i) + 0.5) * double(src_n) / double(target_n) - 0.5;
}

inline std::size_t clamp_idx(long i, std::size_t n) {
  return std::size_t(std::clamp<long>(i, 0, long(n) - 1));
}

}  // namespace

Volume resize(const Volume& vol, std::array<std::size_t, 3> target, ResizeMode mode) {
  if (vol.is_4d()) throw ContractError("resize expects a 3D volume");
  if (vol.data.size() != vol.voxels()) throw ContractError("volume data length mismatch");
  for (std::size_t t : target)
    if (t == 0) throw ContractError("resize target extents must be positive");
  Volume out;
  out.dims = target;
  for (int a = 0; a < 3; ++a)
    out.spacing[a] = vol.spacing[a] * double(vol.dims[a]) / double(target[a]);
  out.data.resize(out.voxels());

  const std::size_t nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  std::size_t o = 0;
  for (std::size_t z = 0; z < target[2]; ++z) {
    const double sz = src_coord(z, target[2], nz);
    for (std::size_t y = 0; y < target[1]; ++y) {
      const double sy = src_coord(y, target[1], ny);
      for (std::size_t x = 0; x < target[0]; ++x, ++o) {
        const double sx = src_coord(x, target[0], nx);
        if (mode == ResizeMode::kNearest) {
          out.data[o] = vol.at(clamp_idx(long(std::lround(sx)), nx),
                               clamp_idx(long(std::lround(sy)), ny),
                               clamp_idx(long(std::lround(sz)), nz));
          continue;
        }
        const long x0 = long(std::floor(sx)), y0 = long(std::floor(sy)),
                   z0 = long(std::floor(sz));
        const double fx = sx - double(x0), fy = sy - double(y0), fz = sz - double(z0);
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) *
                               (dz ? fz : 1.0 - fz);
              if (w == 0.0) continue;
              acc += w * vol.at(clamp_idx(x0 + dx, nx), clamp_idx(y0 + dy, ny),
                                clamp_idx(z0 + dz, nz));
            }
        out.data[o] = float(acc);
      }
    }
  }
  return out;
}

Volume normalize(const Volume& vol) {
  if (vol.data.empty()) throw ContractError("normalize of empty volume");
  const auto [lo_it, hi_it] = std::minmax_element(vol.data.begin(), vol.data.end());
  const float lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw ContractError("normalize: constant volume has no contrast");
  Volume out = vol;
  const float inv = 1.0f / (hi - lo);
  for (auto& v : out.data) v = (v - lo) * inv;
  return out;
}

}  // namespace sstdunet
