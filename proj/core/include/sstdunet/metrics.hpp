#ifndef SSTDUNET_METRICS_HPP
#define SSTDUNET_METRICS_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sstdunet/errors.hpp"

namespace sstdunet {

struct Mask3D {
  std::array<std::size_t, 3> dims{};  // D, H, W
  std::vector<std::uint8_t> data;     // strictly 0/1, row-major, W fastest

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
};

void check_mask_pair(const Mask3D& truth, const Mask3D& pred);

struct SegScores {
  double dice = 0.0, ppv = 0.0, sen = 0.0;
  bool ppv_defined = true;   // false when the prediction is empty
  bool sen_defined = true;   // false when the ground truth is empty
  bool both_empty = false;   // dice forced to 1 by convention
};

// truth is the reference voxel set X, pred is Y:
//   Dice = 2|X n Y| / (|X| + |Y|), PPV = |X n Y| / |Y|, SEN = |X n Y| / |X|
SegScores seg_metrics(const Mask3D& truth, const Mask3D& pred);

// Exact squared Euclidean distance to the nearest set voxel, per voxel, via
// separable lower-envelope transforms. Anisotropic spacing supported.
std::vector<double> squared_edt(const Mask3D& mask,
                                std::array<double, 3> spacing = {1, 1, 1});

// Symmetric Hausdorff distance max{h(A,B), h(B,A)}; voxel units by default.
double hausdorff(const Mask3D& a, const Mask3D& b,
                 std::array<double, 3> spacing = {1, 1, 1});

struct MetricsRow {
  std::string subject;
  double dice = 0.0, ppv = 0.0, hd = 0.0, sen = 0.0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  MetricsRow mean() const;
  MetricsRow stddev() const;  // sample standard deviation
  void write_csv(std::ostream& os) const;
  std::string to_json() const;
};

}  // namespace sstdunet

#endif
