#ifndef SSTDUNET_POSTPROC_HPP
#define SSTDUNET_POSTPROC_HPP

#include "sstdunet/metrics.hpp"
#include "sstdunet/volume.hpp"

namespace sstdunet {

// v >= threshold maps to 1 (ties go foreground). Mask dims follow the
// volume's {x,y,z} as {D,H,W} slots; data is transposed from the volume's
// x-fastest order into the mask's W-fastest order.
Mask3D binarize(const Volume& prob, double threshold = 0.5);

struct LabeledComponents {
  std::array<std::size_t, 3> dims{};
  std::vector<std::uint32_t> labels;  // 0 background, 1..count dense
  std::vector<std::size_t> sizes;     // sizes[k-1] = voxels with label k
  std::size_t count = 0;
};

// Union-find labeling; connectivity 6 (faces) or 26 (faces+edges+corners).
// Labels are numbered by first raster-order appearance.
LabeledComponents label_components(const Mask3D& mask, int connectivity = 26);

// Keeps one component of maximal size; ties resolve to the component whose
// minimal linear index is lowest (the lowest label under raster numbering).
// empty_flag, when given, reports an all-background input.
Mask3D largest_component(const Mask3D& mask, int connectivity = 26,
                         bool* empty_flag = nullptr);

}  // namespace sstdunet

#endif
