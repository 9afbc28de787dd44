#include "sstdunet/postproc.hpp"

#include <cstdlib>
#include <tuple>

namespace sstdunet {

Mask3D binarize(const Volume& prob, double threshold) {
  if (prob.is_4d()) throw ContractError("binarize expects a 3D volume");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("threshold must be in (0,1)");
  Mask3D m;
  m.dims = {prob.dims[0], prob.dims[1], prob.dims[2]};
  m.data.resize(prob.data.size());
  std::size_t o = 0;
  for (std::size_t x = 0; x < prob.dims[0]; ++x)
    for (std::size_t y = 0; y < prob.dims[1]; ++y)
      for (std::size_t z = 0; z < prob.dims[2]; ++z, ++o)
        m.data[o] = prob.at(x, y, z) >= float(threshold) ? 1 : 0;
  return m;
}

namespace {

struct UnionFind {
  std::vector<std::uint32_t> parent;

  std::uint32_t make() {
    parent.push_back(std::uint32_t(parent.size()));
    return parent.back();
  }
  std::uint32_t find(std::uint32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];  // path halving
      a = parent[a];
    }
    return a;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

LabeledComponents label_components(const Mask3D& mask, int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    throw ConfigError("connectivity must be 6 or 26");
  if (mask.data.size() != mask.size())
    throw ShapeError("mask data length does not match dims");
  const long D = long(mask.dims[0]), H = long(mask.dims[1]), W = long(mask.dims[2]);

  // two-pass: provisional labels with union of earlier neighbors, then relabel
  std::vector<std::uint32_t> prov(mask.data.size(), 0);
  UnionFind uf;
  uf.make();  // slot 0 = background, never united
  auto at = [&](long d, long h, long w) { return (d * H + h) * W + w; };

  std::vector<std::array<long, 3>> offsets;
  for (long dz = -1; dz <= 0; ++dz)
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        if (std::make_tuple(dz, dy, dx) >= std::make_tuple(0L, 0L, 0L)) continue;
        const int manhattan = int(std::abs(dz) + std::abs(dy) + std::abs(dx));
        if (connectivity == 6 && manhattan != 1) continue;
        offsets.push_back({dz, dy, dx});
      }

  for (long d = 0; d < D; ++d)
    for (long h = 0; h < H; ++h)
      for (long w = 0; w < W; ++w) {
        const std::size_t i = std::size_t(at(d, h, w));
        if (mask.data[i] > 1) throw ContractError("mask must be strictly 0/1");
        if (!mask.data[i]) continue;
        std::uint32_t lab = 0;
        for (const auto& o : offsets) {
          const long nd = d + o[0], nh = h + o[1], nw = w + o[2];
          if (nd < 0 || nh < 0 || nh >= H || nw < 0 || nw >= W) continue;
          const std::uint32_t nl = prov[at(nd, nh, nw)];
          if (!nl) continue;
          if (!lab) lab = nl;
          else uf.unite(lab, nl);
        }
        if (!lab) lab = uf.make();
        prov[i] = lab;
      }

  // dense labels in raster order of first appearance
  LabeledComponents out;
  out.dims = mask.dims;
  out.labels.assign(mask.data.size(), 0);
  std::vector<std::uint32_t> dense(uf.parent.size(), 0);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (!prov[i]) continue;
    const std::uint32_t root = uf.find(prov[i]);
    if (!dense[root]) {
      dense[root] = std::uint32_t(++out.count);
      out.sizes.push_back(0);
    }
    out.labels[i] = dense[root];
    ++out.sizes[dense[root] - 1];
  }
  return out;
}

Mask3D largest_component(const Mask3D& mask, int connectivity, bool* empty_flag) {
  LabeledComponents lc = label_components(mask, connectivity);
  if (empty_flag) *empty_flag = lc.count == 0;
  Mask3D out;
  out.dims = mask.dims;
  out.data.assign(mask.data.size(), 0);
  if (lc.count == 0) return out;
  // lowest label wins ties, which is the component with the smallest first
  // linear index under the raster numbering above
  std::uint32_t best = 1;
  for (std::uint32_t k = 2; k <= lc.count; ++k)
    if (lc.sizes[k - 1] > lc.sizes[best - 1]) best = k;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = lc.labels[i] == best ? 1 : 0;
  return out;
}

}  // namespace sstdunet
