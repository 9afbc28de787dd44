#ifndef SSTDUNET_DATA_HPP
#define SSTDUNET_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sstdunet/errors.hpp"

namespace sstdunet {

// One JSON-lines manifest record. mask and split are optional ("" if unset).
struct ManifestEntry {
  std::string path;
  std::string subject_id;
  std::string mask;
  std::string split;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

struct SplitPlan {
  std::size_t repeat = 0;  // 1..5
  std::vector<std::string> train, val, test;
};

// Five repeats sharing a fixed 20% test set; within each repeat, 20% of the
// remaining pool becomes validation. Deterministic under seed.
std::vector<SplitPlan> make_splits(const std::vector<std::string>& subject_ids,
                                   std::uint64_t seed, std::size_t repeats = 5);

}  // namespace sstdunet

#endif
