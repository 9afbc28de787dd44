#include <algorithm>
#include <random>

#include "sstdunet/data.hpp"

namespace sstdunet {

std::vector<SplitPlan> make_splits(const std::vector<std::string>& subject_ids,
                                   std::uint64_t seed, std::size_t repeats) {
  if (subject_ids.size() < 5)
    throw ContractError("make_splits needs at least 5 subjects, got " +
                        std::to_string(subject_ids.size()));
  if (repeats == 0) throw ConfigError("repeats must be positive");

  std::vector<std::string> ids = subject_ids;
  std::sort(ids.begin(), ids.end());  // independence from caller ordering
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t n_test = std::max<std::size_t>(1, ids.size() / 5);
  std::vector<std::string> test(ids.begin(), ids.begin() + long(n_test));
  std::vector<std::string> pool(ids.begin() + long(n_test), ids.end());
  const std::size_t n_val = std::max<std::size_t>(1, pool.size() / 5);

  std::vector<SplitPlan> plans;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::vector<std::string> p = pool;
    std::mt19937_64 rrng(seed ^ (0x9e3779b97f4a7c15ull * (r + 1)));
    std::shuffle(p.begin(), p.end(), rrng);
    SplitPlan plan;
    plan.repeat = r + 1;
    plan.test = test;
    plan.val.assign(p.begin(), p.begin() + long(n_val));
    plan.train.assign(p.begin() + long(n_val), p.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.val.begin(), plan.val.end());
    std::sort(plan.test.begin(), plan.test.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace sstdunet
