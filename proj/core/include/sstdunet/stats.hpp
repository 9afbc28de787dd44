#ifndef SSTDUNET_STATS_HPP
#define SSTDUNET_STATS_HPP

#include <string>
#include <vector>

#include "sstdunet/errors.hpp"

namespace sstdunet {

struct PearsonResult {
  double r = 0.0;
  bool defined = false;  // false when either series has zero variance
};

PearsonResult pearson(const std::vector<double>& a, const std::vector<double>& b);

// atanh(r); |r| = 1 maps to +-inf, which doubles as the overflow flag.
double fisher_z(double r);

enum class Tail { kTwoSided, kGreater, kLess };

struct StatResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  std::string kind;
  bool degenerate = false;  // zero sample variance; p forced to {0, 0.5, 1}
};

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation,
// absolute accuracy better than 1e-10 over the t-test parameter range.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);

StatResult t_test_one_sample(const std::vector<double>& samples, double mu0,
                             Tail tail = Tail::kTwoSided);
StatResult t_test_paired(const std::vector<double>& a, const std::vector<double>& b,
                         Tail tail = Tail::kTwoSided);

struct FdrResult {
  std::vector<bool> rejected;
  std::vector<double> adjusted;  // monotone BH-adjusted p values
};

FdrResult fdr_bh(const std::vector<double>& p_values, double q);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sstdunet

#endif
