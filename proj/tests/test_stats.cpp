#include <cmath>
#include <random>

#include "doctest.h"
#include "sstdunet/stats.hpp"

using namespace sstdunet;

TEST_CASE("pearson endpoints and flags") {
  std::vector<double> a{1, 2, 3, 5, 8};
  CHECK(pearson(a, a).r == doctest::Approx(1.0));
  std::vector<double> na;
  for (double v : a) na.push_back(-v);
  CHECK(pearson(a, na).r == doctest::Approx(-1.0));
  std::vector<double> flat{2, 2, 2, 2, 2};
  CHECK_FALSE(pearson(a, flat).defined);
  CHECK_THROWS_AS(pearson(a, {1, 2}), ContractError);
  CHECK_THROWS_AS(pearson({1, 2}, {3, 4}), ContractError);  // below min length
}

TEST_CASE("pearson is location and positive-scale invariant") {
  std::vector<double> a{0.3, 1.2, -0.5, 2.2, 0.9, 1.4};
  std::vector<double> b{1.0, 0.7, 0.2, 1.9, 1.1, 0.5};
  const double r0 = pearson(a, b).r;
  std::vector<double> a2;
  for (double v : a) a2.push_back(3.5 * v - 2.0);
  CHECK(pearson(a2, b).r == doctest::Approx(r0).epsilon(1e-12));
}

TEST_CASE("fisher z") {
  CHECK(fisher_z(0.9) == doctest::Approx(1.4722).epsilon(1e-4));
  CHECK(fisher_z(0.0) == 0.0);
  for (double r : {0.1, 0.5, 0.77, 0.99})
    CHECK(fisher_z(-r) == doctest::Approx(-fisher_z(r)).epsilon(1e-14));
  CHECK(std::isinf(fisher_z(1.0)));
  CHECK(fisher_z(-1.0) < 0);
  CHECK(std::isinf(fisher_z(-1.0)));
  CHECK_THROWS_AS(fisher_z(1.5), ContractError);
  // inverse relation tanh(z) == r
  CHECK(std::tanh(fisher_z(0.37)) == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("incomplete beta closed forms") {
  for (double x : {0.0, 0.1, 0.35, 0.5, 0.82, 1.0}) {
    CHECK(incomplete_beta(1, 1, x) == doctest::Approx(x).epsilon(1e-12));
    CHECK(incomplete_beta(2, 1, x) == doctest::Approx(x * x).epsilon(1e-10));
    CHECK(incomplete_beta(1, 3, x) ==
          doctest::Approx(1.0 - std::pow(1.0 - x, 3)).epsilon(1e-10));
  }
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
  CHECK(incomplete_beta(3.5, 2.25, 0.4) ==
        doctest::Approx(1.0 - incomplete_beta(2.25, 3.5, 0.6)).epsilon(1e-12));
  // external reference value
  CHECK(incomplete_beta(3.5, 2.25, 0.4) ==
        doctest::Approx(0.15211248758927814).epsilon(1e-10));
  CHECK_THROWS_AS(incomplete_beta(-1, 1, 0.5), ContractError);
  CHECK_THROWS_AS(incomplete_beta(1, 1, 1.5), ContractError);
}

TEST_CASE("student t cdf closed forms") {
  // df=1 is Cauchy, df=2 has an elementary closed form
  for (double t : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    CHECK(student_t_cdf(t, 1) ==
          doctest::Approx(0.5 + std::atan(t) / M_PI).epsilon(1e-10));
    CHECK(student_t_cdf(t, 2) ==
          doctest::Approx(0.5 + t / (2.0 * std::sqrt(2.0 + t * t))).epsilon(1e-10));
    CHECK(student_t_cdf(-t, 5) == doctest::Approx(1.0 - student_t_cdf(t, 5)).epsilon(1e-12));
  }
  CHECK(student_t_cdf(1.3, 7) == doctest::Approx(0.8826160823038114).epsilon(1e-10));
  CHECK(student_t_cdf(0.0, 11) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("t table quantile crossing at df 4") {
  // published two-sided 5% quantile t_{0.025,4} = 2.776
  const double p = 2.0 * (1.0 - student_t_cdf(2.776, 4));
  CHECK(p == doctest::Approx(0.05).epsilon(1e-2));
  CHECK(p == doctest::Approx(0.05002277831997648).epsilon(1e-9));
  CHECK(2.0 * (1.0 - student_t_cdf(2.80, 4)) < 0.05);
  CHECK(2.0 * (1.0 - student_t_cdf(2.75, 4)) > 0.05);
}

TEST_CASE("one sample t test") {
  // symmetric about mu0: t = 0, two-tailed p = 1
  auto r = t_test_one_sample({1, 2, 3}, 2.0);
  CHECK(r.statistic == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.df == 2.0);
  // external reference: {1..5} vs 0
  r = t_test_one_sample({1, 2, 3, 4, 5}, 0.0);
  CHECK(r.statistic == doctest::Approx(4.242640687119285).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.013235599563682695).epsilon(1e-9));
  CHECK(r.df == 4.0);
  CHECK_FALSE(r.degenerate);
  CHECK_THROWS_AS(t_test_one_sample({1.0}, 0.0), ContractError);
}

TEST_CASE("paired t test") {
  std::vector<double> a{2.1, 1.9, 3.4, 2.8, 2.2, 2.6};
  std::vector<double> b{1.8, 2.0, 2.9, 2.7, 1.9, 2.1};
  auto r = t_test_paired(a, b);
  CHECK(r.statistic == doctest::Approx(2.7937211830783113).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(0.03827626894253839).epsilon(1e-9));
  auto g = t_test_paired(a, b, Tail::kGreater);
  CHECK(g.p_value == doctest::Approx(0.019138134471269195).epsilon(1e-9));
  auto l = t_test_paired(a, b, Tail::kLess);
  CHECK(l.p_value == doctest::Approx(1.0 - g.p_value).epsilon(1e-9));
  auto same = t_test_paired(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.degenerate);
}

TEST_CASE("degenerate t tests keep the sign convention") {
  auto up = t_test_one_sample({3, 3, 3}, 1.0, Tail::kGreater);
  CHECK(up.degenerate);
  CHECK(up.p_value == 0.0);
  CHECK(std::isinf(up.statistic));
  auto down = t_test_one_sample({3, 3, 3}, 5.0, Tail::kGreater);
  CHECK(down.p_value == 1.0);
  auto two = t_test_one_sample({3, 3, 3}, 1.0);
  CHECK(two.p_value == 0.0);
}

TEST_CASE("fdr step up") {
  auto r = fdr_bh({0.01, 0.02, 0.03, 0.2}, 0.05);
  CHECK(r.rejected == std::vector<bool>{true, true, true, false});
  r = fdr_bh({0.0, 0.0, 0.0}, 0.05);
  CHECK(r.rejected == std::vector<bool>{true, true, true});
  r = fdr_bh({1.0, 1.0}, 0.05);
  CHECK(r.rejected == std::vector<bool>{false, false});
  CHECK(fdr_bh({}, 0.05).rejected.empty());
  CHECK_THROWS_AS(fdr_bh({0.5}, 0.0), ContractError);
  CHECK_THROWS_AS(fdr_bh({1.5}, 0.05), ContractError);
}

TEST_CASE("fdr adjusted p values are monotone and rejections nest in q") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> p(40);
  for (auto& v : p) v = dist(rng);
  auto lo = fdr_bh(p, 0.05);
  auto hi = fdr_bh(p, 0.2);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (lo.rejected[i]) CHECK(hi.rejected[i]);
  // adjusted p sorted by raw p must be nondecreasing
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  for (std::size_t k = 1; k < order.size(); ++k)
    CHECK(lo.adjusted[order[k]] >= lo.adjusted[order[k - 1]] - 1e-15);
  // rejection at q iff adjusted p <= q
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK(lo.rejected[i] == (lo.adjusted[i] <= 0.05));
}

TEST_CASE("linear fit") {
  std::vector<double> x{0, 1, 2, 3, 4};
  CHECK(linear_fit(x, x).slope == doctest::Approx(1.0));
  CHECK(linear_fit(x, x).intercept == doctest::Approx(0.0));
  CHECK(linear_fit(x, x).r == doctest::Approx(1.0));
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v + 3.0);
  auto f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.r == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> flat{1, 1, 1, 1, 1};
  CHECK_THROWS_AS(linear_fit(flat, y), ContractError);
}

TEST_CASE("linear fit matches normal equations on noisy data") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(0.1 * i);
    y.push_back(0.996 * x.back() - 0.013 + noise(rng));
  }
  auto f = linear_fit(x, y);
  // independent formulation via raw-moment normal equations
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  CHECK(f.slope == doctest::Approx(slope).epsilon(1e-10));
  CHECK(f.intercept == doctest::Approx(intercept).epsilon(1e-10));
  CHECK(f.r == doctest::Approx(pearson(x, y).r).epsilon(1e-12));
}
