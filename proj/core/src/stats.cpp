#include "sstdunet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sstdunet {

namespace {

void check_series(const std::vector<double>& v, std::size_t min_len, const char* what) {
  if (v.size() < min_len)
    throw ContractError(std::string(what) + " needs at least " + std::to_string(min_len) +
                        " samples, got " + std::to_string(v.size()));
  for (double x : v)
    if (!std::isfinite(x)) throw ContractError(std::string(what) + ": non-finite sample");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-30;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw ContractError("incomplete beta continued fraction did not converge");
}

StatResult t_from_diffs(std::vector<double> d, Tail tail, const std::string& kind) {
  const std::size_t n = d.size();
  const double m = mean_of(d);
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  const double df = double(n - 1);
  StatResult r;
  r.df = df;
  r.kind = kind;
  if (ss == 0.0) {
    r.degenerate = true;
    if (m == 0.0) {
      r.statistic = 0.0;
      r.p_value = tail == Tail::kTwoSided ? 1.0 : 0.5;
    } else {
      r.statistic = m > 0 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
      if (tail == Tail::kTwoSided) r.p_value = 0.0;
      else if (tail == Tail::kGreater) r.p_value = m > 0 ? 0.0 : 1.0;
      else r.p_value = m < 0 ? 0.0 : 1.0;
    }
    return r;
  }
  const double se = std::sqrt(ss / df / double(n));
  r.statistic = m / se;
  const double cdf = student_t_cdf(r.statistic, df);
  switch (tail) {
    case Tail::kTwoSided: r.p_value = 2.0 * std::min(cdf, 1.0 - cdf); break;
    case Tail::kGreater: r.p_value = 1.0 - cdf; break;
    case Tail::kLess: r.p_value = cdf; break;
  }
  return r;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete_beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw ContractError("incomplete_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  // the continued fraction converges fast only below the distribution mode
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ContractError("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

PearsonResult pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("pearson: length mismatch");
  check_series(a, 3, "pearson");
  check_series(b, 3, "pearson");
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  PearsonResult r;
  if (saa == 0.0 || sbb == 0.0) return r;
  r.defined = true;
  r.r = sab / std::sqrt(saa * sbb);
  r.r = std::clamp(r.r, -1.0, 1.0);
  return r;
}

double fisher_z(double r) {
  if (!(r >= -1.0 && r <= 1.0)) throw ContractError("fisher_z: r outside [-1,1]");
  return std::atanh(r);
}

StatResult t_test_one_sample(const std::vector<double>& samples, double mu0, Tail tail) {
  check_series(samples, 2, "t_test_one_sample");
  std::vector<double> d(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) d[i] = samples[i] - mu0;
  return t_from_diffs(std::move(d), tail, "one-sample");
}

StatResult t_test_paired(const std::vector<double>& a, const std::vector<double>& b,
                         Tail tail) {
  if (a.size() != b.size()) throw ContractError("t_test_paired: length mismatch");
  check_series(a, 2, "t_test_paired");
  check_series(b, 2, "t_test_paired");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return t_from_diffs(std::move(d), tail, "paired");
}

FdrResult fdr_bh(const std::vector<double>& p_values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ContractError("fdr_bh: q must be in (0,1)");
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("fdr_bh: p outside [0,1]");
  const std::size_t n = p_values.size();
  FdrResult out;
  out.rejected.assign(n, false);
  out.adjusted.assign(n, 1.0);
  if (n == 0) return out;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  // step-up: largest k with p_(k) <= k q / n; adjusted p by running minimum
  std::vector<double> adj_sorted(n);
  double running = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const double v = p_values[order[k]] * double(n) / double(k + 1);
    running = std::min(running, std::min(v, 1.0));
    adj_sorted[k] = running;
  }
  std::size_t cutoff = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (p_values[order[k]] <= q * double(k + 1) / double(n)) cutoff = k + 1;
  for (std::size_t k = 0; k < n; ++k) {
    out.adjusted[order[k]] = adj_sorted[k];
    out.rejected[order[k]] = k < cutoff;
  }
  return out;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractError("linear_fit: length mismatch");
  check_series(x, 2, "linear_fit");
  check_series(y, 2, "linear_fit");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw ContractError("linear_fit: zero variance in x");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r = syy == 0.0 ? 0.0 : std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return f;
}

}  // namespace sstdunet
