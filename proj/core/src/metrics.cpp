#include "sstdunet/metrics.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace sstdunet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D lower envelope of parabolas rooted at f[i] with abscissas i*step
// (squared-distance transform along one axis).
void edt_1d(const double* f, double* out, std::size_t n, double step,
            std::vector<int>& v, std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < int(n); ++q) {
    const double xq = q * step;
    while (true) {
      const double xv = v[k] * step;
      const double s =
          (f[q] + xq * xq - f[v[k]] - xv * xv) / (2.0 * xq - 2.0 * xv);
      if (s <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  k = 0;
  for (int q = 0; q < int(n); ++q) {
    const double xq = q * step;
    while (z[k + 1] < xq) ++k;
    const double d = xq - v[k] * step;
    out[q] = d * d + f[v[k]];
  }
}

void check_binary(const Mask3D& m, const char* what) {
  if (m.data.size() != m.size())
    throw ShapeError(std::string(what) + ": data length does not match dims");
  for (std::uint8_t v : m.data)
    if (v > 1) throw ContractError(std::string(what) + ": mask must be strictly 0/1");
}

std::size_t popcount(const Mask3D& m) {
  std::size_t n = 0;
  for (std::uint8_t v : m.data) n += v;
  return n;
}

double field_mean(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
  double s = 0.0;
  for (const auto& r : rows) s += r.*field;
  return s / double(rows.size());
}

double field_std(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
  if (rows.size() < 2) return 0.0;
  const double m = field_mean(rows, field);
  double ss = 0.0;
  for (const auto& r : rows) ss += (r.*field - m) * (r.*field - m);
  return std::sqrt(ss / double(rows.size() - 1));
}

}  // namespace

void check_mask_pair(const Mask3D& truth, const Mask3D& pred) {
  check_binary(truth, "truth mask");
  check_binary(pred, "predicted mask");
  if (truth.dims != pred.dims)
    throw ShapeError("mask dims mismatch: [" + std::to_string(truth.dims[0]) + "," +
                     std::to_string(truth.dims[1]) + "," + std::to_string(truth.dims[2]) +
                     "] vs [" + std::to_string(pred.dims[0]) + "," +
                     std::to_string(pred.dims[1]) + "," + std::to_string(pred.dims[2]) + "]");
}

SegScores seg_metrics(const Mask3D& truth, const Mask3D& pred) {
  check_mask_pair(truth, pred);
  std::size_t nx = 0, ny = 0, inter = 0;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    nx += truth.data[i];
    ny += pred.data[i];
    inter += truth.data[i] & pred.data[i];
  }
  SegScores s;
  if (nx + ny == 0) {
    s.both_empty = true;
    s.dice = 1.0;  // by convention; flagged
    s.ppv_defined = s.sen_defined = false;
    return s;
  }
  s.dice = 2.0 * double(inter) / double(nx + ny);
  if (ny == 0) s.ppv_defined = false;
  else s.ppv = double(inter) / double(ny);
  if (nx == 0) s.sen_defined = false;
  else s.sen = double(inter) / double(nx);
  return s;
}

std::vector<double> squared_edt(const Mask3D& mask, std::array<double, 3> spacing) {
  check_binary(mask, "edt mask");
  for (double s : spacing)
    if (!(s > 0.0)) throw ContractError("edt spacing must be positive");
  const std::size_t D = mask.dims[0], H = mask.dims[1], W = mask.dims[2];
  // large finite sentinel instead of inf: the envelope recurrence would
  // produce inf - inf = NaN otherwise
  constexpr double kFar = 1e15;
  std::vector<double> g(mask.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask.data[i] ? 0.0 : kFar;

  std::vector<int> v;
  std::vector<double> z, line_in, line_out;
  // W axis (contiguous)
  line_out.resize(W);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h) {
      double* row = g.data() + (d * H + h) * W;
      edt_1d(row, line_out.data(), W, spacing[2], v, z);
      std::copy(line_out.begin(), line_out.end(), row);
    }
  // H axis
  line_in.resize(H);
  line_out.resize(H);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t h = 0; h < H; ++h) line_in[h] = g[(d * H + h) * W + w];
      edt_1d(line_in.data(), line_out.data(), H, spacing[1], v, z);
      for (std::size_t h = 0; h < H; ++h) g[(d * H + h) * W + w] = line_out[h];
    }
  // D axis
  line_in.resize(D);
  line_out.resize(D);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) {
      for (std::size_t d = 0; d < D; ++d) line_in[d] = g[(d * H + h) * W + w];
      edt_1d(line_in.data(), line_out.data(), D, spacing[0], v, z);
      for (std::size_t d = 0; d < D; ++d) g[(d * H + h) * W + w] = line_out[d];
    }
  return g;
}

double hausdorff(const Mask3D& a, const Mask3D& b, std::array<double, 3> spacing) {
  check_mask_pair(a, b);
  if (popcount(a) == 0 || popcount(b) == 0)
    throw ContractError("hausdorff of an empty mask is undefined");
  const auto da = squared_edt(a, spacing);
  const auto db = squared_edt(b, spacing);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i]) worst = std::max(worst, db[i]);
    if (b.data[i]) worst = std::max(worst, da[i]);
  }
  return std::sqrt(worst);
}

MetricsRow MetricsReport::mean() const {
  if (rows.empty()) throw ContractError("metrics report has no rows");
  return {"mean", field_mean(rows, &MetricsRow::dice), field_mean(rows, &MetricsRow::ppv),
          field_mean(rows, &MetricsRow::hd), field_mean(rows, &MetricsRow::sen)};
}

MetricsRow MetricsReport::stddev() const {
  if (rows.empty()) throw ContractError("metrics report has no rows");
  return {"std", field_std(rows, &MetricsRow::dice), field_std(rows, &MetricsRow::ppv),
          field_std(rows, &MetricsRow::hd), field_std(rows, &MetricsRow::sen)};
}

void MetricsReport::write_csv(std::ostream& os) const {
  os << "subject_id,dice,ppv,hd,sen\n";
  auto line = [&os](const MetricsRow& r) {
    os << r.subject << ',' << r.dice << ',' << r.ppv << ',' << r.hd << ',' << r.sen << '\n';
  };
  for (const auto& r : rows) line(r);
  if (!rows.empty()) {
    line(mean());
    line(stddev());
  }
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["subjects"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["subjects"].push_back({{"subject_id", r.subject},
                             {"dice", r.dice},
                             {"ppv", r.ppv},
                             {"hd", r.hd},
                             {"sen", r.sen}});
  if (!rows.empty()) {
    const MetricsRow m = mean(), s = stddev();
    j["mean"] = {{"dice", m.dice}, {"ppv", m.ppv}, {"hd", m.hd}, {"sen", m.sen}};
    j["std"] = {{"dice", s.dice}, {"ppv", s.ppv}, {"hd", s.hd}, {"sen", s.sen}};
  }
  return j.dump(2);
}

}  // namespace sstdunet
