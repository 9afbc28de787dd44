#include <doctest.h>

#include <random>

#include "sstdunet/conv.hpp"
#include "sstdunet/gradcheck.hpp"
#include "sstdunet/tensor.hpp"

using namespace sstdunet;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint32_t seed, double lo = -2.0,
                               double hi = 2.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Naive triple-loop matmul oracle.
std::vector<double> matmul_ref(const std::vector<double>& a, const std::vector<double>& b,
                               std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Seven-loop conv3d oracle (stride 1, no padding).
std::vector<double> conv3d_ref(const std::vector<double>& x, const std::vector<double>& w,
                               double bias, std::size_t D, std::size_t H, std::size_t W,
                               std::size_t k) {
  const std::size_t OD = D - k + 1, OH = H - k + 1, OW = W - k + 1;
  std::vector<double> out(OD * OH * OW, bias);
  for (std::size_t od = 0; od < OD; ++od)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow)
        for (std::size_t zk = 0; zk < k; ++zk)
          for (std::size_t yk = 0; yk < k; ++yk)
            for (std::size_t xk = 0; xk < k; ++xk)
              out[(od * OH + oh) * OW + ow] +=
                  w[(zk * k + yk) * k + xk] * x[((od + zk) * H + oh + yk) * W + ow + xk];
  return out;
}

}  // namespace

TEST_CASE("matmul identity and zero") {
  auto b = Tensor<double>::from_data({3, 3}, random_vec(9, 1));
  auto eye = Tensor<double>::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto prod = matmul(eye, b);
  for (std::size_t i = 0; i < 9; ++i) CHECK(prod[i] == doctest::Approx(b[i]).epsilon(1e-12));

  auto a = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto z = Tensor<double>::from_data({2, 2}, {0, 0, 0, 0});
  auto azero = matmul(a, z);
  for (std::size_t i = 0; i < 4; ++i) CHECK(azero[i] == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  const std::size_t m = 4, k = 5, n = 3;
  auto av = random_vec(m * k, 2);
  auto bv = random_vec(k * n, 3);
  auto c = matmul(Tensor<double>::from_data({m, k}, av), Tensor<double>::from_data({k, n}, bv));
  auto ref = matmul_ref(av, bv, m, k, n);
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-6));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor<double>(Shape{2, 3});
  auto b = Tensor<double>(Shape{4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2,3]"), ShapeError);
}

TEST_CASE("batched matmul broadcasts batch dims") {
  auto a = Tensor<double>::from_data({2, 1, 2, 3}, random_vec(12, 7));
  auto b = Tensor<double>::from_data({3, 4}, random_vec(12, 8));
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1, 2, 4});
  // each batch slice equals its own 2D product
  for (std::size_t bi = 0; bi < 2; ++bi) {
    std::vector<double> as(a.data().begin() + bi * 6, a.data().begin() + (bi + 1) * 6);
    auto ref = matmul_ref(as, b.data(), 2, 3, 4);
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(c[bi * 8 + i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax basics") {
  auto y = softmax(Tensor<double>::from_data({2}, {0.0, 0.0}), 0);
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));

  const double ninf = -std::numeric_limits<double>::infinity();
  auto y2 = softmax(Tensor<double>::from_data({2}, {3.7, ninf}), 0);
  CHECK(y2[0] == 1.0);
  CHECK(y2[1] == 0.0);

  auto y3 = softmax(Tensor<double>::from_data({3}, {1.0, 2.0, 3.0}), 0);
  double z = std::exp(1.0 - 3.0) + std::exp(2.0 - 3.0) + std::exp(0.0);
  CHECK(y3[0] == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-12));
  CHECK(y3[1] == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-12));
  CHECK(y3[2] == doctest::Approx(std::exp(0.0) / z).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(Tensor<double>::from_data({2}, {ninf, ninf}), 0),
                  DegenerateMaskError);
}

TEST_CASE("softmax slices sum to one and shift-invariant") {
  auto v = random_vec(4 * 6, 11);
  auto x = Tensor<double>::from_data({4, 6}, v);
  auto y = softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += y[r * 6 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (auto& e : v) e += 3.25;
  auto y2 = softmax(Tensor<double>::from_data({4, 6}, v), 1);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y2[i] == doctest::Approx(y[i]).epsilon(1e-9));
}

TEST_CASE("layer_norm constant input and gamma=0") {
  auto x = Tensor<double>::from_data({2, 4}, std::vector<double>(8, 3.0));
  auto g1 = Tensor<double>::from_data({4}, std::vector<double>(4, 1.0));
  auto b0 = Tensor<double>::from_data({4}, std::vector<double>(4, 0.0));
  auto y = layer_norm(x, g1, b0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(0.0));

  auto g0 = Tensor<double>::from_data({4}, std::vector<double>(4, 0.0));
  auto bb = Tensor<double>::from_data({4}, {1.0, 2.0, 3.0, 4.0});
  auto y2 = layer_norm(Tensor<double>::from_data({2, 4}, random_vec(8, 5)), g0, bb);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 4; ++j) CHECK(y2[r * 4 + j] == doctest::Approx(bb[j]));
}

TEST_CASE("layer_norm matches two-pass reference") {
  auto v = random_vec(3 * 5, 6);
  auto gv = random_vec(5, 7, 0.5, 1.5);
  auto bv = random_vec(5, 8, -0.5, 0.5);
  const double eps = 1e-5;
  auto y = layer_norm(Tensor<double>::from_data({3, 5}, v),
                      Tensor<double>::from_data({5}, gv), Tensor<double>::from_data({5}, bv),
                      eps);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < 5; ++j) mu += v[r * 5 + j];
    mu /= 5;
    for (std::size_t j = 0; j < 5; ++j) var += (v[r * 5 + j] - mu) * (v[r * 5 + j] - mu);
    var /= 5;
    for (std::size_t j = 0; j < 5; ++j) {
      double ref = gv[j] * (v[r * 5 + j] - mu) / std::sqrt(var + eps) + bv[j];
      CHECK(y[r * 5 + j] == doctest::Approx(ref).epsilon(1e-5));
    }
  }
}

TEST_CASE("activations closed forms") {
  auto s = sigmoid(Tensor<double>::scalar(0.0));
  CHECK(s.item() == doctest::Approx(0.5));
  auto l = leaky_relu(Tensor<double>::scalar(-1.0), 0.01);
  CHECK(l.item() == doctest::Approx(-0.01));
  for (double xv : {-2.0, 0.0, 3.0}) {
    auto g = gelu(Tensor<double>::scalar(xv));
    const double ref = 0.5 * xv * (1.0 + std::erf(xv / std::sqrt(2.0)));
    CHECK(g.item() == doctest::Approx(ref).epsilon(1e-6));
  }
}

TEST_CASE("conv3d identity, constant-bias, and loop oracle") {
  // 1x1x1 kernel of value 1 is the identity
  auto x = Tensor<double>::from_data({1, 1, 2, 2, 2}, random_vec(8, 9));
  auto w1 = Tensor<double>::from_data({1, 1, 1, 1, 1}, {1.0});
  auto b0 = Tensor<double>::from_data({1}, {0.0});
  auto y = conv3d(x, w1, b0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == x[i]);

  // zero weights + bias -> constant
  auto wz = Tensor<double>::from_data({1, 1, 3, 3, 3}, std::vector<double>(27, 0.0));
  auto bc = Tensor<double>::from_data({1}, {2.5});
  auto x4 = Tensor<double>::from_data({1, 1, 4, 4, 4}, random_vec(64, 10));
  auto y2 = conv3d(x4, wz, bc, 1, 1);
  CHECK(y2.shape() == Shape{1, 1, 4, 4, 4});
  for (std::size_t i = 0; i < 64; ++i) CHECK(y2[i] == 2.5);

  // random case vs 7-loop oracle
  auto xv = random_vec(64, 11);
  auto wv = random_vec(27, 12);
  auto y3 = conv3d(Tensor<double>::from_data({1, 1, 4, 4, 4}, xv),
                   Tensor<double>::from_data({1, 1, 3, 3, 3}, wv),
                   Tensor<double>::from_data({1}, {0.3}));
  auto ref = conv3d_ref(xv, wv, 0.3, 4, 4, 4, 3);
  CHECK(y3.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(y3[i] == doctest::Approx(ref[i]).epsilon(1e-5));

  CHECK_THROWS_AS(conv3d(Tensor<double>(Shape{1, 1, 2, 2, 2}),
                         Tensor<double>(Shape{1, 1, 3, 3, 3}), Tensor<double>(Shape{1})),
                  ShapeError);
}

TEST_CASE("conv_transpose3d shape, bias, adjoint pair") {
  auto x = Tensor<double>::from_data({1, 1, 2, 2, 2}, random_vec(8, 13));
  auto w = Tensor<double>::from_data({1, 1, 2, 2, 2}, random_vec(8, 14));
  auto b = Tensor<double>::from_data({1}, {0.0});
  auto y = conv_transpose3d(x, w, b, 2);
  CHECK(y.shape() == Shape{1, 1, 4, 4, 4});

  auto wz = Tensor<double>::from_data({1, 1, 2, 2, 2}, std::vector<double>(8, 0.0));
  auto bc = Tensor<double>::from_data({1}, {-1.5});
  auto yc = conv_transpose3d(x, wz, bc, 2);
  for (std::size_t i = 0; i < yc.size(); ++i) CHECK(yc[i] == -1.5);

  // forward(conv_transpose) equals the input-gradient of conv3d with the same
  // kernel geometry: backprop a conv3d whose output grad is x.
  auto big = Tensor<double>::from_data({1, 1, 4, 4, 4}, random_vec(64, 15), true);
  auto wc = Tensor<double>::from_data({1, 1, 2, 2, 2}, w.data());
  auto z = conv3d(big, wc, b, 2, 0);  // output 2x2x2
  auto loss = sum(mul(z, Tensor<double>::from_data({1, 1, 2, 2, 2}, x.data())));
  loss.backward();
  const auto& dx = big.grad();
  for (std::size_t i = 0; i < 64; ++i) CHECK(y[i] == doctest::Approx(dx[i]).epsilon(1e-10));
}

TEST_CASE("maxpool3d basics and oracle") {
  auto c = Tensor<double>::from_data({1, 1, 4, 4, 4}, std::vector<double>(64, 0.7));
  auto y = maxpool3d(c);
  CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == 0.7);

  std::vector<double> spike(64, 0.0);
  spike[(1 * 4 + 1) * 4 + 1] = 5.0;
  auto ys = maxpool3d(Tensor<double>::from_data({1, 1, 4, 4, 4}, spike));
  CHECK(ys[0] == 5.0);

  auto v = random_vec(8 * 8 * 8, 16);
  auto yr = maxpool3d(Tensor<double>::from_data({1, 1, 8, 8, 8}, v));
  for (std::size_t od = 0; od < 4; ++od)
    for (std::size_t oh = 0; oh < 4; ++oh)
      for (std::size_t ow = 0; ow < 4; ++ow) {
        double best = -1e300;
        for (std::size_t zk = 0; zk < 2; ++zk)
          for (std::size_t yk = 0; yk < 2; ++yk)
            for (std::size_t xk = 0; xk < 2; ++xk)
              best = std::max(best,
                              v[((od * 2 + zk) * 8 + oh * 2 + yk) * 8 + ow * 2 + xk]);
        CHECK(yr[(od * 4 + oh) * 4 + ow] == best);
      }

  CHECK_THROWS_AS(maxpool3d(Tensor<double>(Shape{1, 1, 3, 4, 4})), ShapeError);
}

TEST_CASE("backward closed forms") {
  auto x = Tensor<double>::from_data({4}, random_vec(4, 17), true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  auto x2 = Tensor<double>::from_data({4}, random_vec(4, 18), true);
  sum(mul(x2, x2)).backward();
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(x2.grad()[i] == doctest::Approx(2.0 * x2[i]).epsilon(1e-12));
}

TEST_CASE("backward on non-scalar is a contract error") {
  auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(x.backward(), ContractError);
}

TEST_CASE("grad accumulates across backward calls") {
  auto x = Tensor<double>::from_data({3}, {1.0, 2.0, 3.0}, true);
  auto l = sum(x);
  l.backward();
  l.backward();
  for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("finite differences: elementwise and composite ops") {
  using F = std::function<Tensor<double>(const Tensor<double>&)>;
  std::vector<std::pair<const char*, F>> cases = {
      {"sum", [](const Tensor<double>& x) { return sum(x); }},
      {"mean-sigmoid", [](const Tensor<double>& x) { return mean(sigmoid(x)); }},
      {"gelu", [](const Tensor<double>& x) { return sum(gelu(x)); }},
      {"leaky", [](const Tensor<double>& x) { return sum(leaky_relu(x, 0.01)); }},
      {"log-clamp",
       [](const Tensor<double>& x) { return sum(log(clamp(sigmoid(x), 1e-7, 1.0 - 1e-7))); }},
      {"pow2", [](const Tensor<double>& x) { return sum(pow_const(add_scalar(x, 3.0), 2.0)); }},
      {"softmax",
       [](const Tensor<double>& x) {
         auto y = softmax(x, 0);
         return sum(mul(y, y));
       }},
      {"broadcast",
       [](const Tensor<double>& x) {
         auto w = Tensor<double>::from_data({1}, {1.7});
         return sum(mul(x, add(x, w)));
       }},
  };
  for (auto& [name, f] : cases) {
    CAPTURE(name);
    auto rep = finite_diff_check<double>(f, Tensor<double>::from_data({6}, random_vec(6, 21)));
    CHECK_MESSAGE(rep.max_rel_error < 1e-4, name, " err=", rep.max_rel_error);
  }
}

TEST_CASE("finite differences: matmul, layer_norm, conv, pooling, transpose") {
  auto a = Tensor<double>::from_data({2, 3}, random_vec(6, 22));
  auto b = Tensor<double>::from_data({3, 2}, random_vec(6, 23));
  auto rep = check_gradients<double>([&] { return sum(mul(matmul(a, b), matmul(a, b))); },
                                     {a, b});
  CHECK(rep.max_rel_error < 1e-4);

  auto x = Tensor<double>::from_data({2, 4}, random_vec(8, 24));
  auto g = Tensor<double>::from_data({4}, random_vec(4, 25, 0.5, 1.5));
  auto be = Tensor<double>::from_data({4}, random_vec(4, 26, -0.5, 0.5));
  rep = check_gradients<double>([&] { return sum(mul(layer_norm(x, g, be), layer_norm(x, g, be))); },
                                {x, g, be});
  CHECK(rep.max_rel_error < 1e-4);

  auto cx = Tensor<double>::from_data({1, 2, 4, 4, 4}, random_vec(128, 27));
  auto cw = Tensor<double>::from_data({2, 2, 3, 3, 3}, random_vec(108, 28, -0.5, 0.5));
  auto cb = Tensor<double>::from_data({2}, random_vec(2, 29));
  rep = check_gradients<double>(
      [&] {
        auto y = conv3d(cx, cw, cb, 1, 1);
        return sum(mul(y, y));
      },
      {cx, cw, cb}, 1e-5, 40);
  CHECK(rep.max_rel_error < 1e-4);

  auto tw = Tensor<double>::from_data({2, 2, 2, 2, 2}, random_vec(32, 30, -0.5, 0.5));
  rep = check_gradients<double>(
      [&] {
        auto y = conv_transpose3d(cx, tw, cb, 2);
        return mean(mul(y, y));
      },
      {cx, tw, cb}, 1e-5, 40);
  CHECK(rep.max_rel_error < 1e-4);

  rep = check_gradients<double>(
      [&] {
        auto y = maxpool3d(cx);
        return sum(mul(y, y));
      },
      {cx}, 1e-5, 40);
  CHECK(rep.max_rel_error < 1e-4);

  auto tx = Tensor<double>::from_data({2, 3, 4}, random_vec(24, 31));
  rep = check_gradients<double>(
      [&] {
        auto y = transpose(tx, {2, 0, 1});
        return sum(mul(y, y));
      },
      {tx});
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("finite_diff_check on sum is exact") {
  auto rep = finite_diff_check<double>(
      [](const Tensor<double>& x) { return sum(x); },
      Tensor<double>::from_data({5}, random_vec(5, 33)));
  CHECK(rep.max_rel_error < 1e-10);
}

TEST_CASE("replaying the same graph is deterministic") {
  auto v = random_vec(32, 34);
  auto run = [&] {
    auto x = Tensor<double>::from_data({2, 16}, v, true);
    auto w = Tensor<double>::from_data({16, 4}, random_vec(64, 35));
    auto y = sum(sigmoid(matmul(x, w)));
    y.backward();
    return std::make_pair(y.item(), x.grad());
  };
  auto [y1, g1] = run();
  auto [y2, g2] = run();
  CHECK(y1 == y2);
  CHECK(g1 == g2);
}

TEST_CASE("concat and gather round trips") {
  auto a = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<double>::from_data({2, 3}, {5, 6, 7, 8, 9, 10});
  auto c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 5});
  std::vector<double> want{1, 2, 5, 6, 7, 3, 4, 8, 9, 10};
  CHECK(c.data() == want);

  auto idx = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{3, 0, 1});
  auto g = gather(a, idx, Shape{3});
  CHECK(g.data() == std::vector<double>{4, 1, 2});

  auto rep = check_gradients<double>(
      [&] {
        auto cc = concat<double>({a, b}, 1);
        return sum(mul(cc, cc));
      },
      {a, b});
  CHECK(rep.max_rel_error < 1e-6);
}
