/*
 * Copyright (C) 2026 The mtv-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <limits>

#include "doctest.h"
#include "mtv/errors.hpp"
#include "mtv/gradcheck.hpp"
#include "mtv/ops.hpp"
#include "test_util.hpp"

using namespace mtv;
using test::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

// Plain triple loop over one [m, k] x [k, n] product.
std::vector<double> brute_matmul(const double* a, const double* b, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Reference multi-head attention with explicit loops and long double sums.
std::vector<double> brute_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const std::size_t sq = q.size(-2), sk = k.size(-2), d = q.size(-1), dv = v.size(-1);
  const std::size_t groups = q.numel() / (sq * d);
  const std::size_t hd = d / heads, hv = dv / heads;
  std::vector<double> out(groups * sq * dv, 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    const double* Q = q.data().data() + g * sq * d;
    const double* K = k.data().data() + g * sk * d;
    const double* V = v.data().data() + g * sk * dv;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < sq; ++i) {
        std::vector<long double> s(sk);
        long double mx = -std::numeric_limits<long double>::infinity();
        for (std::size_t j = 0; j < sk; ++j) {
          long double dot = 0;
          for (std::size_t c = 0; c < hd; ++c) dot += (long double)Q[i * d + h * hd + c] * K[j * d + h * hd + c];
          s[j] = dot / std::sqrt((long double)hd);
          mx = std::max(mx, s[j]);
        }
        long double z = 0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t c = 0; c < hv; ++c) {
          long double acc = 0;
          for (std::size_t j = 0; j < sk; ++j) acc += s[j] / z * V[j * dv + h * hv + c];
          out[(g * sq + i) * dv + h * hv + c] = static_cast<double>(acc);
        }
      }
    }
  }
  return out;
}

void check_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  auto r = finite_diff_check(f, x);
  INFO("worst index " << r.worst_index << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.max_error < kGradTol);
}

}  // namespace

TEST_CASE("tensor construction and accessors") {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.size(-1) == 3);
  CHECK(t.at({1, 2}) == 6.0);
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK_THROWS_AS(t.size(2), DimensionError);

  Tensor alias = t;
  alias.mutable_data()[0] = 10.0;
  CHECK(t.data()[0] == 10.0);
  Tensor copy = t.clone();
  copy.mutable_data()[0] = -1.0;
  CHECK(t.data()[0] == 10.0);
}

TEST_CASE("matmul matches a brute-force triple loop") {
  SUBCASE("plain 2-D") {
    Tensor a = random_tensor({5, 7}, 1), b = random_tensor({7, 4}, 2);
    auto ref = brute_matmul(a.data().data(), b.data().data(), 5, 7, 4);
    Tensor c = ops::matmul(a, b);
    REQUIRE(c.shape() == Shape{5, 4});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(c.data()[i] == doctest::Approx(ref[i]).epsilon(1e-13));
  }
  SUBCASE("batched operands") {
    Tensor a = random_tensor({2, 3, 4, 5}, 3), b = random_tensor({2, 3, 5, 6}, 4);
    Tensor c = ops::matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 3, 4, 6});
    for (std::size_t g = 0; g < 6; ++g) {
      auto ref = brute_matmul(a.data().data() + g * 20, b.data().data() + g * 30, 4, 5, 6);
      for (std::size_t i = 0; i < 24; ++i) CHECK(c.data()[g * 24 + i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
  }
  SUBCASE("shared right operand") {
    Tensor a = random_tensor({3, 4, 5}, 5), w = random_tensor({5, 2}, 6);
    Tensor c = ops::matmul(a, w);
    for (std::size_t g = 0; g < 3; ++g) {
      auto ref = brute_matmul(a.data().data() + g * 20, w.data().data(), 4, 5, 2);
      for (std::size_t i = 0; i < 8; ++i) CHECK(c.data()[g * 8 + i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(ops::matmul(random_tensor({2, 3}, 1), random_tensor({4, 2}, 2)), DimensionError);
  CHECK_THROWS_AS(ops::matmul(random_tensor({3}, 1), random_tensor({3, 2}, 2)), DimensionError);
}

TEST_CASE("softmax is normalised, positive and matches an extended-precision oracle") {
  Tensor x = random_tensor({6, 9}, 7, 3.0);
  Tensor s = ops::softmax(x, -1);
  for (std::size_t r = 0; r < 6; ++r) {
    long double mx = -1e300L, z = 0;
    for (std::size_t c = 0; c < 9; ++c) mx = std::max<long double>(mx, x.data()[r * 9 + c]);
    for (std::size_t c = 0; c < 9; ++c) z += std::exp((long double)x.data()[r * 9 + c] - mx);
    double row = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      const double v = s.data()[r * 9 + c];
      const double ref = static_cast<double>(std::exp((long double)x.data()[r * 9 + c] - mx) / z);
      CHECK(v > 0.0);
      CHECK(std::abs(v - ref) < 1e-15);
      row += v;
    }
    CHECK(std::abs(row - 1.0) < 1e-12);
  }

  // Large logits stay finite thanks to max subtraction.
  Tensor big = Tensor::from_data({1, 3}, {1000.0, 999.0, -1000.0});
  Tensor sb = ops::softmax(big, 1);
  ops::check_finite(sb, "softmax");
  CHECK(sb.data()[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

  // Softmax along a middle axis.
  Tensor y = random_tensor({2, 3, 4}, 8);
  Tensor sm = ops::softmax(y, 1);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t c = 0; c < 4; ++c) {
      double col = 0;
      for (std::size_t b = 0; b < 3; ++b) col += sm.at({a, b, c});
      CHECK(std::abs(col - 1.0) < 1e-12);
    }

  Tensor ls = ops::log_softmax(x, -1);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(ls.data()[i] == doctest::Approx(std::log(s.data()[i])).epsilon(1e-12));
}

TEST_CASE("layer norm statistics and affine terms") {
  Tensor x = random_tensor({4, 10}, 9, 5.0);
  Tensor ones = Tensor::full({10}, 1.0), zeros = Tensor::zeros({10});
  Tensor y = ops::layer_norm(x, ones, zeros);
  for (std::size_t r = 0; r < 4; ++r) {
    long double mu = 0, var = 0;
    for (std::size_t c = 0; c < 10; ++c) mu += x.data()[r * 10 + c];
    mu /= 10;
    for (std::size_t c = 0; c < 10; ++c) var += (x.data()[r * 10 + c] - mu) * (x.data()[r * 10 + c] - mu);
    var /= 10;
    double ymu = 0, yvar = 0;
    for (std::size_t c = 0; c < 10; ++c) {
      const double ref = static_cast<double>((x.data()[r * 10 + c] - mu) / std::sqrt(var + 1e-6L));
      CHECK(y.data()[r * 10 + c] == doctest::Approx(ref).epsilon(1e-12));
      ymu += y.data()[r * 10 + c];
    }
    ymu /= 10;
    for (std::size_t c = 0; c < 10; ++c) yvar += (y.data()[r * 10 + c] - ymu) * (y.data()[r * 10 + c] - ymu);
    CHECK(std::abs(ymu) < 1e-12);
    CHECK(yvar / 10 == doctest::Approx(1.0).epsilon(1e-6));
  }
  Tensor g = random_tensor({10}, 10), b = random_tensor({10}, 11);
  Tensor z = ops::layer_norm(x, g, b);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    CHECK(z.data()[i] == doctest::Approx(y.data()[i] * g.data()[i % 10] + b.data()[i % 10]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ops::layer_norm(x, Tensor::full({9}, 1.0), Tensor::zeros({9})), DimensionError);
}

TEST_CASE("gelu is the exact erf form") {
  Tensor x = Tensor::from_data({7}, {-4.0, -1.5, -0.3, 0.0, 0.2, 1.0, 3.5});
  Tensor y = ops::gelu(x);
  for (std::size_t i = 0; i < 7; ++i) {
    const double v = x.data()[i];
    CHECK(y.data()[i] == doctest::Approx(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)))).epsilon(1e-15));
  }
}

TEST_CASE("cross entropy against a hand computation") {
  Tensor logits = Tensor::from_data({2, 3}, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  std::vector<int> labels{1, 0};
  auto nll = [&](std::size_t r, std::size_t c) {
    double z = 0;
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(logits.data()[r * 3 + j]);
    return -(logits.data()[r * 3 + c] - std::log(z));
  };
  const double plain = 0.5 * (nll(0, 1) + nll(1, 0));
  CHECK(ops::cross_entropy(logits, labels).item() == doctest::Approx(plain).epsilon(1e-14));
  CHECK(ops::cross_entropy(logits, labels, 0.0).item() == ops::cross_entropy(logits, labels).item());

  const double eps = 0.2;
  double smooth = 0;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double target = (static_cast<int>(c) == labels[r] ? 1.0 - eps : 0.0) + eps / 3.0;
      smooth += target * nll(r, c);
    }
  }
  CHECK(ops::cross_entropy(logits, labels, eps).item() == doctest::Approx(smooth / 2).epsilon(1e-14));
  std::vector<int> bad{3, 0};
  CHECK_THROWS_AS(ops::cross_entropy(logits, bad), ContractError);
  CHECK_THROWS_AS(ops::cross_entropy(logits, labels, 1.0), ConfigError);
}

TEST_CASE("attention matches a per-head loop oracle") {
  Tensor q = random_tensor({2, 3, 5, 8}, 12), k = random_tensor({2, 3, 7, 8}, 13), v = random_tensor({2, 3, 7, 4}, 14);
  Tensor out = ops::attention(q, k, v, 2);
  REQUIRE(out.shape() == Shape{2, 3, 5, 4});
  auto ref = brute_attention(q, k, v, 2);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out.data()[i] - ref[i]) < 1e-13);

  Tensor w = ops::attention_weights(q, k, 2);
  REQUIRE(w.shape() == Shape{2, 3, 2, 5, 7});
  for (std::size_t row = 0; row < w.numel() / 7; ++row) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += w.data()[row * 7 + j];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(ops::attention(q, k, v, 3), ConfigError);
}

TEST_CASE("shape ops") {
  Tensor x = Tensor::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
  Tensor t = ops::transpose(x, 0, 1);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at({2, 1}) == 5.0);
  Tensor s = ops::slice(x, 1, 1, 3);
  CHECK(s.shape() == Shape{2, 2});
  CHECK(s.at({1, 0}) == 4.0);
  Tensor c = ops::concat({x, s}, 1);
  CHECK(c.shape() == Shape{2, 5});
  CHECK(c.at({1, 4}) == 5.0);
  Tensor e = ops::expand(Tensor::from_data({2}, {7, 8}), {3});
  CHECK(e.shape() == Shape{3, 2});
  CHECK(e.at({2, 1}) == 8.0);
  Tensor m = ops::mean(x, 0);
  CHECK(m.shape() == Shape{3});
  CHECK(m.at({2}) == 3.5);
  CHECK(ops::sum(x).item() == 15.0);
  CHECK(ops::mean(x).item() == 2.5);
  CHECK_THROWS_AS(ops::reshape(x, {4}), DimensionError);
  CHECK_THROWS_AS(ops::slice(x, 1, 2, 4), DimensionError);
  CHECK_THROWS_AS(ops::add(x, Tensor::zeros({2})), DimensionError);
  // A suffix shape broadcasts over leading dimensions.
  Tensor bias = Tensor::from_data({3}, {10, 20, 30});
  CHECK(ops::add(x, bias).at({1, 2}) == 35.0);
}

TEST_CASE("tape mechanics") {
  SUBCASE("gradient accumulates over repeated use") {
    Tensor a = Tensor::from_data({3}, {1, 2, 3}, true);
    {
      TapeScope scope;
      backward(ops::sum(ops::mul(a, a)));
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.grad()[i] == 2.0 * a.data()[i]);
    {
      TapeScope scope;
      backward(ops::sum(a));
    }
    CHECK(a.grad()[0] == 3.0);
    a.zero_grad();
    CHECK_FALSE(a.has_grad());
  }
  SUBCASE("no-grad guard records nothing") {
    Tensor a = Tensor::from_data({2}, {1, 2}, true);
    const std::size_t before = Tape::active().size();
    {
      NoGradGuard guard;
      CHECK_FALSE(grad_enabled());
      Tensor y = ops::mul(a, a);
      CHECK_FALSE(y.requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(Tape::active().size() == before);
  }
  SUBCASE("scope clears unfinished passes") {
    Tensor a = Tensor::from_data({2}, {1, 2}, true);
    {
      TapeScope scope;
      ops::mul(a, a);
      CHECK(Tape::active().size() > 0);
    }
    CHECK(Tape::active().size() == 0);
  }
  SUBCASE("backward needs a scalar") {
    Tensor a = Tensor::from_data({2}, {1, 2}, true);
    TapeScope scope;
    CHECK_THROWS_AS(backward(ops::mul(a, a)), ContractError);
  }
  SUBCASE("non-finite values are reported") {
    Tensor a = Tensor::from_data({2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(ops::check_finite(a, "a"), NumericError);
  }
}

TEST_CASE("finite-difference checks of every op") {
  const Tensor x = random_tensor({3, 4}, 20);
  const Tensor w = random_tensor({4, 5}, 21);
  const Tensor other = random_tensor({3, 4}, 22);
  const Tensor weights = random_tensor({3, 4}, 23);  // breaks symmetry of plain sums
  auto weighted = [&](const Tensor& y) { return ops::sum(ops::mul(y, weights)); };

  SUBCASE("matmul") {
    check_grad([&](const Tensor& a) { return ops::sum(ops::matmul(a, w)); }, x);
    check_grad([&](const Tensor& b) { return ops::sum(ops::mul(ops::matmul(x, b), random_tensor({3, 5}, 30))); }, w);
    Tensor batched = random_tensor({2, 3, 4}, 31);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::matmul(a, w), random_tensor({2, 3, 5}, 32))); },
               batched);
  }
  SUBCASE("elementwise") {
    check_grad([&](const Tensor& a) { return weighted(ops::add(a, other)); }, x);
    check_grad([&](const Tensor& a) { return weighted(ops::sub(other, a)); }, x);
    check_grad([&](const Tensor& a) { return weighted(ops::mul(a, a)); }, x);
    check_grad([&](const Tensor& a) { return weighted(ops::scale(a, -2.5)); }, x);
    check_grad([&](const Tensor& b) { return weighted(ops::add(other, b)); }, random_tensor({4}, 33));
    check_grad([&](const Tensor& b) { return weighted(ops::mul(other, b)); }, random_tensor({4}, 34));
  }
  SUBCASE("reductions") {
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(a, a)); }, x);
    check_grad([&](const Tensor& a) { return ops::mean(ops::mul(a, a)); }, x);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::mean(a, 0), random_tensor({4}, 35))); }, x);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::mean(a, 1), random_tensor({3}, 36))); }, x);
  }
  SUBCASE("softmax family") {
    check_grad([&](const Tensor& a) { return weighted(ops::softmax(a, -1)); }, x);
    check_grad([&](const Tensor& a) { return weighted(ops::softmax(a, 0)); }, x);
    check_grad([&](const Tensor& a) { return weighted(ops::log_softmax(a, -1)); }, x);
  }
  SUBCASE("layer norm") {
    const Tensor g = random_tensor({4}, 37), b = random_tensor({4}, 38);
    check_grad([&](const Tensor& a) { return weighted(ops::layer_norm(a, g, b)); }, x);
    check_grad([&](const Tensor& gg) { return weighted(ops::layer_norm(x, gg, b)); }, g);
    check_grad([&](const Tensor& bb) { return weighted(ops::layer_norm(x, g, bb)); }, b);
  }
  SUBCASE("gelu") { check_grad([&](const Tensor& a) { return weighted(ops::gelu(a)); }, x); }
  SUBCASE("shape ops") {
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::concat({a, other}, 0), random_tensor({6, 4}, 39))); },
               x);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::slice(a, 1, 1, 3), random_tensor({3, 2}, 40))); },
               x);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::reshape(a, {2, 6}), random_tensor({2, 6}, 41))); },
               x);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::transpose(a, 0, 1), random_tensor({4, 3}, 42))); },
               x);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::expand(a, {2}), random_tensor({2, 3, 4}, 43))); },
               x);
  }
  SUBCASE("linear") {
    const Tensor b = random_tensor({5}, 44);
    const Tensor probe = random_tensor({3, 5}, 45);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::linear(a, w, b), probe)); }, x);
    check_grad([&](const Tensor& ww) { return ops::sum(ops::mul(ops::linear(x, ww, b), probe)); }, w);
    check_grad([&](const Tensor& bb) { return ops::sum(ops::mul(ops::linear(x, w, bb), probe)); }, b);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::linear(a, w, Tensor()), probe)); }, x);
  }
  SUBCASE("cross entropy") {
    std::vector<int> labels{0, 3, 2};
    check_grad([&](const Tensor& a) { return ops::cross_entropy(a, labels); }, x);
    check_grad([&](const Tensor& a) { return ops::cross_entropy(a, labels, 0.2); }, x);
  }
  SUBCASE("attention") {
    const Tensor q = random_tensor({2, 4, 6}, 46), k = random_tensor({2, 5, 6}, 47), v = random_tensor({2, 5, 4}, 48);
    const Tensor probe = random_tensor({2, 4, 4}, 49);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::attention(a, k, v, 2), probe)); }, q);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::attention(q, a, v, 2), probe)); }, k);
    check_grad([&](const Tensor& a) { return ops::sum(ops::mul(ops::attention(q, k, a, 2), probe)); }, v);
  }
  SUBCASE("randomly wired composite") {
    // Three ops drawn from the pool, wired by a seeded generator.
    std::mt19937_64 rng(2026);
    const std::vector<std::function<Tensor(const Tensor&)>> pool = {
        [](const Tensor& a) { return ops::gelu(a); },
        [](const Tensor& a) { return ops::softmax(a, -1); },
        [&](const Tensor& a) { return ops::mul(a, other); },
        [](const Tensor& a) { return ops::layer_norm(a, Tensor::full({4}, 1.5), Tensor::full({4}, 0.1)); },
        [](const Tensor& a) { return ops::scale(ops::transpose(ops::transpose(a, 0, 1), 0, 1), 0.7); },
    };
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t i = rng() % pool.size(), j = rng() % pool.size(), k = rng() % pool.size();
      INFO("composite " << i << "," << j << "," << k);
      check_grad([&](const Tensor& a) { return weighted(pool[k](pool[j](pool[i](a)))); }, x);
    }
  }
}

TEST_CASE("multi-input gradcheck reports the worst coordinate") {
  Tensor a = random_tensor({3}, 50, 1.0, true);
  Tensor b = random_tensor({3}, 51, 1.0, true);
  auto r = finite_diff_check([&] { return ops::sum(ops::mul(a, b)); }, {{"a", a}, {"b", b}});
  CHECK(r.max_error < kGradTol);
  CHECK(r.coordinates_checked == 6);
  Tensor frozen = random_tensor({3}, 52);
  CHECK_THROWS_AS(finite_diff_check([&] { return ops::sum(frozen); }, {{"frozen", frozen}}), ContractError);
}
