#include <cmath>
#include <random>

#include "cbie/chebyshev.hpp"
#include "doctest.h"

using namespace cbie;

namespace {

Table2D<Complex> sample(const ChebGrid& g, auto f) {
  Table2D<Complex> s(g.n_u, g.n_v);
  for (int j = 0; j < g.n_v; ++j)
    for (int i = 0; i < g.n_u; ++i) s(i, j) = f(g.nodes_u[i], g.nodes_v[j]);
  return s;
}

double exact_monomial(int a) { return a % 2 ? 0.0 : 2.0 / (a + 1); }

}  // namespace

TEST_CASE("nodes and weights for small Q") {
  auto r1 = cheb_nodes_weights(1);
  CHECK(r1.nodes.size() == 1);
  CHECK(std::abs(r1.nodes[0]) < 1e-15);
  CHECK(r1.weights[0] == doctest::Approx(2.0).epsilon(1e-14));

  auto r2 = cheb_nodes_weights(2);
  CHECK(r2.nodes[0] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
  CHECK(r2.nodes[1] == doctest::Approx(-std::sqrt(2.0) / 2).epsilon(1e-15));
  CHECK(r2.weights[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r2.weights[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("weights are positive and sum to two") {
  for (int q = 1; q <= 64; ++q) {
    auto r = cheb_nodes_weights(q);
    double sum = 0;
    for (double w : r.weights) {
      CHECK(w > 0);
      sum += w;
    }
    CHECK(std::abs(sum - 2.0) < 1e-14);
    for (int j = 0; j < q; ++j) CHECK(std::abs(r.nodes[j] - std::cos(kPi * (2 * j + 1) / (2.0 * q))) < 1e-15);
  }
}

TEST_CASE("fejer integrate examples") {
  ChebGrid g(8, 8);
  CHECK(std::abs(fejer_integrate_2d(sample(g, [](double, double) { return Complex(1); }), g) - 4.0) < 1e-13);
  CHECK(std::abs(fejer_integrate_2d(sample(g, [](double u, double) { return Complex(u); }), g)) < 1e-14);
  auto s = sample(g, [](double u, double v) { return Complex(u * u * std::pow(v, 4)); });
  CHECK(std::abs(fejer_integrate_2d(s, g) - 4.0 / 15.0) < 1e-13);
  ChebGrid other(7, 8);
  CHECK_THROWS_AS(fejer_integrate_2d(s, other), ShapeMismatch);
}

TEST_CASE("fejer rule is exact below degree Q") {
  for (int q : {4, 8, 12}) {
    ChebGrid g(q, q);
    for (int a = 0; a < q; ++a)
      for (int b = 0; a + b < q; ++b) {
        auto s = sample(g, [&](double u, double v) { return Complex(std::pow(u, a) * std::pow(v, b)); });
        CHECK(std::abs(fejer_integrate_2d(s, g) - exact_monomial(a) * exact_monomial(b)) < 1e-13);
      }
  }
}

TEST_CASE("odd Q uses floor(Q/2) and stays exact") {
  for (int q : {3, 5, 9}) {
    ChebGrid g(q, q);
    for (int a = 0; a < q; ++a) {
      auto s = sample(g, [&](double u, double) { return Complex(std::pow(u, a)); });
      CHECK(std::abs(fejer_integrate_2d(s, g) - 2.0 * exact_monomial(a)) < 1e-13);
    }
  }
}

TEST_CASE("coefficient examples") {
  ChebGrid g(8, 8);
  auto a = cheb_coeffs_2d(sample(g, [](double u, double v) { return Complex(chebyshev_t(2, u) * chebyshev_t(3, v)); }), g);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) CHECK(std::abs(a(i, j) - Complex(i == 2 && j == 3 ? 1 : 0)) < 1e-13);
  auto one = cheb_coeffs_2d(sample(g, [](double, double) { return Complex(1); }), g);
  CHECK(std::abs(one(0, 0) - 1.0) < 1e-14);
  auto lin = cheb_coeffs_2d(sample(g, [](double u, double) { return Complex(u); }), g);
  CHECK(std::abs(lin(1, 0) - 1.0) < 1e-14);
  CHECK(std::abs(lin(0, 0)) < 1e-14);
  CHECK_THROWS_AS(cheb_coeffs_2d(Table2D<Complex>(3, 3), g), ShapeMismatch);
}

TEST_CASE("direct and fast transforms agree and round-trip") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto [n, m] : {std::pair{6, 6}, {10, 10}, {7, 12}, {24, 24}}) {
    ChebGrid g(n, m);
    Table2D<Complex> s(n, m);
    for (auto& x : s.values()) x = Complex(d(rng), d(rng));
    auto a = cheb_coeffs_2d(s, g);
    auto b = cheb_coeffs_2d_fast(s, g);
    double scale = 0, diff = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      scale = std::max(scale, std::abs(a[k]));
      diff = std::max(diff, std::abs(a[k] - b[k]));
    }
    CHECK(diff <= 1e-12 * scale);
    auto back = cheb_synthesize(a, g);
    for (std::size_t k = 0; k < s.size(); ++k) CHECK(std::abs(back[k] - s[k]) <= 1e-12 * std::max(1.0, std::abs(s[k])));
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i)
        CHECK(std::abs(cheb_eval_2d(b, g.nodes_u[i], g.nodes_v[j]) - s(i, j)) < 1e-12);
  }
}

TEST_CASE("evaluation examples") {
  Table2D<Complex> a(8, 8);
  a(2, 3) = 1.0;
  CHECK(std::abs(cheb_eval_2d(a, 0.5, -0.25) - (-0.34375)) < 1e-15);
  Table2D<Complex> zero(5, 5);
  CHECK(cheb_eval_2d(zero, 0.3, 0.1) == Complex(0));
  CHECK_THROWS_AS(cheb_eval_2d(a, 1.5, 0.0), DomainError);
}

TEST_CASE("spectral derivative examples") {
  Table2D<Complex> t1(6, 6), t2(6, 6);
  t1(1, 0) = 1.0;
  t2(2, 0) = 1.0;
  auto d1 = cheb_diff(t1, Direction::U);
  auto d2 = cheb_diff(t2, Direction::U);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      CHECK(std::abs(d1(i, j) - Complex(i == 0 && j == 0 ? 1 : 0)) < 1e-15);
      CHECK(std::abs(d2(i, j) - Complex(i == 1 && j == 0 ? 4 : 0)) < 1e-15);
    }
  Table2D<Complex> tv(6, 6);
  tv(0, 2) = 1.0;
  auto dv = cheb_diff(tv, Direction::V);
  CHECK(std::abs(dv(0, 1) - 4.0) < 1e-15);
}

TEST_CASE("spectral derivative matches finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-1, 1);
  ChebGrid g(10, 10);
  auto s = sample(g, [](double u, double v) { return Complex(std::exp(u) * std::sin(2 * v), std::cos(u * v)); });
  auto a = cheb_coeffs_2d(s, g);
  auto au = cheb_diff(a, Direction::U);
  auto av = cheb_diff(a, Direction::V);
  const double h = 1e-5;
  for (int k = 0; k < 50; ++k) {
    const double u = 0.99 * d(rng), v = 0.99 * d(rng);
    const Complex fu = (cheb_eval_2d(a, u + h, v) - cheb_eval_2d(a, u - h, v)) / (2 * h);
    const Complex fv = (cheb_eval_2d(a, u, v + h) - cheb_eval_2d(a, u, v - h)) / (2 * h);
    CHECK(std::abs(cheb_eval_2d(au, u, v) - fu) <= 1e-6 * std::max(1.0, std::abs(fu)));
    CHECK(std::abs(cheb_eval_2d(av, u, v) - fv) <= 1e-6 * std::max(1.0, std::abs(fv)));
  }
}

TEST_CASE("second derivative by composing the recurrence") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    // Random degree-6 polynomial in u times a random cubic in v.
    double c[7], e[4];
    for (double& x : c) x = d(rng);
    for (double& x : e) x = d(rng);
    auto p = [&](double u) { double s = 0; for (int k = 6; k >= 0; --k) s = s * u + c[k]; return s; };
    auto p2 = [&](double u) { double s = 0; for (int k = 6; k >= 2; --k) s = s * u + k * (k - 1) * c[k]; return s; };
    auto q = [&](double v) { return e[0] + v * (e[1] + v * (e[2] + v * e[3])); };
    ChebGrid g(8, 8);
    auto a = cheb_coeffs_2d(sample(g, [&](double u, double v) { return Complex(p(u) * q(v)); }), g);
    auto a2 = cheb_diff(cheb_diff(a, Direction::U), Direction::U);
    for (int k = 0; k < 10; ++k) {
      const double u = d(rng), v = d(rng);
      CHECK(std::abs(cheb_eval_2d(a2, u, v) - p2(u) * q(v)) < 1e-10 * std::max(1.0, std::abs(p2(u) * q(v))));
    }
  }
}

TEST_CASE("nodal differentiation matrix") {
  const int q = 9;
  auto dm = cheb_diff_matrix(q);
  auto r = cheb_nodes_weights(q);
  for (int l = 0; l < q; ++l) {
    double acc = 0;
    for (int k = 0; k < q; ++k) acc += dm[l * q + k] * std::pow(r.nodes[k], 5);
    CHECK(std::abs(acc - 5 * std::pow(r.nodes[l], 4)) < 1e-12);
  }
}
