#pragma once

// Chebyshev first-kind grids, Fejer-I quadrature, tensor-product expansions,
// Clenshaw evaluation and spectral differentiation on [-1,1]^2.

#include <cmath>
#include <span>
#include <vector>

#include "cbie/common.hpp"

namespace cbie {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Chebyshev first-kind nodes x_j = cos(pi (2j+1) / (2Q)) with Fejer-I weights.
/// Odd Q uses the standard upper limit floor(Q/2) in the weight sum.
Rule1D cheb_nodes_weights(int q);

struct ChebGrid {
  int n_u = 0;
  int n_v = 0;
  std::vector<double> nodes_u, nodes_v;
  std::vector<double> weights_u, weights_v;

  ChebGrid() = default;
  ChebGrid(int qu, int qv);
  static ChebGrid square(int q) { return ChebGrid(q, q); }

  std::size_t size() const noexcept { return static_cast<std::size_t>(n_u) * n_v; }
  double weight(int i, int j) const { return weights_u[i] * weights_v[j]; }
};

using ChebCoeffs2D = Table2D<Complex>;

enum class Direction { U, V };

// T_0(x) .. T_{out.size()-1}(x) by the three-term recurrence.
inline void chebyshev_t(double x, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() > 1) out[1] = x;
  for (std::size_t k = 2; k < out.size(); ++k) out[k] = 2.0 * x * out[k - 1] - out[k - 2];
}

inline double chebyshev_t(int k, double x) {
  if (k == 0) return 1.0;
  double t0 = 1.0, t1 = x;
  for (int i = 2; i <= k; ++i) {
    const double t2 = 2.0 * x * t1 - t0;
    t0 = t1;
    t1 = t2;
  }
  return t1;
}

namespace detail {

inline void check_unit_square(double u, double v) {
  if (!(std::abs(u) <= 1.0) || !(std::abs(v) <= 1.0))
    throw DomainError("Chebyshev evaluation outside [-1,1]^2");
}

// Clenshaw recurrence for sum_k c[k * stride] T_k(x).
template <class T>
T clenshaw(const T* c, int n, std::size_t stride, double x) {
  T b1{}, b2{};
  for (int k = n - 1; k >= 1; --k) {
    const T b0 = c[k * stride] + 2.0 * x * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return c[0] + x * b1 - b2;
}

}  // namespace detail

template <class T>
T fejer_integrate_2d(const Table2D<T>& samples, const ChebGrid& grid) {
  if (samples.nu() != grid.n_u || samples.nv() != grid.n_v)
    throw ShapeMismatch("fejer_integrate_2d: samples do not match grid");
  T acc{};
  for (int j = 0; j < grid.n_v; ++j) {
    T row{};
    for (int i = 0; i < grid.n_u; ++i) row += samples(i, j) * grid.weights_u[i];
    acc += row * grid.weights_v[j];
  }
  return acc;
}

/// Expansion coefficients a_ij = alpha_i alpha_j / (n m) sum f(u_l,v_t) T_i(u_l) T_j(v_t)
/// by direct summation.
template <class T>
Table2D<T> cheb_coeffs_2d(const Table2D<T>& samples, const ChebGrid& grid) {
  const int n = grid.n_u, m = grid.n_v;
  if (samples.nu() != n || samples.nv() != m)
    throw ShapeMismatch("cheb_coeffs_2d: samples do not match grid");
  std::vector<double> tu(static_cast<std::size_t>(n) * n), tv(static_cast<std::size_t>(m) * m);
  for (int l = 0; l < n; ++l)
    chebyshev_t(grid.nodes_u[l], std::span(tu.data() + static_cast<std::size_t>(l) * n, n));
  for (int t = 0; t < m; ++t)
    chebyshev_t(grid.nodes_v[t], std::span(tv.data() + static_cast<std::size_t>(t) * m, m));

  Table2D<T> a(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      T acc{};
      for (int t = 0; t < m; ++t)
        for (int l = 0; l < n; ++l)
          acc += samples(l, t) * (tu[static_cast<std::size_t>(l) * n + i] *
                                  tv[static_cast<std::size_t>(t) * m + j]);
      const double alpha = (i == 0 ? 1.0 : 2.0) * (j == 0 ? 1.0 : 2.0);
      a(i, j) = acc * (alpha / (static_cast<double>(n) * m));
    }
  }
  return a;
}

/// Same coefficients via two passes of 1-D cosine transforms, O(nm(n+m)).
template <class T>
Table2D<T> cheb_coeffs_2d_fast(const Table2D<T>& samples, const ChebGrid& grid) {
  const int n = grid.n_u, m = grid.n_v;
  if (samples.nu() != n || samples.nv() != m)
    throw ShapeMismatch("cheb_coeffs_2d_fast: samples do not match grid");
  // On first-kind nodes T_i(x_l) = cos(i pi (2l+1) / (2n)).
  auto cosine_table = [](int q) {
    std::vector<double> c(static_cast<std::size_t>(q) * q);
    for (int i = 0; i < q; ++i)
      for (int l = 0; l < q; ++l)
        c[static_cast<std::size_t>(i) * q + l] = std::cos(kPi * i * (2.0 * l + 1.0) / (2.0 * q));
    return c;
  };
  const auto cu = cosine_table(n);
  const auto cv = cosine_table(m);
  Table2D<T> half(n, m);
  for (int t = 0; t < m; ++t)
    for (int i = 0; i < n; ++i) {
      T acc{};
      for (int l = 0; l < n; ++l) acc += samples(l, t) * cu[static_cast<std::size_t>(i) * n + l];
      half(i, t) = acc * ((i == 0 ? 1.0 : 2.0) / n);
    }
  Table2D<T> a(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      T acc{};
      for (int t = 0; t < m; ++t) acc += half(i, t) * cv[static_cast<std::size_t>(j) * m + t];
      a(i, j) = acc * ((j == 0 ? 1.0 : 2.0) / m);
    }
  return a;
}

template <class T>
T cheb_eval_2d(const Table2D<T>& coeffs, double u, double v) {
  detail::check_unit_square(u, v);
  const int n = coeffs.nu(), m = coeffs.nv();
  if (n == 0 || m == 0) return T{};
  // Collapse u first (column by column), then v.
  std::vector<T> col(m);
  for (int j = 0; j < m; ++j) col[j] = detail::clenshaw(&coeffs(0, j), n, 1, u);
  return detail::clenshaw(col.data(), m, 1, v);
}

/// Coefficients of the partial derivative along one direction. The result keeps
/// the input shape; the top coefficient in the differentiated direction is zero.
template <class T>
Table2D<T> cheb_diff(const Table2D<T>& coeffs, Direction dir) {
  const int n = coeffs.nu(), m = coeffs.nv();
  Table2D<T> d(n, m);
  auto diff_line = [](auto get, auto put, int q) {
    // d_{k-1} = d_{k+1} + 2k c_k, halved at k = 0.
    T dkp1{}, dkp2{};
    for (int k = q - 1; k >= 1; --k) {
      const T dk = dkp2 + 2.0 * k * get(k);
      put(k - 1, k - 1 == 0 ? dk * 0.5 : dk);
      dkp2 = dkp1;
      dkp1 = dk;
    }
    if (q > 0) put(q - 1, T{});
  };
  if (dir == Direction::U) {
    for (int j = 0; j < m; ++j)
      diff_line([&](int k) { return coeffs(k, j); }, [&](int k, T val) { d(k, j) = val; }, n);
  } else {
    for (int i = 0; i < n; ++i)
      diff_line([&](int k) { return coeffs(i, k); }, [&](int k, T val) { d(i, k) = val; }, m);
  }
  return d;
}

/// Samples of f at the grid nodes from its coefficients (inverse of cheb_coeffs_2d).
template <class T>
Table2D<T> cheb_synthesize(const Table2D<T>& coeffs, const ChebGrid& grid) {
  Table2D<T> out(grid.n_u, grid.n_v);
  for (int j = 0; j < grid.n_v; ++j)
    for (int i = 0; i < grid.n_u; ++i) out(i, j) = cheb_eval_2d(coeffs, grid.nodes_u[i], grid.nodes_v[j]);
  return out;
}

/// Nodal differentiation matrix D (q x q) on first-kind nodes: (D f)_l = f'(x_l)
/// for the degree q-1 interpolant. Built from cheb_diff applied to unit samples.
std::vector<double> cheb_diff_matrix(int q);

}  // namespace cbie
