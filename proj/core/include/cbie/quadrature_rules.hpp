#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cbie/chebyshev.hpp"

namespace cbie {

// 15-point Kronrod extension of the 7-point Gauss-Legendre rule on [-1,1].
// Abscissae for the non-negative half; Gauss nodes are the odd entries.
struct GaussKronrod15 {
  static constexpr std::array<double, 8> xgk = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr std::array<double, 8> wgk = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr std::array<double, 4> wg = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

  static constexpr int kPoints = 15;

  // Nodes and Kronrod/Gauss weights mapped to [a, b]. Gauss weights are zero
  // at the Kronrod-only nodes.
  struct Mapped {
    std::array<double, 15> x, wk, wg;
  };

  static Mapped on(double a, double b) {
    Mapped m{};
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int k = 0; k < 7; ++k) {
      m.x[k] = mid - half * xgk[k];
      m.x[14 - k] = mid + half * xgk[k];
      m.wk[k] = m.wk[14 - k] = half * wgk[k];
      const double g = (k % 2 == 1) ? half * wg[k / 2] : 0.0;
      m.wg[k] = m.wg[14 - k] = g;
    }
    m.x[7] = mid;
    m.wk[7] = half * wgk[7];
    m.wg[7] = half * wg[3];
    return m;
  }
};

/// Fejer second rule on [-1,1] with nodes cos(j pi / M), j = 1..M-1 (M even).
/// Doubling M keeps every old node: node j of rule M is node 2j of rule 2M.
inline Rule1D fejer2_rule(int big_m) {
  Rule1D r;
  r.nodes.resize(big_m - 1);
  r.weights.resize(big_m - 1);
  for (int j = 1; j < big_m; ++j) {
    const double th = kPi * j / big_m;
    double sum = 0.0;
    for (int l = 1; l <= big_m / 2; ++l) sum += std::sin((2.0 * l - 1.0) * th) / (2.0 * l - 1.0);
    r.nodes[j - 1] = std::cos(th);
    r.weights[j - 1] = 4.0 * std::sin(th) / big_m * sum;
  }
  return r;
}

// Rule on [-1,1] transported to [0,1].
inline Rule1D to_unit_interval(Rule1D r) {
  for (std::size_t k = 0; k < r.nodes.size(); ++k) {
    r.nodes[k] = 0.5 * (1.0 + r.nodes[k]);
    r.weights[k] *= 0.5;
  }
  return r;
}

}  // namespace cbie
