#include "cbie/chebyshev.hpp"

namespace cbie {

Rule1D cheb_nodes_weights(int q) {
  if (q < 1) throw DomainError("cheb_nodes_weights: Q must be >= 1");
  Rule1D rule;
  rule.nodes.resize(q);
  rule.weights.resize(q);
  const int kmax = q / 2;
  for (int j = 0; j < q; ++j) {
    const double theta = kPi * (2.0 * j + 1.0) / (2.0 * q);
    rule.nodes[j] = std::cos(theta);
    double sum = 0.0;
    for (int k = 1; k <= kmax; ++k) sum += std::cos(2.0 * k * theta) / (4.0 * k * k - 1.0);
    rule.weights[j] = 2.0 / q * (1.0 - 2.0 * sum);
  }
  // cos(pi/2) is not exactly zero in floating point.
  if (q % 2 == 1) rule.nodes[q / 2] = 0.0;
  return rule;
}

ChebGrid::ChebGrid(int qu, int qv) : n_u(qu), n_v(qv) {
  auto ru = cheb_nodes_weights(qu);
  auto rv = cheb_nodes_weights(qv);
  nodes_u = std::move(ru.nodes);
  weights_u = std::move(ru.weights);
  nodes_v = std::move(rv.nodes);
  weights_v = std::move(rv.weights);
}

std::vector<double> cheb_diff_matrix(int q) {
  const ChebGrid line(q, 1);
  std::vector<double> d(static_cast<std::size_t>(q) * q);
  for (int col = 0; col < q; ++col) {
    Table2D<double> unit(q, 1, 0.0);
    unit(col, 0) = 1.0;
    const auto deriv = cheb_diff(cheb_coeffs_2d(unit, line), Direction::U);
    for (int row = 0; row < q; ++row)
      d[static_cast<std::size_t>(row) * q + col] = cheb_eval_2d(deriv, line.nodes_u[row], 0.0);
  }
  return d;
}

}  // namespace cbie
