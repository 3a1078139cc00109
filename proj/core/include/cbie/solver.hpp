#pragma once

// Matrix-free MFIE operator (1/2 I + K) on the Nystrom grid, the plane-wave
// right-hand side and the GMRES / dense solve.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cbie/adaptive.hpp"
#include "cbie/geometry.hpp"

namespace cbie {

// Contravariant components (J^u, J^v) at every node, patch-major, u fastest.
struct SurfaceDensity {
  std::vector<Complex> ju, jv;

  SurfaceDensity() = default;
  explicit SurfaceDensity(std::size_t nodes) : ju(nodes), jv(nodes) {}
  std::size_t size() const noexcept { return ju.size(); }

  // Interleaved (J^u_0, J^v_0, J^u_1, ...).
  std::vector<Complex> flatten() const;
  static SurfaceDensity unflatten(std::span<const Complex> x);
  bool all_finite() const;
};

/// Cartesian vector J = J^u e_u + J^v e_v at every node.
std::vector<Vec3c> to_cartesian(const SurfaceGrid& surface, const SurfaceDensity& d);
/// Tangential projection onto (e_u, e_v) through the contravariant basis.
SurfaceDensity from_cartesian(const SurfaceGrid& surface, std::span<const Vec3c> j);

/// n x H^inc with H^inc = y exp(i k0 z), resolved onto (e_u, e_v).
SurfaceDensity incident_rhs(const SurfaceGrid& surface, double k0, Complex amplitude = 1.0);

// Which scalar operators to evaluate.
struct LayerRequest {
  bool single = true;
  bool adjoint = true;
};

struct LayerOutput {
  std::vector<std::vector<Complex>> single;   // [component][node]
  std::vector<std::vector<Complex>> adjoint;
};

/// S and/or D' applied to several scalar densities at every node. Far patches
/// use the Fejer rule, near patches contract the stored weights.
LayerOutput apply_layers(const SurfaceGrid& surface, const Precomputation& pre,
                         const std::vector<std::vector<Complex>>& densities, LayerRequest request = {});

enum class ScalarOperator { SingleLayer, AdjointDoubleLayer };

std::vector<Complex> apply_scalar_operator(const SurfaceGrid& surface, const Precomputation& pre,
                                           std::span<const Complex> density, ScalarOperator op);

class MfieOperator {
 public:
  MfieOperator(const SurfaceGrid& surface, const Precomputation& pre);

  std::size_t unknowns() const noexcept { return 2 * surface_.node_count(); }
  SurfaceDensity apply_K(const SurfaceDensity& j) const;
  // (1/2 I + K) on the flattened vector.
  std::vector<Complex> apply(std::span<const Complex> x) const;

  std::uint64_t kernel_evals_per_apply() const noexcept { return evals_per_apply_; }

 private:
  const SurfaceGrid& surface_;
  const Precomputation& pre_;
  std::vector<double> diff_u_, diff_v_;
  std::uint64_t evals_per_apply_ = 0;
};

using LinearMap = std::function<std::vector<Complex>(std::span<const Complex>)>;

struct GmresOptions {
  double tol = 1e-10;
  int max_iters = 1000;
  int restart = 100;
};

struct GmresResult {
  std::vector<Complex> x;
  int iterations = 0;
  double residual = 0;  // recomputed ||b - A x|| / ||b||
  bool converged = false;
};

GmresResult gmres(const LinearMap& a, std::span<const Complex> b, const GmresOptions& opt);

/// Column-by-column assembly and LU solve; limited to 5000 unknowns.
std::vector<Complex> dense_solve(const LinearMap& a, std::size_t n, std::span<const Complex> b);

inline constexpr std::size_t kDenseLimit = 5000;

struct SolveOptions {
  int n = 10;
  int m = 10;
  GmresOptions gmres;
  bool dense = false;
};

struct SolveReport {
  int iterations = 0;
  double residual = 0;
  bool converged = false;
  std::size_t unknowns = 0;
  double precompute_seconds = 0;
  double solve_seconds = 0;
  Metrics metrics;
  std::uint64_t not_converged_entries = 0;
  std::uint64_t capped_patches = 0;
  std::uint64_t recounted_kernel_evals = 0;
  std::uint64_t matvec_kernel_evals = 0;
  std::size_t precomp_entries = 0;
};

struct SolveResult {
  SurfaceDensity density;
  SolveReport report;
};

/// Solves with an existing precomputation.
SolveResult solve_mfie(const SurfaceGrid& surface, const Precomputation& pre, const SolveOptions& opt);

struct FullSolve {
  std::unique_ptr<SurfaceGrid> surface;
  Precomputation pre;
  SolveResult result;
};

/// Precompute plus solve on a fresh grid.
FullSolve solve_mfie(const Mesh& mesh, double k0, const AdaptiveConfig& cfg, const SolveOptions& opt);

}  // namespace cbie
