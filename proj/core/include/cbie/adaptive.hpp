#pragma once

// Adaptive precomputation of the near-interaction weight tables
//   beta_ij = int int B(r, r_p(u,v)) T_i(u) T_j(v) sqrt|G| du dv
// for the single-layer and adjoint double-layer kernels, and the per-patch
// automatic near/far cutoff.
//
// Every table is integrated on the change-of-variables subpatches anchored at
// the target's projection. Error control never looks at individual
// coefficients: the tables are contracted against the Chebyshev coefficients
// of an auxiliary plane-wave density exp(i k_aux z) and the scalar result is
// what must meet max(tol_abs, tol_rel |I|).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cbie/chebyshev.hpp"
#include "cbie/geometry.hpp"
#include "cbie/kernels.hpp"
#include "cbie/singular.hpp"

namespace cbie {

enum class Scheme { GaussKronrod, ClenshawCurtis, FixedFejer };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct AdaptiveConfig {
  double tol_abs = 1e-12;
  double tol_rel = 1e-8;
  Scheme scheme = Scheme::GaussKronrod;
  int gk_max_panels = 1000;  // per change-of-variables interval
  int cc_initial_order = 9;
  int cc_max_depth = 7;
  int cov_order = 3;
  double aux_factor = 1.1;
  int n_beta = 20;  // FixedFejer only
  // A single passing far check proved unreliable near patch edges.
  int consecutive_far_passes = 3;
  // Treat every candidate (proxy distance <= 2 patch diameters) as near.
  bool force_near = false;

  void validate() const;
  double tolerance(double reference) const;
  std::string fingerprint() const;
};

// Weight tables for both kernels, n x m each.
struct KernelTables {
  ChebCoeffs2D single;
  ChebCoeffs2D adjoint;

  KernelTables() = default;
  KernelTables(int n, int m) : single(n, m), adjoint(n, m) {}
  KernelTables& operator+=(const KernelTables& o);
};

/// sum_ij a_ij beta_ij
Complex contract(const ChebCoeffs2D& a, const ChebCoeffs2D& beta);

// Kernel evaluation context for one target. `unit_kernel` replaces both
// kernels by 1 (test hook for constant integrands).
struct TargetKernel {
  double k = 0;
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  bool unit_kernel = false;
};

struct PrecompEntry {
  std::uint32_t patch = 0;
  std::uint64_t target = 0;
  Projection projection;
  KernelTables beta;
  double error_single = 0;
  double error_adjoint = 0;
  // Bound the scheme enforced on each error (NaN for the fixed rule).
  double tolerance_single = 0;
  double tolerance_adjoint = 0;
  int refinements = 0;
  std::uint64_t kernel_evals = 0;
  bool converged = true;

  // Scalar error reported for the entry (NaN when unknown).
  double error() const { return std::max(error_single, error_adjoint); }
};

/// Chebyshev coefficients of exp(i k_aux z(u,v)) on the patch's n x m grid.
ChebCoeffs2D auxiliary_coeffs(const Patch& patch, const ChebGrid& grid, double k_aux);
ChebCoeffs2D auxiliary_coeffs(std::span<const Vec3> node_positions, const ChebGrid& grid, double k_aux);

struct Rect {
  double u0 = 0, u1 = 1, v0 = 0, v1 = 1;
};

// beta^{XY}: X is the rule along u, Y along v.
struct PanelEstimates {
  KernelTables gg, gk, kg, kk;
  std::uint64_t kernel_evals = 0;
};

PanelEstimates gk_panel_estimates(const TargetKernel& kernel, const Patch& patch, const CovMap& map,
                                  const Rect& rect, int n, int m);

/// Integrates the tables with one tensor rule (nodes in [0,1]) on one subpatch.
KernelTables tensor_rule_tables(const TargetKernel& kernel, const Patch& patch, const CovMap& map,
                                const Rule1D& rule_u, const Rule1D& rule_v, int n, int m);

// Final panel layout of a Gauss-Kronrod run, for inspection.
struct GkTrace {
  std::vector<std::size_t> interval;
  std::vector<Rect> rects;
};

PrecompEntry gk_precompute(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                           const AdaptiveConfig& cfg, const ChebCoeffs2D& aux, GkTrace* trace = nullptr);
PrecompEntry cc_precompute(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                           const AdaptiveConfig& cfg, const ChebCoeffs2D& aux);
PrecompEntry fixed_precompute(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                              int n_beta, int cov_order, int n, int m);

/// Dispatches on cfg.scheme.
PrecompEntry precompute_entry(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                              const AdaptiveConfig& cfg, const ChebCoeffs2D& aux);

struct NearFarEntry {
  double delta_near = 0;
  // Self nodes first, then candidates in ascending proxy distance.
  std::vector<std::uint64_t> near_targets;
  std::vector<std::uint64_t> far_targets;
  bool cap_reached = false;
  std::uint64_t far_check_evals = 0;
  // Evaluations spent on entries that were computed and then classified far.
  std::uint64_t discarded_evals = 0;
  std::uint64_t not_converged = 0;
};

struct PatchPrecomp {
  NearFarEntry near_far;
  std::vector<PrecompEntry> entries;  // same order as near_targets
};

/// Self nodes, then the proxy-sorted candidate sweep that stops once the
/// plain Fejer rule reproduces the precomputed value for both kernels.
PatchPrecomp determine_near_far(const SurfaceGrid& surface, std::size_t patch, double k0,
                                const AdaptiveConfig& cfg, const ChebCoeffs2D& aux);

struct Metrics {
  std::uint64_t kernel_evals = 0;
  double precompute_seconds = 0;
  std::uint64_t precompute_bytes = 0;
};

// Bytes charged per stored entry besides its weights: uint32 patch + uint64 target.
inline constexpr std::uint64_t kIndexBytesPerEntry = 12;

class PrecompTable {
 public:
  PrecompTable() = default;
  PrecompTable(std::size_t patches, std::size_t nodes);

  void set_patch(std::size_t patch, std::vector<PrecompEntry> entries);
  const std::vector<PrecompEntry>& patch_entries(std::size_t patch) const { return by_patch_[patch]; }
  const PrecompEntry* find(std::size_t patch, std::uint64_t target) const;

  struct NearRef {
    std::uint32_t patch;
    const PrecompEntry* entry;
  };
  // Near (patch, entry) pairs for one target node, ordered by patch.
  const std::vector<NearRef>& near_of(std::uint64_t target) const { return by_target_[target]; }
  void rebuild_index();

  std::size_t entry_count() const;
  std::size_t patch_count() const { return by_patch_.size(); }
  std::uint64_t memory_bytes(int n, int m) const;

 private:
  std::vector<std::vector<PrecompEntry>> by_patch_;
  std::vector<std::vector<NearRef>> by_target_;
};

struct Precomputation {
  AdaptiveConfig config;
  double k0 = 0;
  PrecompTable table;
  std::vector<NearFarEntry> near_far;  // per patch
  Metrics metrics;
  std::uint64_t not_converged = 0;
  std::uint64_t capped_patches = 0;
  // Sum of per-entry and far-check evaluation counts (independent recount).
  std::uint64_t recounted_kernel_evals = 0;
};

Precomputation build_precomputation(const SurfaceGrid& surface, double k0, const AdaptiveConfig& cfg);

/// Binary cache: header, then one record per entry
/// {u32 patch, u64 target, f64 error, n*m complex single, n*m complex adjoint}
/// in little-endian doubles, then per-patch delta_near.
void save_precomp_cache(const Precomputation& pre, const SurfaceGrid& surface,
                        const std::filesystem::path& path);
std::optional<Precomputation> load_precomp_cache(const SurfaceGrid& surface, double k0,
                                                 const AdaptiveConfig& cfg,
                                                 const std::filesystem::path& path);
/// File name stem derived from (mesh, order, k0, config).
std::string precomp_cache_key(const SurfaceGrid& surface, double k0, const AdaptiveConfig& cfg);

}  // namespace cbie
