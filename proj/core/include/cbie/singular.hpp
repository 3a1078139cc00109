#pragma once

// Singularity location on a source patch (closest-point projection), the
// one/two/four-way split of [-1,1]^2 around it, and the polynomial change of
// variables that clusters quadrature nodes at the split point.

#include <vector>

#include "cbie/geometry.hpp"

namespace cbie {

inline constexpr double kSnapTolerance = 1e-10;

struct Projection {
  double u0 = 0;
  double v0 = 0;
  double distance = 0;
  bool on_patch = false;
};

class ProjectionError : public Error {
 public:
  ProjectionError(const std::string& what, double u, double v, double grad_norm)
      : Error(what), best_u(u), best_v(v), gradient_norm(grad_norm) {}
  double best_u, best_v, gradient_norm;
};

/// Closest point on the patch to `target`: projected Newton on |target - r(u,v)|^2
/// inside [-1,1]^2, started from the best probes of a 5x5 grid.
Projection project_to_patch(const Vec3& target, const Patch& patch);

/// Self-interaction shortcut: the target is the patch node (u0, v0).
Projection node_projection(double u0, double v0);

// Rectangle spanned by the anchor (u0, v0) and the far corner (end_u, end_v).
struct Subpatch {
  double u0, v0;
  double end_u, end_v;

  double area() const { return std::abs(end_u - u0) * std::abs(end_v - v0); }
};

struct SubpatchSet {
  double u0 = 0, v0 = 0;  // after snapping
  std::vector<Subpatch> parts;
};

/// Coordinates within 1e-10 of +-1 snap to the endpoint; 1, 2 or 4 parts result.
SubpatchSet split_subpatches(double u0, double v0);

/// s = u^p (end_u - u0) + u0, t = v^p (end_v - v0) + v0 for (u,v) in [0,1]^2.
class CovMap {
 public:
  CovMap(const Subpatch& sub, int p);

  const Subpatch& subpatch() const noexcept { return sub_; }
  int order() const noexcept { return p_; }

  double s(double u) const { return sub_.u0 + (sub_.end_u - sub_.u0) * ipow(u, p_); }
  double t(double v) const { return sub_.v0 + (sub_.end_v - sub_.v0) * ipow(v, p_); }
  // s(u) - u0 and t(v) - v0 without rounding through the anchor.
  double s_offset(double u) const { return (sub_.end_u - sub_.u0) * ipow(u, p_); }
  double t_offset(double v) const { return (sub_.end_v - sub_.v0) * ipow(v, p_); }
  double ds(double u) const { return p_ * ipow(u, p_ - 1) * (sub_.end_u - sub_.u0); }
  double dt(double v) const { return p_ * ipow(v, p_ - 1) * (sub_.end_v - sub_.v0); }
  double jacobian(double u, double v) const { return std::abs(ds(u) * dt(v)); }

 private:
  static double ipow(double x, int p) {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= x;
    return r;
  }
  Subpatch sub_;
  int p_;
};

/// One map per non-degenerate subpatch (parts whose side is below 1e-10 are dropped).
std::vector<CovMap> cov_map(const SubpatchSet& set, int p);

}  // namespace cbie
