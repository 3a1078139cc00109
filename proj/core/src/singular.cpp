#include "cbie/singular.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace cbie {

namespace {

struct NewtonResult {
  double u, v, f, grad_norm;
  bool converged;
};

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

// Projected Newton for f(u,v) = 0.5 |r(u,v) - target|^2 on the unit box.
NewtonResult newton_project(const Vec3& target, const Patch& patch, double u, double v) {
  auto objective = [&](double uu, double vv) { return 0.5 * (patch.eval(uu, vv) - target).squaredNorm(); };
  double f = objective(u, v);
  double grad_norm = 0;
  for (int iter = 0; iter < 50; ++iter) {
    const PatchDerivatives d = patch.derivatives(u, v);
    const Vec3 res = d.r - target;
    const std::array<double, 2> g = {res.dot(d.ru), res.dot(d.rv)};
    const double gn00 = d.ru.dot(d.ru), gn01 = d.ru.dot(d.rv), gn11 = d.rv.dot(d.rv);
    const double h00 = gn00 + res.dot(d.ruu), h01 = gn01 + res.dot(d.ruv), h11 = gn11 + res.dot(d.rvv);

    // Coordinates pinned to the box with the descent direction pointing out.
    const std::array<bool, 2> active = {(u <= -1.0 && g[0] > 0) || (u >= 1.0 && g[0] < 0),
                                        (v <= -1.0 && g[1] > 0) || (v >= 1.0 && g[1] < 0)};
    grad_norm = std::hypot(active[0] ? 0.0 : g[0], active[1] ? 0.0 : g[1]);

    std::array<double, 2> step = {0.0, 0.0};
    auto solve_free = [&](double a00, double a01, double a11) -> bool {
      if (!active[0] && !active[1]) {
        const double det = a00 * a11 - a01 * a01;
        if (!(a00 > 0 && det > 1e-14 * a00 * a11)) return false;
        step = {-(a11 * g[0] - a01 * g[1]) / det, -(a00 * g[1] - a01 * g[0]) / det};
        return true;
      }
      for (int c = 0; c < 2; ++c) {
        if (active[c]) continue;
        const double a = c == 0 ? a00 : a11;
        if (!(a > 0)) return false;
        step[c] = -g[c] / a;
      }
      return true;
    };
    if (active[0] && active[1]) return {u, v, f, 0.0, true};
    if (!solve_free(h00, h01, h11) && !solve_free(gn00, gn01, gn11)) {
      step = {active[0] ? 0.0 : -g[0], active[1] ? 0.0 : -g[1]};
    }

    double alpha = 1.0;
    double un = u, vn = v, fn = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
      un = clamp_unit(u + alpha * step[0]);
      vn = clamp_unit(v + alpha * step[1]);
      fn = objective(un, vn);
      if (fn <= f + 1e-4 * (g[0] * (un - u) + g[1] * (vn - v))) {
        accepted = true;
        break;
      }
    }
    const double move = std::hypot(un - u, vn - v);
    if (!accepted || move < 1e-12) {
      if (accepted) {
        u = un;
        v = vn;
        f = fn;
      }
      return {u, v, f, grad_norm, true};
    }
    u = un;
    v = vn;
    f = fn;
  }
  return {u, v, f, grad_norm, false};
}

}  // namespace

Projection project_to_patch(const Vec3& target, const Patch& patch) {
  struct Probe {
    double f, u, v;
  };
  std::vector<Probe> probes;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) {
      const double u = -1.0 + 0.5 * i, v = -1.0 + 0.5 * j;
      probes.push_back({(patch.eval(u, v) - target).squaredNorm(), u, v});
    }
  std::sort(probes.begin(), probes.end(), [](const Probe& a, const Probe& b) {
    return a.f < b.f || (a.f == b.f && (a.v < b.v || (a.v == b.v && a.u < b.u)));
  });

  NewtonResult best{0, 0, std::numeric_limits<double>::infinity(), 0, false};
  NewtonResult failed = best;
  for (int s = 0; s < 3; ++s) {
    const NewtonResult r = newton_project(target, patch, probes[s].u, probes[s].v);
    if (r.converged && r.f < best.f) best = r;
    if (!r.converged && r.f < failed.f) failed = r;
  }
  if (!best.converged)
    throw ProjectionError("projection onto patch " + std::to_string(patch.id()) + " did not converge",
                          failed.u, failed.v, failed.grad_norm);

  Projection p;
  p.u0 = best.u;
  p.v0 = best.v;
  p.distance = std::sqrt(2.0 * best.f);
  p.on_patch = p.distance <= 1e-12 * patch.diameter();
  return p;
}

Projection node_projection(double u0, double v0) { return {u0, v0, 0.0, true}; }

SubpatchSet split_subpatches(double u0, double v0) {
  if (!(std::abs(u0) <= 1.0 + kSnapTolerance) || !(std::abs(v0) <= 1.0 + kSnapTolerance))
    throw DomainError("split_subpatches: point outside [-1,1]^2");
  auto snap = [](double x, bool& snapped) {
    snapped = true;
    if (std::abs(x - 1.0) <= kSnapTolerance) return 1.0;
    if (std::abs(x + 1.0) <= kSnapTolerance) return -1.0;
    snapped = false;
    return x;
  };
  bool su = false, sv = false;
  SubpatchSet set;
  set.u0 = snap(u0, su);
  set.v0 = snap(v0, sv);
  const std::vector<double> ends_u = su ? std::vector<double>{-set.u0} : std::vector<double>{-1.0, 1.0};
  const std::vector<double> ends_v = sv ? std::vector<double>{-set.v0} : std::vector<double>{-1.0, 1.0};
  for (double ev : ends_v)
    for (double eu : ends_u) set.parts.push_back({set.u0, set.v0, eu, ev});
  return set;
}

CovMap::CovMap(const Subpatch& sub, int p) : sub_(sub), p_(p) {
  if (p < 1) throw DomainError("change of variables order must be >= 1");
}

std::vector<CovMap> cov_map(const SubpatchSet& set, int p) {
  if (p < 2) throw DomainError("cov_map: order p must be >= 2");
  std::vector<CovMap> maps;
  for (const auto& part : set.parts) {
    if (std::abs(part.end_u - part.u0) <= kSnapTolerance || std::abs(part.end_v - part.v0) <= kSnapTolerance)
      continue;
    maps.emplace_back(part, p);
  }
  return maps;
}

}  // namespace cbie
