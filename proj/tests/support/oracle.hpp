#pragma once

// Brute-force reference integrator used by the tests. It shares nothing with
// the library's quadrature code: its own Chebyshev fit of the patch points,
// its own Fejer-I rule and change of variables, all in long double.
//
//   I = int int B(target, r(s,t)) f(s,t) |r_s x r_t| ds dt
//
// with f given by Chebyshev coefficients and B the single-layer or adjoint
// double-layer Helmholtz kernel.

#include <cmath>
#include <complex>
#include <vector>

#include "cbie/geometry.hpp"

namespace oracle {

using ld = long double;
using cld = std::complex<ld>;

inline constexpr ld kPiL = 3.141592653589793238462643383279502884L;

struct Rule {
  std::vector<ld> x, w;  // on [0,1]
};

// Fejer first rule with q points, moved to [0,1].
inline Rule fejer1_unit(int q) {
  Rule r;
  for (int j = 0; j < q; ++j) {
    const ld th = kPiL * (2 * j + 1) / (2.0L * q);
    ld s = 0;
    for (int l = 1; l <= q / 2; ++l) s += std::cos(2 * l * th) / (4.0L * l * l - 1);
    r.x.push_back(0.5L * (1 + std::cos(th)));
    r.w.push_back(0.5L * (2.0L / q) * (1 - 2 * s));
  }
  return r;
}

// T_0..T_{n-1} and their derivatives at x.
inline void cheb_rows(ld x, int n, std::vector<ld>& t, std::vector<ld>& dt) {
  t.assign(n, 0);
  dt.assign(n, 0);
  std::vector<ld> u(n + 1, 0);  // second kind
  t[0] = 1;
  if (n > 1) t[1] = x;
  for (int k = 2; k < n; ++k) t[k] = 2 * x * t[k - 1] - t[k - 2];
  u[0] = 1;
  if (n > 1) u[1] = 2 * x;
  for (int k = 2; k < n; ++k) u[k] = 2 * x * u[k - 1] - u[k - 2];
  for (int k = 1; k < n; ++k) dt[k] = k * u[k - 1];
}

class PatchSeries {
 public:
  explicit PatchSeries(const cbie::Patch& p) : n_(p.n_geo()) {
    const int n = n_;
    std::vector<ld> x(n);
    for (int j = 0; j < n; ++j) x[j] = std::cos(kPiL * (2 * j + 1) / (2.0L * n));
    for (auto& c : c_) c.assign(static_cast<std::size_t>(n) * n, 0);
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        ld acc[3] = {0, 0, 0};
        for (int b = 0; b < n; ++b)
          for (int a = 0; a < n; ++a) {
            const ld w = std::cos(k * std::acos(x[a])) * std::cos(l * std::acos(x[b]));
            const auto& q = p.points()[a + static_cast<std::size_t>(n) * b];
            for (int d = 0; d < 3; ++d) acc[d] += q[d] * w;
          }
        const ld alpha = (k ? 2.0L : 1.0L) * (l ? 2.0L : 1.0L) / (static_cast<ld>(n) * n);
        for (int d = 0; d < 3; ++d) c_[d][k + static_cast<std::size_t>(n) * l] = acc[d] * alpha;
      }
  }

  struct Point {
    ld r[3], ru[3], rv[3];
  };

  Point eval(ld s, ld t) const {
    std::vector<ld> ts, dts, tt, dtt;
    cheb_rows(s, n_, ts, dts);
    cheb_rows(t, n_, tt, dtt);
    Point out{};
    for (int d = 0; d < 3; ++d)
      for (int l = 0; l < n_; ++l)
        for (int k = 0; k < n_; ++k) {
          const ld c = c_[d][k + static_cast<std::size_t>(n_) * l];
          out.r[d] += c * ts[k] * tt[l];
          out.ru[d] += c * dts[k] * tt[l];
          out.rv[d] += c * ts[k] * dtt[l];
        }
    return out;
  }

  // Partial sums over the s direction, so points along one s = const line
  // cost O(n) each.
  struct Line {
    std::vector<ld> r[3], ru[3];
  };
  Line line(ld s) const {
    std::vector<ld> ts, dts;
    cheb_rows(s, n_, ts, dts);
    Line out;
    for (int d = 0; d < 3; ++d) {
      out.r[d].assign(n_, 0);
      out.ru[d].assign(n_, 0);
      for (int l = 0; l < n_; ++l)
        for (int k = 0; k < n_; ++k) {
          const ld c = c_[d][k + static_cast<std::size_t>(n_) * l];
          out.r[d][l] += c * ts[k];
          out.ru[d][l] += c * dts[k];
        }
    }
    return out;
  }
  Point eval_on(const Line& ln, ld t) const {
    std::vector<ld> tt, dtt;
    cheb_rows(t, n_, tt, dtt);
    Point out{};
    for (int d = 0; d < 3; ++d)
      for (int l = 0; l < n_; ++l) {
        out.r[d] += ln.r[d][l] * tt[l];
        out.ru[d] += ln.ru[d][l] * tt[l];
        out.rv[d] += ln.r[d][l] * dtt[l];
      }
    return out;
  }

  // T_k(x) - T_k(x + h) for k < n, without forming x + h - x.
  static void cheb_diff_rows(ld x, ld h, int n, std::vector<ld>& d) {
    d.assign(n, 0);
    std::vector<ld> ty;
    std::vector<ld> unused;
    cheb_rows(x + h, n, ty, unused);
    if (n > 1) d[1] = -h;
    for (int k = 2; k < n; ++k) d[k] = 2 * x * d[k - 1] - 2 * h * ty[k - 1] - d[k - 2];
  }

  // r(s0, t0) - r(s0 + hs, t0 + ht) along the line s = s0 + hs.
  struct OffsetLine {
    std::vector<ld> a[3];  // sum_k c_kl (T_k(s0) - T_k(s))
    std::vector<ld> b[3];  // sum_k c_kl T_k(s)
  };
  OffsetLine offset_line(ld s0, ld hs) const {
    std::vector<ld> ds, ts, unused;
    cheb_diff_rows(s0, hs, n_, ds);
    cheb_rows(s0 + hs, n_, ts, unused);
    OffsetLine out;
    for (int d = 0; d < 3; ++d) {
      out.a[d].assign(n_, 0);
      out.b[d].assign(n_, 0);
      for (int l = 0; l < n_; ++l)
        for (int k = 0; k < n_; ++k) {
          const ld c = c_[d][k + static_cast<std::size_t>(n_) * l];
          out.a[d][l] += c * ds[k];
          out.b[d][l] += c * ts[k];
        }
    }
    return out;
  }
  void offset_on(const OffsetLine& ln, ld t0, ld ht, ld out[3]) const {
    std::vector<ld> tt, dt, unused;
    cheb_rows(t0, n_, tt, unused);
    cheb_diff_rows(t0, ht, n_, dt);
    for (int d = 0; d < 3; ++d) {
      out[d] = 0;
      for (int l = 0; l < n_; ++l) out[d] += ln.a[d][l] * tt[l] + ln.b[d][l] * dt[l];
    }
  }

  int order() const { return n_; }
  const std::vector<ld>& coeffs(int d) const { return c_[d]; }

 private:
  int n_;
  std::vector<ld> c_[3];
};

struct Value {
  std::complex<double> single, adjoint;
};

struct Target {
  cbie::Vec3 position;
  cbie::Vec3 normal;
  // Set when the target is the patch point r(u0, v0) itself; the offset is
  // then built from Chebyshev difference recurrences in the parameter offsets
  // and the normal is taken from the series.
  bool on_patch = false;
};

struct Options {
  int q = 200;
  int cov_order = 3;
  bool unit_kernel = false;  // B = 1
};

// f(s,t) = sum a_ij T_i(s) T_j(t) with a stored u-fastest (n x m).
inline Value integrate(const PatchSeries& geo, const Target& target, double k, double u0, double v0,
                       const std::vector<std::complex<double>>& a, int n, int m, const Options& opt = {}) {
  const int p = opt.cov_order;
  const Rule rule = fejer1_unit(opt.q);
  auto snap = [](ld x) {
    if (std::abs(x - 1) <= 1e-10L) return ld(1);
    if (std::abs(x + 1) <= 1e-10L) return ld(-1);
    return x;
  };
  const ld su = snap(u0), sv = snap(v0);
  std::vector<ld> ends_u, ends_v;
  for (ld e : {ld(-1), ld(1)}) {
    if (std::abs(e - su) > 1e-10L) ends_u.push_back(e);
    if (std::abs(e - sv) > 1e-10L) ends_v.push_back(e);
  }
  ld anchor[3] = {0, 0, 0};
  ld nrm[3] = {target.normal[0], target.normal[1], target.normal[2]};
  if (target.on_patch) {
    // Own normal at the anchor, oriented like the supplied one.
    const auto pt = geo.eval(su, sv);
    ld c[3] = {pt.ru[1] * pt.rv[2] - pt.ru[2] * pt.rv[1], pt.ru[2] * pt.rv[0] - pt.ru[0] * pt.rv[2],
               pt.ru[0] * pt.rv[1] - pt.ru[1] * pt.rv[0]};
    const ld len = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    const ld sign = c[0] * nrm[0] + c[1] * nrm[1] + c[2] * nrm[2] < 0 ? -1 : 1;
    for (int d = 0; d < 3; ++d) nrm[d] = sign * c[d] / len;
  } else {
    for (int d = 0; d < 3; ++d) anchor[d] = target.position[d];
  }
  const ld kk = k;

  // Density rows are tabulated per quadrature line.
  const int qn = opt.q;
  cld single = 0, adjoint = 0;
  std::vector<ld> ts, dts, tt, dtt;
  std::vector<cld> fs(m);
  for (ld eu : ends_u)
    for (ld ev : ends_v) {
      const ld area = std::abs((eu - su) * (ev - sv));
      for (int ia = 0; ia < qn; ++ia) {
        const ld uu = rule.x[ia];
        const ld hs = (eu - su) * std::pow(uu, p);
        const ld s = su + hs;
        const ld ju = p * std::pow(uu, p - 1);
        cheb_rows(s, n, ts, dts);
        const auto ln = geo.line(s);
        PatchSeries::OffsetLine oln;
        if (target.on_patch) oln = geo.offset_line(su, hs);
        for (int j = 0; j < m; ++j) {
          cld acc = 0;
          for (int i = 0; i < n; ++i) acc += cld(a[i + static_cast<std::size_t>(n) * j]) * ts[i];
          fs[j] = acc;
        }
        for (int ib = 0; ib < qn; ++ib) {
          const ld vv = rule.x[ib];
          const ld ht = (ev - sv) * std::pow(vv, p);
          const ld t = sv + ht;
          const ld jv = p * std::pow(vv, p - 1);
          cheb_rows(t, m, tt, dtt);
          cld f = 0;
          for (int j = 0; j < m; ++j) f += fs[j] * tt[j];
          const auto pt = geo.eval_on(ln, t);
          const ld cx = pt.ru[1] * pt.rv[2] - pt.ru[2] * pt.rv[1];
          const ld cy = pt.ru[2] * pt.rv[0] - pt.ru[0] * pt.rv[2];
          const ld cz = pt.ru[0] * pt.rv[1] - pt.ru[1] * pt.rv[0];
          const ld jac = std::sqrt(cx * cx + cy * cy + cz * cz);
          const ld w = rule.w[ia] * rule.w[ib] * ju * jv * area * jac;
          if (opt.unit_kernel) {
            single += f * w;
            adjoint += f * w;
            continue;
          }
          ld dvec[3];
          if (target.on_patch) geo.offset_on(oln, sv, ht, dvec);
          else
            for (int d = 0; d < 3; ++d) dvec[d] = anchor[d] - pt.r[d];
          const ld r2 = dvec[0] * dvec[0] + dvec[1] * dvec[1] + dvec[2] * dvec[2];
          if (r2 == 0) continue;
          const ld big_r = std::sqrt(r2);
          const cld e = std::polar(ld(1), kk * big_r);
          const cld g = e / (4 * kPiL * big_r);
          const ld ndot = nrm[0] * dvec[0] + nrm[1] * dvec[1] + nrm[2] * dvec[2];
          const cld dg = g * cld(-1, kk * big_r) / r2 * ndot;
          single += g * f * w;
          adjoint += dg * f * w;
        }
      }
    }
  return {std::complex<double>(static_cast<double>(single.real()), static_cast<double>(single.imag())),
          std::complex<double>(static_cast<double>(adjoint.real()), static_cast<double>(adjoint.imag()))};
}

}  // namespace oracle
