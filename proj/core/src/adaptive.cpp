#include "cbie/adaptive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <Eigen/Dense>

#include "cbie/parallel.hpp"
#include "cbie/quadrature_rules.hpp"

namespace cbie {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::GaussKronrod: return "gk";
    case Scheme::ClenshawCurtis: return "cc";
    case Scheme::FixedFejer: return "fejer";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "gk" || s == "GK") return Scheme::GaussKronrod;
  if (s == "cc" || s == "CC") return Scheme::ClenshawCurtis;
  if (s == "fejer" || s == "FixedFejer") return Scheme::FixedFejer;
  throw DomainError("unknown quadrature scheme '" + s + "'");
}

void AdaptiveConfig::validate() const {
  if (!(tol_abs >= 0) || !(tol_rel >= 0) || (tol_abs == 0 && tol_rel == 0))
    throw DomainError("tolerances must be >= 0 and not both zero");
  if (!(aux_factor > 0)) throw DomainError("aux_factor must be positive");
  if (cov_order < 2 || cov_order > 6) throw DomainError("cov_order must be in [2, 6]");
  if (gk_max_panels < 1) throw DomainError("gk_max_panels must be >= 1");
  if (cc_initial_order < 1 || cc_max_depth < 2) throw DomainError("invalid Clenshaw-Curtis parameters");
  if (n_beta < 2) throw DomainError("n_beta must be >= 2");
  if (consecutive_far_passes < 1) throw DomainError("consecutive_far_passes must be >= 1");
}

double AdaptiveConfig::tolerance(double reference) const { return std::max(tol_abs, tol_rel * reference); }

std::string AdaptiveConfig::fingerprint() const {
  std::ostringstream os;
  os << std::setprecision(17) << "tol_abs=" << tol_abs << ";tol_rel=" << tol_rel
     << ";scheme=" << to_string(scheme) << ";gk_max_panels=" << gk_max_panels
     << ";cc_initial_order=" << cc_initial_order << ";cc_max_depth=" << cc_max_depth
     << ";cov_order=" << cov_order << ";aux_factor=" << aux_factor << ";n_beta=" << n_beta
     << ";consecutive_far_passes=" << consecutive_far_passes << ";force_near=" << force_near;
  return os.str();
}

KernelTables& KernelTables::operator+=(const KernelTables& o) {
  for (std::size_t k = 0; k < single.size(); ++k) {
    single[k] += o.single[k];
    adjoint[k] += o.adjoint[k];
  }
  return *this;
}

Complex contract(const ChebCoeffs2D& a, const ChebCoeffs2D& beta) {
  if (!a.same_shape(beta)) throw ShapeMismatch("contract: coefficient shapes differ");
  Complex acc{};
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * beta[k];
  return acc;
}

ChebCoeffs2D auxiliary_coeffs(std::span<const Vec3> node_positions, const ChebGrid& grid, double k_aux) {
  if (node_positions.size() != grid.size()) throw ShapeMismatch("auxiliary_coeffs: node count mismatch");
  Table2D<Complex> samples(grid.n_u, grid.n_v);
  for (std::size_t q = 0; q < node_positions.size(); ++q)
    samples[q] = std::exp(Complex(0.0, k_aux * node_positions[q].z()));
  return cheb_coeffs_2d(samples, grid);
}

ChebCoeffs2D auxiliary_coeffs(const Patch& patch, const ChebGrid& grid, double k_aux) {
  std::vector<Vec3> nodes;
  nodes.reserve(grid.size());
  for (int j = 0; j < grid.n_v; ++j)
    for (int i = 0; i < grid.n_u; ++i) nodes.push_back(patch.eval(grid.nodes_u[i], grid.nodes_v[j]));
  return auxiliary_coeffs(nodes, grid, k_aux);
}

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DenseTables {
  MatrixXcd single, adjoint;
};

ChebCoeffs2D to_table(const MatrixXcd& m) {
  ChebCoeffs2D t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int j = 0; j < t.nv(); ++j)
    for (int i = 0; i < t.nu(); ++i) t(i, j) = m(i, j);
  return t;
}

MatrixXcd to_matrix(const ChebCoeffs2D& t) {
  MatrixXcd m(t.nu(), t.nv());
  for (int j = 0; j < t.nv(); ++j)
    for (int i = 0; i < t.nu(); ++i) m(i, j) = t(i, j);
  return m;
}

KernelTables to_tables(const DenseTables& d) {
  KernelTables t;
  t.single = to_table(d.single);
  t.adjoint = to_table(d.adjoint);
  return t;
}

// B * sqrt|G| * J_cov at the tensor nodes (u_a, v_b) of one subpatch.
void sample_integrand(const TargetKernel& kernel, const Patch& patch, const CovMap& map,
                      std::span<const double> u, std::span<const double> v,
                      MatrixXcd& single, MatrixXcd& adjoint) {
  const auto na = static_cast<int>(u.size()), nb = static_cast<int>(v.size());
  const Subpatch& sub = map.subpatch();
  std::vector<double> ds(na), dt(nb);
  for (int a = 0; a < na; ++a) ds[a] = map.s_offset(u[a]);
  for (int b = 0; b < nb; ++b) dt[b] = map.t_offset(v[b]);
  // target - r(s,t) = (target - r(anchor)) - (r(s,t) - r(anchor)); the second
  // term keeps full relative accuracy as (s,t) approaches the anchor.
  TensorSamples geo;
  patch.sample_tensor_offset(sub.u0, sub.v0, ds, dt, geo);
  const Vec3 offset = kernel.position - patch.eval(sub.u0, sub.v0);
  single.resize(na, nb);
  adjoint.resize(na, nb);
  for (int b = 0; b < nb; ++b) {
    const double dtv = map.dt(v[b]);
    for (int a = 0; a < na; ++a) {
      const double w = geo.jacobian(a, b) * std::abs(map.ds(u[a]) * dtv);
      if (kernel.unit_kernel) {
        single(a, b) = adjoint(a, b) = w;
        continue;
      }
      const Vec3 d = offset - geo.r(a, b);
      if (w == 0.0 || d.squaredNorm() == 0.0) {
        // The change of variables makes the integrand vanish at its anchor.
        single(a, b) = adjoint(a, b) = 0.0;
        continue;
      }
      const KernelPair kp = kernel_pair_offset(kernel.k, d, kernel.normal);
      single(a, b) = kp.single * w;
      adjoint(a, b) = kp.adjoint * w;
    }
  }
}

MatrixXd cheb_rows(std::span<const double> x, int n) {
  MatrixXd t(static_cast<Eigen::Index>(x.size()), n);
  std::vector<double> row(n);
  for (std::size_t a = 0; a < x.size(); ++a) {
    chebyshev_t(x[a], row);
    for (int i = 0; i < n; ++i) t(static_cast<Eigen::Index>(a), i) = row[i];
  }
  return t;
}

MatrixXd cheb_rows_mapped(const CovMap& map, std::span<const double> u, int n, bool along_u) {
  std::vector<double> x(u.size());
  for (std::size_t a = 0; a < u.size(); ++a) x[a] = along_u ? map.s(u[a]) : map.t(u[a]);
  return cheb_rows(x, n);
}

// beta = Tu^T diag(wu) F diag(wv) Tv
MatrixXcd weigh(const MatrixXd& tu, const VectorXd& wu, const MatrixXcd& f, const VectorXd& wv,
                const MatrixXd& tv) {
  const MatrixXcd left = (tu.transpose() * wu.asDiagonal()).cast<Complex>();
  const MatrixXcd right = (wv.asDiagonal() * tv).cast<Complex>();
  return left * f * right;
}

Complex contract_dense(const MatrixXcd& a, const MatrixXcd& beta) { return a.cwiseProduct(beta).sum(); }

VectorXd as_vector(std::span<const double> x) {
  return Eigen::Map<const VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

struct DensePanel {
  Rect rect;
  DenseTables kk;
  std::array<Complex, 2> gg, gk, kg, kkv;  // contracted values per kernel
};

DensePanel make_gk_panel(const TargetKernel& kernel, const Patch& patch, const CovMap& map,
                         const Rect& rect, int n, int m, const MatrixXcd& aux, std::uint64_t& evals) {
  const auto ru = GaussKronrod15::on(rect.u0, rect.u1);
  const auto rv = GaussKronrod15::on(rect.v0, rect.v1);
  MatrixXcd fs, fd;
  sample_integrand(kernel, patch, map, ru.x, rv.x, fs, fd);
  evals += 15 * 15;
  const MatrixXd tu = cheb_rows_mapped(map, ru.x, n, true);
  const MatrixXd tv = cheb_rows_mapped(map, rv.x, m, false);
  const VectorXd wku = as_vector(ru.wk), wgu = as_vector(ru.wg);
  const VectorXd wkv = as_vector(rv.wk), wgv = as_vector(rv.wg);
  DensePanel p;
  p.rect = rect;
  p.kk.single = weigh(tu, wku, fs, wkv, tv);
  p.kk.adjoint = weigh(tu, wku, fd, wkv, tv);
  const std::array<const MatrixXcd*, 2> f = {&fs, &fd};
  const std::array<const MatrixXcd*, 2> kk = {&p.kk.single, &p.kk.adjoint};
  for (int c = 0; c < 2; ++c) {
    p.kkv[c] = contract_dense(aux, *kk[c]);
    p.gg[c] = contract_dense(aux, weigh(tu, wgu, *f[c], wgv, tv));
    p.gk[c] = contract_dense(aux, weigh(tu, wgu, *f[c], wkv, tv));
    p.kg[c] = contract_dense(aux, weigh(tu, wku, *f[c], wgv, tv));
  }
  return p;
}

}  // namespace

PanelEstimates gk_panel_estimates(const TargetKernel& kernel, const Patch& patch, const CovMap& map,
                                  const Rect& rect, int n, int m) {
  const auto ru = GaussKronrod15::on(rect.u0, rect.u1);
  const auto rv = GaussKronrod15::on(rect.v0, rect.v1);
  MatrixXcd fs, fd;
  sample_integrand(kernel, patch, map, ru.x, rv.x, fs, fd);
  KernelCounter::add(15 * 15);
  const MatrixXd tu = cheb_rows_mapped(map, ru.x, n, true);
  const MatrixXd tv = cheb_rows_mapped(map, rv.x, m, false);
  const VectorXd wku = as_vector(ru.wk), wgu = as_vector(ru.wg);
  const VectorXd wkv = as_vector(rv.wk), wgv = as_vector(rv.wg);
  auto both = [&](const VectorXd& wu, const VectorXd& wv) {
    return to_tables({weigh(tu, wu, fs, wv, tv), weigh(tu, wu, fd, wv, tv)});
  };
  PanelEstimates e;
  e.gg = both(wgu, wgv);
  e.gk = both(wgu, wkv);
  e.kg = both(wku, wgv);
  e.kk = both(wku, wkv);
  e.kernel_evals = 15 * 15;
  return e;
}

KernelTables tensor_rule_tables(const TargetKernel& kernel, const Patch& patch, const CovMap& map,
                                const Rule1D& rule_u, const Rule1D& rule_v, int n, int m) {
  MatrixXcd fs, fd;
  sample_integrand(kernel, patch, map, rule_u.nodes, rule_v.nodes, fs, fd);
  KernelCounter::add(rule_u.nodes.size() * rule_v.nodes.size());
  const MatrixXd tu = cheb_rows_mapped(map, rule_u.nodes, n, true);
  const MatrixXd tv = cheb_rows_mapped(map, rule_v.nodes, m, false);
  const VectorXd wu = as_vector(rule_u.weights), wv = as_vector(rule_v.weights);
  return to_tables({weigh(tu, wu, fs, wv, tv), weigh(tu, wu, fd, wv, tv)});
}

PrecompEntry gk_precompute(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                           const AdaptiveConfig& cfg, const ChebCoeffs2D& aux, GkTrace* trace) {
  const int n = aux.nu(), m = aux.nv();
  const MatrixXcd a = to_matrix(aux);
  const auto maps = cov_map(split_subpatches(proj.u0, proj.v0), cfg.cov_order);

  PrecompEntry e;
  e.projection = proj;
  std::uint64_t evals = 0;
  // One worklist spanning every subpatch; the acceptance test is global.
  struct Item {
    std::size_t map;
    DensePanel panel;
  };
  std::vector<Item> panels;
  for (std::size_t k = 0; k < maps.size(); ++k)
    panels.push_back({k, make_gk_panel(kernel, patch, maps[k], {}, n, m, a, evals)});

  const std::size_t max_panels = static_cast<std::size_t>(cfg.gk_max_panels) * maps.size();
  std::array<double, 2> err{}, tol{};
  for (;;) {
    std::array<Complex, 2> total{};
    err = {0.0, 0.0};
    for (const auto& it : panels)
      for (int c = 0; c < 2; ++c) {
        total[c] += it.panel.kkv[c];
        err[c] += std::abs(it.panel.kkv[c] - it.panel.gg[c]);
      }
    for (int c = 0; c < 2; ++c) tol[c] = cfg.tolerance(std::abs(total[c]));
    if (err[0] <= tol[0] && err[1] <= tol[1]) break;
    if (panels.size() >= max_panels) {
      e.converged = false;
      break;
    }
    auto score = [&](const std::array<Complex, 2>& lo, const std::array<Complex, 2>& hi) {
      double s = 0;
      for (int c = 0; c < 2; ++c)
        s = std::max(s, std::abs(hi[c] - lo[c]) / std::max(tol[c], std::numeric_limits<double>::min()));
      return s;
    };
    std::size_t worst = 0;
    double worst_score = -1;
    for (std::size_t p = 0; p < panels.size(); ++p) {
      const double s = score(panels[p].panel.gg, panels[p].panel.kkv);
      if (s > worst_score) {
        worst_score = s;
        worst = p;
      }
    }
    const Item victim = panels[worst];
    // Gauss along u (GK) versus Gauss along v (KG): bisect the worse direction.
    const double err_u = score(victim.panel.gk, victim.panel.kkv);
    const double err_v = score(victim.panel.kg, victim.panel.kkv);
    Rect lo = victim.panel.rect, hi = victim.panel.rect;
    if (err_u >= err_v) {
      const double mid = 0.5 * (lo.u0 + lo.u1);
      lo.u1 = mid;
      hi.u0 = mid;
    } else {
      const double mid = 0.5 * (lo.v0 + lo.v1);
      lo.v1 = mid;
      hi.v0 = mid;
    }
    const CovMap& map = maps[victim.map];
    panels[worst] = {victim.map, make_gk_panel(kernel, patch, map, lo, n, m, a, evals)};
    panels.push_back({victim.map, make_gk_panel(kernel, patch, map, hi, n, m, a, evals)});
    ++e.refinements;
  }

  if (trace) {
    trace->interval.clear();
    trace->rects.clear();
    for (const auto& it : panels) {
      trace->interval.push_back(it.map);
      trace->rects.push_back(it.panel.rect);
    }
  }
  DenseTables sum{MatrixXcd::Zero(n, m), MatrixXcd::Zero(n, m)};
  for (const auto& it : panels) {
    sum.single += it.panel.kk.single;
    sum.adjoint += it.panel.kk.adjoint;
  }
  e.beta = to_tables(sum);
  e.error_single = err[0];
  e.error_adjoint = err[1];
  e.tolerance_single = tol[0];
  e.tolerance_adjoint = tol[1];
  e.kernel_evals = evals;
  KernelCounter::add(evals);
  return e;
}

PrecompEntry cc_precompute(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                           const AdaptiveConfig& cfg, const ChebCoeffs2D& aux) {
  const int n = aux.nu(), m = aux.nv();
  const MatrixXcd a = to_matrix(aux);
  const auto maps = cov_map(split_subpatches(proj.u0, proj.v0), cfg.cov_order);

  PrecompEntry e;
  e.projection = proj;
  DenseTables sum{MatrixXcd::Zero(n, m), MatrixXcd::Zero(n, m)};
  std::uint64_t evals = 0;
  e.error_single = e.error_adjoint = 0;
  e.tolerance_single = e.tolerance_adjoint = 0;

  for (const CovMap& map : maps) {
    int big_m = cfg.cc_initial_order + 1;
    Rule1D rule = to_unit_interval(fejer2_rule(big_m));
    MatrixXcd fs, fd;
    sample_integrand(kernel, patch, map, rule.nodes, rule.nodes, fs, fd);
    evals += rule.nodes.size() * rule.nodes.size();

    auto tables = [&](const Rule1D& r, const MatrixXcd& f) {
      const MatrixXd tu = cheb_rows_mapped(map, r.nodes, n, true);
      const MatrixXd tv = cheb_rows_mapped(map, r.nodes, m, false);
      const VectorXd w = as_vector(r.weights);
      return weigh(tu, w, f, w, tv);
    };
    DenseTables cur{tables(rule, fs), tables(rule, fd)};
    std::array<Complex, 2> prev_val = {contract_dense(a, cur.single), contract_dense(a, cur.adjoint)};
    bool accepted = false;
    std::array<double, 2> diff{}, tol{};
    int depth = 1;
    for (int level = 2; level <= cfg.cc_max_depth; ++level) {
      depth = level;
      big_m *= 2;
      const Rule1D fine = to_unit_interval(fejer2_rule(big_m));
      const int np = big_m - 1;
      MatrixXcd gs(np, np), gd(np, np);
      // Old node k sits at index 2k+1 of the refined rule.
      for (int b = 0; b < fs.cols(); ++b)
        for (int aa = 0; aa < fs.rows(); ++aa) {
          gs(2 * aa + 1, 2 * b + 1) = fs(aa, b);
          gd(2 * aa + 1, 2 * b + 1) = fd(aa, b);
        }
      std::vector<double> even, odd;
      for (int k = 0; k < np; ++k) (k % 2 == 0 ? even : odd).push_back(fine.nodes[k]);
      MatrixXcd bs, bd;
      // Block 1: even u-index, all v.
      sample_integrand(kernel, patch, map, even, fine.nodes, bs, bd);
      for (int b = 0; b < np; ++b)
        for (std::size_t k = 0; k < even.size(); ++k) {
          gs(2 * static_cast<int>(k), b) = bs(static_cast<Eigen::Index>(k), b);
          gd(2 * static_cast<int>(k), b) = bd(static_cast<Eigen::Index>(k), b);
        }
      // Block 2: odd u-index, even v-index.
      sample_integrand(kernel, patch, map, odd, even, bs, bd);
      for (std::size_t l = 0; l < even.size(); ++l)
        for (std::size_t k = 0; k < odd.size(); ++k) {
          gs(2 * static_cast<int>(k) + 1, 2 * static_cast<int>(l)) = bs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
          gd(2 * static_cast<int>(k) + 1, 2 * static_cast<int>(l)) = bd(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
        }
      evals += even.size() * fine.nodes.size() + odd.size() * even.size();
      fs = std::move(gs);
      fd = std::move(gd);
      rule = fine;
      cur = {tables(rule, fs), tables(rule, fd)};
      const std::array<Complex, 2> val = {contract_dense(a, cur.single), contract_dense(a, cur.adjoint)};
      diff = {std::abs(val[0] - prev_val[0]), std::abs(val[1] - prev_val[1])};
      prev_val = val;
      tol = {cfg.tolerance(std::abs(val[0])), cfg.tolerance(std::abs(val[1]))};
      if (diff[0] <= tol[0] && diff[1] <= tol[1]) {
        accepted = true;
        break;
      }
    }
    if (!accepted) e.converged = false;
    e.refinements = std::max(e.refinements, depth);
    e.error_single += diff[0];
    e.error_adjoint += diff[1];
    e.tolerance_single += tol[0];
    e.tolerance_adjoint += tol[1];
    sum.single += cur.single;
    sum.adjoint += cur.adjoint;
  }
  e.beta = to_tables(sum);
  e.kernel_evals = evals;
  KernelCounter::add(evals);
  return e;
}

PrecompEntry fixed_precompute(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                              int n_beta, int cov_order, int n, int m) {
  if (n_beta < 2) throw DomainError("fixed_precompute: N_beta must be >= 2");
  const auto maps = cov_map(split_subpatches(proj.u0, proj.v0), cov_order);
  const Rule1D rule = to_unit_interval(cheb_nodes_weights(n_beta));
  PrecompEntry e;
  e.projection = proj;
  e.beta = KernelTables(n, m);
  for (const CovMap& map : maps) {
    e.beta += tensor_rule_tables(kernel, patch, map, rule, rule, n, m);
    e.kernel_evals += static_cast<std::uint64_t>(n_beta) * n_beta;
  }
  e.error_single = e.error_adjoint = std::numeric_limits<double>::quiet_NaN();
  e.tolerance_single = e.tolerance_adjoint = std::numeric_limits<double>::quiet_NaN();
  return e;
}

PrecompEntry precompute_entry(const TargetKernel& kernel, const Patch& patch, const Projection& proj,
                              const AdaptiveConfig& cfg, const ChebCoeffs2D& aux) {
  switch (cfg.scheme) {
    case Scheme::GaussKronrod: return gk_precompute(kernel, patch, proj, cfg, aux);
    case Scheme::ClenshawCurtis: return cc_precompute(kernel, patch, proj, cfg, aux);
    case Scheme::FixedFejer:
      return fixed_precompute(kernel, patch, proj, cfg.n_beta, cfg.cov_order, aux.nu(), aux.nv());
  }
  throw DomainError("unknown scheme");
}

PatchPrecomp determine_near_far(const SurfaceGrid& surface, std::size_t patch_index, double k0,
                                const AdaptiveConfig& cfg, const ChebCoeffs2D& aux) {
  const Patch& patch = surface.mesh().patches[patch_index];
  const ChebGrid& grid = surface.grid();
  const std::size_t per = surface.nodes_per_patch();
  const auto own = surface.patch_positions(patch_index);
  const double k_aux = cfg.aux_factor * k0;

  PatchPrecomp out;
  NearFarEntry& nf = out.near_far;

  auto make_entry = [&](std::uint64_t target, const Projection& proj) {
    const GeometryFrame& f = surface.frame(target);
    PrecompEntry e = precompute_entry({k0, f.position, f.normal, false}, patch, proj, cfg, aux);
    e.patch = static_cast<std::uint32_t>(patch_index);
    e.target = target;
    if (!e.converged) ++nf.not_converged;
    return e;
  };

  // Self-singular interactions.
  for (int j = 0; j < grid.n_v; ++j)
    for (int i = 0; i < grid.n_u; ++i) {
      const std::uint64_t g = surface.global_index(patch_index, i, j);
      out.entries.push_back(make_entry(g, node_projection(grid.nodes_u[i], grid.nodes_v[j])));
      nf.near_targets.push_back(g);
    }

  // Candidates within the cap, ascending proxy distance.
  const double cap = 2.0 * patch.diameter();
  struct Candidate {
    double proxy;
    std::uint64_t node;
  };
  std::vector<Candidate> candidates;
  for (std::uint64_t g = 0; g < surface.node_count(); ++g) {
    if (surface.patch_of(g) == patch_index) continue;
    const double d = patch_proxy_distance(own, surface.frame(g).position);
    if (d <= cap)
      candidates.push_back({d, g});
    else
      nf.far_targets.push_back(g);
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.proxy < b.proxy || (a.proxy == b.proxy && a.node < b.node);
  });

  std::vector<Complex> aux_weighted(per);
  for (std::size_t q = 0; q < per; ++q)
    aux_weighted[q] = std::exp(Complex(0.0, k_aux * own[q].z())) *
                      surface.quadrature_weight(patch_index * per + q);

  std::size_t run = 0;
  std::size_t cutoff = candidates.size();
  std::vector<double> run_distance;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::uint64_t g = candidates[c].node;
    const GeometryFrame& f = surface.frame(g);
    const Projection proj = project_to_patch(f.position, patch);
    PrecompEntry e = make_entry(g, proj);

    bool pass = false;
    if (!cfg.force_near) {
      const Complex near_s = contract(aux, e.beta.single);
      const Complex near_d = contract(aux, e.beta.adjoint);
      Complex far_s{}, far_d{};
      for (std::size_t q = 0; q < per; ++q) {
        const KernelPair kp = kernel_pair(k0, f.position, f.normal, own[q]);
        far_s += kp.single * aux_weighted[q];
        far_d += kp.adjoint * aux_weighted[q];
      }
      KernelCounter::add(per);
      nf.far_check_evals += per;
      pass = std::abs(far_s - near_s) <= cfg.tolerance(std::abs(near_s)) &&
             std::abs(far_d - near_d) <= cfg.tolerance(std::abs(near_d));
    }
    out.entries.push_back(std::move(e));
    nf.near_targets.push_back(g);
    if (pass) {
      if (run == 0) run_distance.assign(1, proj.distance);
      ++run;
      if (run >= static_cast<std::size_t>(cfg.consecutive_far_passes)) {
        cutoff = c + 1 - run;
        break;
      }
    } else {
      run = 0;
    }
  }

  if (cutoff < candidates.size()) {
    nf.delta_near = run_distance.front();
    // The passing run becomes far along with everything after it.
    for (std::size_t r = 0; r < run; ++r) {
      if (!out.entries.back().converged) --nf.not_converged;
      nf.discarded_evals += out.entries.back().kernel_evals;
      out.entries.pop_back();
      nf.near_targets.pop_back();
    }
    // Proxy order and projection order can disagree slightly; lowering the
    // cutoff to the closest far candidate keeps every far target at or
    // beyond it.
    for (std::size_t c = cutoff; c < candidates.size(); ++c) {
      nf.far_targets.push_back(candidates[c].node);
      if (c > cutoff)
        nf.delta_near = std::min(nf.delta_near,
                                 project_to_patch(surface.frame(candidates[c].node).position, patch).distance);
    }
  } else {
    nf.delta_near = cap;
    nf.cap_reached = true;
  }
  std::sort(nf.far_targets.begin(), nf.far_targets.end());
  return out;
}

PrecompTable::PrecompTable(std::size_t patches, std::size_t nodes) : by_patch_(patches), by_target_(nodes) {}

void PrecompTable::set_patch(std::size_t patch, std::vector<PrecompEntry> entries) {
  by_patch_[patch] = std::move(entries);
}

const PrecompEntry* PrecompTable::find(std::size_t patch, std::uint64_t target) const {
  for (const auto& e : by_patch_[patch])
    if (e.target == target) return &e;
  return nullptr;
}

void PrecompTable::rebuild_index() {
  for (auto& v : by_target_) v.clear();
  for (std::size_t p = 0; p < by_patch_.size(); ++p)
    for (const auto& e : by_patch_[p]) by_target_[e.target].push_back({static_cast<std::uint32_t>(p), &e});
}

std::size_t PrecompTable::entry_count() const {
  std::size_t n = 0;
  for (const auto& v : by_patch_) n += v.size();
  return n;
}

std::uint64_t PrecompTable::memory_bytes(int n, int m) const {
  return entry_count() * (2ull * 16ull * static_cast<std::uint64_t>(n) * m + kIndexBytesPerEntry);
}

Precomputation build_precomputation(const SurfaceGrid& surface, double k0, const AdaptiveConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t counter0 = KernelCounter::value();
  const std::size_t np = surface.patch_count();

  std::vector<PatchPrecomp> per_patch(np);
  parallel_for(np, [&](std::size_t p) {
    const ChebCoeffs2D aux = auxiliary_coeffs(surface.patch_positions(p), surface.grid(), cfg.aux_factor * k0);
    per_patch[p] = determine_near_far(surface, p, k0, cfg, aux);
  });

  Precomputation pre;
  pre.config = cfg;
  pre.k0 = k0;
  pre.table = PrecompTable(np, surface.node_count());
  pre.near_far.resize(np);
  for (std::size_t p = 0; p < np; ++p) {
    for (const auto& e : per_patch[p].entries) pre.recounted_kernel_evals += e.kernel_evals;
    pre.recounted_kernel_evals += per_patch[p].near_far.far_check_evals + per_patch[p].near_far.discarded_evals;
    pre.not_converged += per_patch[p].near_far.not_converged;
    if (per_patch[p].near_far.cap_reached) ++pre.capped_patches;
    pre.near_far[p] = std::move(per_patch[p].near_far);
    pre.table.set_patch(p, std::move(per_patch[p].entries));
  }
  pre.table.rebuild_index();
  pre.metrics.kernel_evals = KernelCounter::value() - counter0;
  pre.metrics.precompute_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pre.metrics.precompute_bytes = pre.table.memory_bytes(surface.grid().n_u, surface.grid().n_v);
  if (pre.capped_patches > 0 && !cfg.force_near)
    std::cerr << "warning: near/far cutoff not reached within the candidate cap on " << pre.capped_patches
              << " patch(es)\n";
  return pre;
}

// ---------------------------------------------------------------------------
// Binary cache

namespace {

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'B', 'I', 'E', 'P', 'C', '0', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string precomp_cache_key(const SurfaceGrid& surface, double k0, const AdaptiveConfig& cfg) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << fnv1a(mesh_to_json(surface.mesh())) << '-'
     << std::setw(16) << std::bit_cast<std::uint64_t>(k0) << '-' << std::setw(16)
     << fnv1a(cfg.fingerprint() + ";n=" + std::to_string(surface.grid().n_u) +
              ";m=" + std::to_string(surface.grid().n_v));
  return os.str();
}

void save_precomp_cache(const Precomputation& pre, const SurfaceGrid& surface, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write cache " + path.string());
  const std::uint32_t n = surface.grid().n_u, m = surface.grid().n_v;
  os.write(kMagic, sizeof(kMagic));
  put(os, n);
  put(os, m);
  put(os, static_cast<std::uint64_t>(surface.patch_count()));
  put(os, static_cast<std::uint64_t>(pre.table.entry_count()));
  for (std::size_t p = 0; p < pre.table.patch_count(); ++p)
    for (const auto& e : pre.table.patch_entries(p)) {
      put(os, e.patch);
      put(os, e.target);
      put(os, e.error());
      for (const auto* t : {&e.beta.single, &e.beta.adjoint})
        for (std::size_t k = 0; k < t->size(); ++k) {
          put(os, (*t)[k].real());
          put(os, (*t)[k].imag());
        }
    }
  for (const auto& nf : pre.near_far) {
    put(os, nf.delta_near);
    put(os, static_cast<std::uint8_t>(nf.cap_reached));
  }
}

std::optional<Precomputation> load_precomp_cache(const SurfaceGrid& surface, double k0,
                                                 const AdaptiveConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[8];
  std::uint32_t n = 0, m = 0;
  std::uint64_t patches = 0, entries = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) return std::nullopt;
  if (!get(is, n) || !get(is, m) || !get(is, patches) || !get(is, entries)) return std::nullopt;
  if (n != static_cast<std::uint32_t>(surface.grid().n_u) || m != static_cast<std::uint32_t>(surface.grid().n_v) ||
      patches != surface.patch_count())
    return std::nullopt;

  Precomputation pre;
  pre.config = cfg;
  pre.k0 = k0;
  pre.table = PrecompTable(patches, surface.node_count());
  pre.near_far.resize(patches);
  std::vector<std::vector<PrecompEntry>> by_patch(patches);
  for (std::uint64_t r = 0; r < entries; ++r) {
    PrecompEntry e;
    double err = 0;
    if (!get(is, e.patch) || !get(is, e.target) || !get(is, err)) return std::nullopt;
    if (e.patch >= patches || e.target >= surface.node_count()) return std::nullopt;
    e.error_single = e.error_adjoint = err;
    e.beta = KernelTables(static_cast<int>(n), static_cast<int>(m));
    for (auto* t : {&e.beta.single, &e.beta.adjoint})
      for (std::size_t k = 0; k < t->size(); ++k) {
        double re = 0, im = 0;
        if (!get(is, re) || !get(is, im)) return std::nullopt;
        (*t)[k] = {re, im};
      }
    pre.near_far[e.patch].near_targets.push_back(e.target);
    by_patch[e.patch].push_back(std::move(e));
  }
  for (std::size_t p = 0; p < patches; ++p) {
    std::uint8_t capped = 0;
    if (!get(is, pre.near_far[p].delta_near) || !get(is, capped)) return std::nullopt;
    pre.near_far[p].cap_reached = capped != 0;
    std::vector<char> is_near(surface.node_count(), 0);
    for (auto t : pre.near_far[p].near_targets) is_near[t] = 1;
    for (std::uint64_t g = 0; g < surface.node_count(); ++g)
      if (!is_near[g]) pre.near_far[p].far_targets.push_back(g);
    pre.table.set_patch(p, std::move(by_patch[p]));
  }
  pre.table.rebuild_index();
  pre.metrics.precompute_bytes = pre.table.memory_bytes(static_cast<int>(n), static_cast<int>(m));
  return pre;
}

}  // namespace cbie
