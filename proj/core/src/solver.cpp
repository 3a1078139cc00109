#include "cbie/solver.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "cbie/parallel.hpp"

namespace cbie {

std::vector<Complex> SurfaceDensity::flatten() const {
  std::vector<Complex> x(2 * size());
  for (std::size_t g = 0; g < size(); ++g) {
    x[2 * g] = ju[g];
    x[2 * g + 1] = jv[g];
  }
  return x;
}

SurfaceDensity SurfaceDensity::unflatten(std::span<const Complex> x) {
  if (x.size() % 2 != 0) throw ShapeMismatch("density vector must have even length");
  SurfaceDensity d(x.size() / 2);
  for (std::size_t g = 0; g < d.size(); ++g) {
    d.ju[g] = x[2 * g];
    d.jv[g] = x[2 * g + 1];
  }
  return d;
}

bool SurfaceDensity::all_finite() const {
  auto ok = [](const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); };
  return std::all_of(ju.begin(), ju.end(), ok) && std::all_of(jv.begin(), jv.end(), ok);
}

std::vector<Vec3c> to_cartesian(const SurfaceGrid& surface, const SurfaceDensity& d) {
  if (d.size() != surface.node_count()) throw ShapeMismatch("density does not match the surface grid");
  std::vector<Vec3c> out(d.size());
  for (std::size_t g = 0; g < d.size(); ++g) {
    const GeometryFrame& f = surface.frame(g);
    out[g] = d.ju[g] * f.e_u.cast<Complex>() + d.jv[g] * f.e_v.cast<Complex>();
  }
  return out;
}

SurfaceDensity from_cartesian(const SurfaceGrid& surface, std::span<const Vec3c> j) {
  if (j.size() != surface.node_count()) throw ShapeMismatch("samples do not match the surface grid");
  SurfaceDensity d(j.size());
  for (std::size_t g = 0; g < j.size(); ++g) {
    const GeometryFrame& f = surface.frame(g);
    d.ju[g] = f.e_u_contra.cast<Complex>().dot(j[g]);
    d.jv[g] = f.e_v_contra.cast<Complex>().dot(j[g]);
  }
  return d;
}

SurfaceDensity incident_rhs(const SurfaceGrid& surface, double k0, Complex amplitude) {
  std::vector<Vec3c> nxh(surface.node_count());
  for (std::size_t g = 0; g < nxh.size(); ++g) {
    const GeometryFrame& f = surface.frame(g);
    const Complex phase = amplitude * std::exp(Complex(0.0, k0 * f.position.z()));
    nxh[g] = f.normal.cross(Vec3::UnitY()).cast<Complex>() * phase;
  }
  return from_cartesian(surface, nxh);
}

LayerOutput apply_layers(const SurfaceGrid& surface, const Precomputation& pre,
                         const std::vector<std::vector<Complex>>& densities, LayerRequest request) {
  const std::size_t nc = densities.size();
  const std::size_t nodes = surface.node_count();
  const std::size_t per = surface.nodes_per_patch();
  const std::size_t np = surface.patch_count();
  const ChebGrid& grid = surface.grid();
  for (const auto& d : densities)
    if (d.size() != nodes) throw ShapeMismatch("apply_layers: density length mismatch");

  // Far-rule samples f * sqrt|G| w and near-rule coefficients of bare f.
  std::vector<Complex> weighted(nc * nodes);
  std::vector<ChebCoeffs2D> coeffs(nc * np);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t q = 0; q < nodes; ++q) weighted[c * nodes + q] = densities[c][q] * surface.quadrature_weight(q);
  parallel_for(np, [&](std::size_t p) {
    for (std::size_t c = 0; c < nc; ++c) {
      Table2D<Complex> samples(grid.n_u, grid.n_v);
      std::copy_n(densities[c].begin() + static_cast<std::ptrdiff_t>(p * per), per, samples.data());
      coeffs[c * np + p] = cheb_coeffs_2d_fast(samples, grid);
    }
  });

  LayerOutput out;
  if (request.single) out.single.assign(nc, std::vector<Complex>(nodes));
  if (request.adjoint) out.adjoint.assign(nc, std::vector<Complex>(nodes));
  const double k = pre.k0;

  parallel_for(nodes, [&](std::size_t t) {
    const GeometryFrame& ft = surface.frame(t);
    const auto& near = pre.table.near_of(t);
    std::vector<Complex> acc_s(nc), acc_d(nc);
    std::size_t next_near = 0;
    for (std::size_t p = 0; p < np; ++p) {
      if (next_near < near.size() && near[next_near].patch == p) {
        const PrecompEntry& e = *near[next_near++].entry;
        for (std::size_t c = 0; c < nc; ++c) {
          const ChebCoeffs2D& a = coeffs[c * np + p];
          if (request.single) acc_s[c] += contract(a, e.beta.single);
          if (request.adjoint) acc_d[c] += contract(a, e.beta.adjoint);
        }
        continue;
      }
      const auto pos = surface.patch_positions(p);
      for (std::size_t q = 0; q < per; ++q) {
        const KernelPair kp = kernel_pair(k, ft.position, ft.normal, pos[q]);
        const std::size_t src = p * per + q;
        for (std::size_t c = 0; c < nc; ++c) {
          const Complex f = weighted[c * nodes + src];
          acc_s[c] += kp.single * f;
          acc_d[c] += kp.adjoint * f;
        }
      }
    }
    if (next_near != near.size()) throw Error("apply_layers: near list is not ordered by patch");
    for (std::size_t c = 0; c < nc; ++c) {
      if (request.single) out.single[c][t] = acc_s[c];
      if (request.adjoint) out.adjoint[c][t] = acc_d[c];
    }
  });

  std::uint64_t far_pairs = 0;
  for (std::size_t t = 0; t < nodes; ++t) far_pairs += (np - pre.table.near_of(t).size()) * per;
  KernelCounter::add(far_pairs);
  return out;
}

std::vector<Complex> apply_scalar_operator(const SurfaceGrid& surface, const Precomputation& pre,
                                           std::span<const Complex> density, ScalarOperator op) {
  const bool single = op == ScalarOperator::SingleLayer;
  auto out = apply_layers(surface, pre, {std::vector<Complex>(density.begin(), density.end())},
                          {single, !single});
  return single ? std::move(out.single[0]) : std::move(out.adjoint[0]);
}

MfieOperator::MfieOperator(const SurfaceGrid& surface, const Precomputation& pre)
    : surface_(surface), pre_(pre) {
  diff_u_ = cheb_diff_matrix(surface.grid().n_u);
  diff_v_ = cheb_diff_matrix(surface.grid().n_v);
  if (pre.table.patch_count() != surface.patch_count())
    throw ShapeMismatch("precomputation was built for a different mesh");
  const std::size_t per = surface.nodes_per_patch();
  for (std::size_t t = 0; t < surface.node_count(); ++t)
    evals_per_apply_ += (surface.patch_count() - pre.table.near_of(t).size()) * per;
}

SurfaceDensity MfieOperator::apply_K(const SurfaceDensity& j) const {
  const auto cart = to_cartesian(surface_, j);
  const std::size_t nodes = surface_.node_count();
  std::vector<std::vector<Complex>> comps(3, std::vector<Complex>(nodes));
  for (std::size_t g = 0; g < nodes; ++g)
    for (int c = 0; c < 3; ++c) comps[c][g] = cart[g](c);
  const LayerOutput layers = apply_layers(surface_, pre_, comps);

  const int n = surface_.grid().n_u, m = surface_.grid().n_v;
  std::vector<Vec3c> k_cart(nodes);
  parallel_for(surface_.patch_count(), [&](std::size_t p) {
    const std::size_t base = p * surface_.nodes_per_patch();
    for (int jv = 0; jv < m; ++jv)
      for (int iu = 0; iu < n; ++iu) {
        const std::size_t g = base + iu + static_cast<std::size_t>(n) * jv;
        const GeometryFrame& f = surface_.frame(g);
        // n . dS/du and n . dS/dv from the spectral derivative on this patch.
        Complex ndu{}, ndv{};
        for (int c = 0; c < 3; ++c) {
          const auto& s = layers.single[c];
          Complex du{}, dv{};
          for (int l = 0; l < n; ++l)
            du += diff_u_[static_cast<std::size_t>(iu) * n + l] * s[base + l + static_cast<std::size_t>(n) * jv];
          for (int l = 0; l < m; ++l)
            dv += diff_v_[static_cast<std::size_t>(jv) * m + l] * s[base + iu + static_cast<std::size_t>(n) * l];
          ndu += f.normal(c) * du;
          ndv += f.normal(c) * dv;
        }
        Vec3c d(layers.adjoint[0][g], layers.adjoint[1][g], layers.adjoint[2][g]);
        k_cart[g] = d - f.e_u_contra.cast<Complex>() * ndu - f.e_v_contra.cast<Complex>() * ndv;
      }
  });
  return from_cartesian(surface_, k_cart);
}

std::vector<Complex> MfieOperator::apply(std::span<const Complex> x) const {
  if (x.size() != unknowns()) throw ShapeMismatch("MFIE apply: vector length mismatch");
  auto y = apply_K(SurfaceDensity::unflatten(x)).flatten();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += 0.5 * x[k];
  return y;
}

namespace {

double norm2(std::span<const Complex> v) {
  double s = 0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

}  // namespace

GmresResult gmres(const LinearMap& a, std::span<const Complex> b, const GmresOptions& opt) {
  const std::size_t n = b.size();
  GmresResult res;
  res.x.assign(n, Complex{});
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  using Vec = Eigen::VectorXcd;
  auto to_vec = [](const std::vector<Complex>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); };
  const Eigen::Map<const Vec> bv(b.data(), static_cast<Eigen::Index>(n));
  Eigen::Map<Vec> x(res.x.data(), static_cast<Eigen::Index>(n));
  const int restart = std::max(1, opt.restart);

  auto residual = [&]() -> Vec { return bv - to_vec(a(res.x)); };
  Vec r = residual();
  double rel = r.norm() / bnorm;

  while (rel > opt.tol && res.iterations < opt.max_iters) {
    std::vector<Vec> basis;
    basis.reserve(restart + 1);
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(restart + 1, restart);
    std::vector<Complex> cs(restart), sn(restart);
    Vec g = Vec::Zero(restart + 1);
    const double beta = r.norm();
    g(0) = beta;
    basis.push_back(r / beta);
    int k = 0;
    for (; k < restart && res.iterations < opt.max_iters; ++k) {
      const std::vector<Complex> vk(basis[k].data(), basis[k].data() + n);
      Vec w = to_vec(a(vk));
      ++res.iterations;
      // Modified Gram-Schmidt.
      for (int i = 0; i <= k; ++i) {
        h(i, k) = basis[i].dot(w);
        w -= h(i, k) * basis[i];
      }
      h(k + 1, k) = w.norm();
      for (int i = 0; i < k; ++i) {
        const Complex t = std::conj(cs[i]) * h(i, k) + std::conj(sn[i]) * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      const double hk = std::abs(h(k, k)), hk1 = std::abs(h(k + 1, k));
      const double den = std::hypot(hk, hk1);
      if (den == 0.0) {
        cs[k] = 1.0;
        sn[k] = 0.0;
      } else {
        cs[k] = h(k, k) / den;
        sn[k] = h(k + 1, k) / den;
      }
      h(k, k) = den;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn[k] * g(k);
      g(k) = std::conj(cs[k]) * g(k);
      const double hnext = w.norm();
      if (hnext > 0) basis.push_back(w / hnext);
      if (std::abs(g(k + 1)) / bnorm <= opt.tol || hnext == 0.0) {
        ++k;
        break;
      }
    }
    const Vec y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    for (int i = 0; i < k; ++i) x += y(i) * basis[i];
    r = residual();
    rel = r.norm() / bnorm;
  }
  res.residual = rel;
  res.converged = rel <= opt.tol;
  return res;
}

std::vector<Complex> dense_solve(const LinearMap& a, std::size_t n, std::span<const Complex> b) {
  if (n > kDenseLimit) throw DomainError("dense_solve: too many unknowns for the dense fallback");
  if (b.size() != n) throw ShapeMismatch("dense_solve: rhs length mismatch");
  Eigen::MatrixXcd mat(n, n);
  std::vector<Complex> e(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::fill(e.begin(), e.end(), Complex{});
    e[c] = 1.0;
    const auto col = a(e);
    for (std::size_t r = 0; r < n; ++r) mat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[r];
  }
  const Eigen::VectorXcd rhs = Eigen::Map<const Eigen::VectorXcd>(b.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXcd x = mat.partialPivLu().solve(rhs);
  return {x.data(), x.data() + n};
}

SolveResult solve_mfie(const SurfaceGrid& surface, const Precomputation& pre, const SolveOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  const MfieOperator op(surface, pre);
  const std::vector<Complex> b = incident_rhs(surface, pre.k0).flatten();
  const std::uint64_t counter0 = KernelCounter::value();
  LinearMap a = [&op](std::span<const Complex> x) { return op.apply(x); };

  SolveResult out;
  SolveReport& rep = out.report;
  if (opt.dense) {
    const auto x = dense_solve(a, op.unknowns(), b);
    const auto ax = a(x);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      num += std::norm(ax[k] - b[k]);
      den += std::norm(b[k]);
    }
    rep.residual = den > 0 ? std::sqrt(num / den) : 0.0;
    rep.converged = true;
    out.density = SurfaceDensity::unflatten(x);
  } else {
    const GmresResult g = gmres(a, b, opt.gmres);
    rep.iterations = g.iterations;
    rep.residual = g.residual;
    rep.converged = g.converged;
    out.density = SurfaceDensity::unflatten(g.x);
  }
  rep.matvec_kernel_evals = KernelCounter::value() - counter0;
  rep.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rep.unknowns = op.unknowns();
  rep.precompute_seconds = pre.metrics.precompute_seconds;
  rep.metrics = pre.metrics;
  rep.not_converged_entries = pre.not_converged;
  rep.capped_patches = pre.capped_patches;
  rep.recounted_kernel_evals = pre.recounted_kernel_evals;
  rep.precomp_entries = pre.table.entry_count();
  return out;
}

FullSolve solve_mfie(const Mesh& mesh, double k0, const AdaptiveConfig& cfg, const SolveOptions& opt) {
  FullSolve fs;
  fs.surface = std::make_unique<SurfaceGrid>(mesh, opt.n, opt.m);
  fs.pre = build_precomputation(*fs.surface, k0, cfg);
  fs.result = solve_mfie(*fs.surface, fs.pre, opt);
  return fs;
}

}  // namespace cbie
