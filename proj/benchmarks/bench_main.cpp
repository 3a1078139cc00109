#include <benchmark/benchmark.h>

#include <random>

#include "cbie/adaptive.hpp"
#include "cbie/singular.hpp"
#include "cbie/solver.hpp"

using namespace cbie;

namespace {

const double kK0 = 2 * kPi;

struct Problem {
  Mesh mesh = make_sphere_mesh(1.0, 2);
  SurfaceGrid surface;
  Precomputation pre;
  explicit Problem(int n, double tol) : surface(mesh, n, n) {
    AdaptiveConfig cfg;
    cfg.tol_rel = tol;
    pre = build_precomputation(surface, kK0, cfg);
  }
};

void BM_MfieApply(benchmark::State& state) {
  static const Problem prob(static_cast<int>(state.range(0)), 1e-6);
  const MfieOperator op(prob.surface, prob.pre);
  std::vector<Complex> x(op.unknowns(), Complex(1.0, 0.5));
  for (auto _ : state) benchmark::DoNotOptimize(op.apply(x));
  state.counters["unknowns"] = static_cast<double>(op.unknowns());
}
BENCHMARK(BM_MfieApply)->Arg(6)->Unit(benchmark::kMillisecond);

struct Target {
  Patch patch = make_sphere_mesh(1.0, 2).patches[9];
  TargetKernel kernel;
  Projection proj;
  ChebCoeffs2D aux;
  Target(double height, int n) {
    const auto f = patch.frame(0.23, -0.41);
    kernel = {kK0, f.position + height * patch.diameter() * f.normal, f.normal, false};
    proj = project_to_patch(kernel.position, patch);
    aux = auxiliary_coeffs(patch, ChebGrid(n, n), 1.1 * kK0);
  }
};

void BM_GkPanel(benchmark::State& state) {
  const Target t(0.1, 10);
  const CovMap map(Subpatch{t.proj.u0, t.proj.v0, 1.0, 1.0}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(gk_panel_estimates(t.kernel, t.patch, map, {}, 10, 10));
}
BENCHMARK(BM_GkPanel)->Unit(benchmark::kMicrosecond);

void BM_NearEntry(benchmark::State& state) {
  const Target t(0.05, 10);
  AdaptiveConfig cfg;
  cfg.scheme = state.range(0) ? Scheme::ClenshawCurtis : Scheme::GaussKronrod;
  for (auto _ : state) benchmark::DoNotOptimize(precompute_entry(t.kernel, t.patch, t.proj, cfg, t.aux));
  state.SetLabel(to_string(cfg.scheme));
}
BENCHMARK(BM_NearEntry)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Projection(benchmark::State& state) {
  const Patch p = make_sphere_mesh(1.0, 2).patches[9];
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-0.6, 0.6);
  std::vector<Vec3> pts(256);
  for (auto& x : pts) x = p.eval(0, 0) + Vec3(d(rng), d(rng), d(rng));
  std::size_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(project_to_patch(pts[k++ % pts.size()], p));
}
BENCHMARK(BM_Projection);

}  // namespace

BENCHMARK_MAIN();
