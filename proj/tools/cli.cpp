#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cbie/parallel.hpp"

namespace cbie::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Input problems that are not library errors (bad flags, unknown keys...).
class InputError : public Error {
 public:
  using Error::Error;
};

template <class T>
void take(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ParseError("config: unknown key '" + key + "' in " + where);
  }
}

json adaptive_to_json(const AdaptiveConfig& a) {
  return {{"tol_abs", a.tol_abs},
          {"tol_rel", a.tol_rel},
          {"scheme", to_string(a.scheme)},
          {"gk_max_panels", a.gk_max_panels},
          {"cc_initial_order", a.cc_initial_order},
          {"cc_max_depth", a.cc_max_depth},
          {"cov_order", a.cov_order},
          {"aux_factor", a.aux_factor},
          {"n_beta", a.n_beta},
          {"consecutive_far_passes", a.consecutive_far_passes},
          {"force_near", a.force_near}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed for " + path.string());
}

bool is_builtin_sphere(const RunConfig& cfg) { return cfg.geometry.type == "sphere"; }

std::vector<Direction2> sweep_directions(const SweepSpec& s) {
  return theta_sweep(s.theta_start, s.theta_stop, s.theta_step, s.phi);
}

std::vector<Vec3> node_positions(const SurfaceGrid& surface) {
  std::vector<Vec3> pts(surface.node_count());
  for (std::size_t g = 0; g < pts.size(); ++g) pts[g] = surface.frame(g).position;
  return pts;
}

}  // namespace

void RunConfig::validate() const {
  if (!(wavelength > 0)) throw DomainError("wavelength must be positive");
  if (order < 4 || order > 24) throw DomainError("order must be in [4, 24]");
  if (!(adaptive.tol_abs > 0) || !(adaptive.tol_rel > 0)) throw DomainError("tolerances must be positive");
  adaptive.validate();
  if (!(gmres.tol > 0)) throw DomainError("gmres tolerance must be positive");
  if (gmres.max_iters < 0 || gmres.restart < 1) throw DomainError("invalid GMRES settings");
  if (!(sweep.theta_step > 0) || sweep.theta_stop < sweep.theta_start)
    throw DomainError("invalid theta sweep");
  const auto& g = geometry;
  if (g.type == "sphere") {
    if (!(g.diameter > 0) || g.refinement < 1) throw DomainError("invalid sphere parameters");
  } else if (g.type == "toroid") {
    if (!(g.d_out > g.d_in) || !(g.d_in > 0) || g.n_major < 3 || g.n_minor < 3)
      throw DomainError("invalid toroid parameters");
  } else if (g.type == "mesh") {
    if (g.path.empty()) throw DomainError("geometry type 'mesh' needs a path");
  } else {
    throw DomainError("unknown geometry type '" + g.type + "'");
  }
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config: top level must be an object");
  reject_unknown(j, {"geometry", "wavelength", "order", "adaptive", "gmres", "dense", "output_dir", "cache_dir", "sweep"},
                 "config");
  RunConfig cfg;
  if (j.contains("geometry")) {
    const json& g = j.at("geometry");
    reject_unknown(g, {"type", "diameter", "refinement", "non_uniform", "d_out", "d_in", "n_major", "n_minor", "path"},
                   "geometry");
    take(g, "type", cfg.geometry.type);
    take(g, "diameter", cfg.geometry.diameter);
    take(g, "refinement", cfg.geometry.refinement);
    take(g, "non_uniform", cfg.geometry.non_uniform);
    take(g, "d_out", cfg.geometry.d_out);
    take(g, "d_in", cfg.geometry.d_in);
    take(g, "n_major", cfg.geometry.n_major);
    take(g, "n_minor", cfg.geometry.n_minor);
    take(g, "path", cfg.geometry.path);
  }
  take(j, "wavelength", cfg.wavelength);
  take(j, "order", cfg.order);
  if (j.contains("adaptive")) {
    const json& a = j.at("adaptive");
    reject_unknown(a, {"tol_abs", "tol_rel", "scheme", "gk_max_panels", "cc_initial_order", "cc_max_depth", "cov_order",
                       "aux_factor", "n_beta", "consecutive_far_passes", "force_near"},
                   "adaptive");
    auto& ad = cfg.adaptive;
    take(a, "tol_abs", ad.tol_abs);
    take(a, "tol_rel", ad.tol_rel);
    std::string scheme = to_string(ad.scheme);
    take(a, "scheme", scheme);
    ad.scheme = scheme_from_string(scheme);
    take(a, "gk_max_panels", ad.gk_max_panels);
    take(a, "cc_initial_order", ad.cc_initial_order);
    take(a, "cc_max_depth", ad.cc_max_depth);
    take(a, "cov_order", ad.cov_order);
    take(a, "aux_factor", ad.aux_factor);
    take(a, "n_beta", ad.n_beta);
    take(a, "consecutive_far_passes", ad.consecutive_far_passes);
    take(a, "force_near", ad.force_near);
  }
  if (j.contains("gmres")) {
    const json& g = j.at("gmres");
    reject_unknown(g, {"tol", "max_iters", "restart"}, "gmres");
    take(g, "tol", cfg.gmres.tol);
    take(g, "max_iters", cfg.gmres.max_iters);
    take(g, "restart", cfg.gmres.restart);
  }
  take(j, "dense", cfg.dense);
  take(j, "output_dir", cfg.output_dir);
  take(j, "cache_dir", cfg.cache_dir);
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    reject_unknown(s, {"theta_start", "theta_stop", "theta_step", "phi"}, "sweep");
    take(s, "theta_start", cfg.sweep.theta_start);
    take(s, "theta_stop", cfg.sweep.theta_stop);
    take(s, "theta_step", cfg.sweep.theta_step);
    take(s, "phi", cfg.sweep.phi);
  }
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  const auto& g = cfg.geometry;
  json j = {{"geometry",
             {{"type", g.type},
              {"diameter", g.diameter},
              {"refinement", g.refinement},
              {"non_uniform", g.non_uniform},
              {"d_out", g.d_out},
              {"d_in", g.d_in},
              {"n_major", g.n_major},
              {"n_minor", g.n_minor},
              {"path", g.path}}},
            {"wavelength", cfg.wavelength},
            {"order", cfg.order},
            {"adaptive", adaptive_to_json(cfg.adaptive)},
            {"gmres", {{"tol", cfg.gmres.tol}, {"max_iters", cfg.gmres.max_iters}, {"restart", cfg.gmres.restart}}},
            {"dense", cfg.dense},
            {"output_dir", cfg.output_dir},
            {"cache_dir", cfg.cache_dir},
            {"sweep",
             {{"theta_start", cfg.sweep.theta_start},
              {"theta_stop", cfg.sweep.theta_stop},
              {"theta_step", cfg.sweep.theta_step},
              {"phi", cfg.sweep.phi}}}};
  return j.dump(2) + "\n";
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

Mesh build_mesh(const RunConfig& cfg) {
  const auto& g = cfg.geometry;
  if (g.type == "sphere")
    return make_sphere_mesh(g.diameter, g.refinement, kDefaultGeometryOrder, g.non_uniform, cfg.wavelength);
  if (g.type == "toroid")
    return make_toroid_mesh(g.d_out, g.d_in, g.n_major, g.n_minor, kDefaultGeometryOrder, cfg.wavelength);
  Mesh m = load_mesh(g.path);
  m.lambda = cfg.wavelength;
  return m;
}

fs::path output_directory(const RunConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return ".";
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_rcs_csv(const fs::path& path, const FarFieldPattern& pattern) {
  std::ostringstream os;
  os << "theta_deg,phi_deg,sigma_over_lambda2,sigma_db\n";
  for (std::size_t k = 0; k < pattern.directions.size(); ++k)
    os << format_double(pattern.directions[k].theta_deg) << ',' << format_double(pattern.directions[k].phi_deg) << ','
       << format_double(pattern.sigma_over_lambda2(k)) << ',' << format_double(pattern.sigma_db(k)) << '\n';
  write_text(path, os.str());
}

std::vector<HistogramBin> histogram(std::vector<double> values, int bins) {
  if (values.empty()) throw DomainError("histogram: no values");
  if (bins < 1) throw DomainError("histogram: need at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) return {{lo, hi, values.size()}};
  std::vector<HistogramBin> out(bins);
  const double w = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) out[b] = {lo + b * w, b + 1 == bins ? hi : lo + (b + 1) * w, 0};
  for (double v : values) {
    auto b = static_cast<int>((v - lo) / w);
    out[std::clamp(b, 0, bins - 1)].count++;
  }
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// One solve, shared by `solve` and `convergence`.

struct RunOutcome {
  std::unique_ptr<SurfaceGrid> surface;
  Precomputation pre;
  SolveResult result;
  FarFieldPattern rcs;
  std::optional<double> mie_density_error, mie_rcs_error;
};

RunOutcome execute(const RunConfig& cfg, const Mesh& mesh, std::ostream& log) {
  RunOutcome r;
  r.surface = std::make_unique<SurfaceGrid>(mesh, cfg.order, cfg.order);
  const double k0 = cfg.k0();
  std::optional<Precomputation> cached;
  fs::path cache_file;
  if (!cfg.cache_dir.empty()) {
    fs::create_directories(cfg.cache_dir);
    cache_file = fs::path(cfg.cache_dir) / (precomp_cache_key(*r.surface, k0, cfg.adaptive) + ".bin");
    cached = load_precomp_cache(*r.surface, k0, cfg.adaptive, cache_file);
    if (cached) log << "loaded precomputation from " << cache_file.string() << "\n";
  }
  r.pre = cached ? std::move(*cached) : build_precomputation(*r.surface, k0, cfg.adaptive);
  if (!cached && !cache_file.empty()) save_precomp_cache(r.pre, *r.surface, cache_file);

  SolveOptions opt;
  opt.n = opt.m = cfg.order;
  opt.gmres = cfg.gmres;
  opt.dense = cfg.dense;
  r.result = solve_mfie(*r.surface, r.pre, opt);
  const auto dirs = sweep_directions(cfg.sweep);
  r.rcs = far_field(*r.surface, r.result.density, k0, dirs);

  if (is_builtin_sphere(cfg)) {
    const auto pts = node_positions(*r.surface);
    const auto jm = mie_surface_current(cfg.geometry.diameter, k0, pts);
    const auto js = to_cartesian(*r.surface, r.result.density);
    r.mie_density_error = relative_error(std::span<const Vec3c>(js), std::span<const Vec3c>(jm));
    const auto mie = mie_rcs(cfg.geometry.diameter, k0, dirs);
    r.mie_rcs_error = relative_error(std::span<const double>(r.rcs.sigma), std::span<const double>(mie.sigma));
  }
  return r;
}

json density_json(const SurfaceGrid& surface, const SurfaceDensity& d) {
  json patches = json::array();
  const std::size_t per = surface.nodes_per_patch();
  for (std::size_t p = 0; p < surface.patch_count(); ++p) {
    json ju = json::array(), jv = json::array();
    for (std::size_t q = 0; q < per; ++q) {
      const auto g = p * per + q;
      ju.push_back({d.ju[g].real(), d.ju[g].imag()});
      jv.push_back({d.jv[g].real(), d.jv[g].imag()});
    }
    patches.push_back({{"id", surface.mesh().patches[p].id()}, {"ju", ju}, {"jv", jv}});
  }
  return {{"n", surface.grid().n_u}, {"m", surface.grid().n_v}, {"layout", "u-fastest"}, {"patches", patches}};
}

json report_json(const RunConfig& cfg, const RunOutcome& r) {
  const SolveReport& rep = r.result.report;
  json patches = json::array();
  for (std::size_t p = 0; p < r.surface->patch_count(); ++p) {
    const auto& nf = r.pre.near_far[p];
    const Patch& patch = r.surface->mesh().patches[p];
    patches.push_back({{"id", patch.id()},
                       {"label", patch.label()},
                       {"diameter", patch.diameter()},
                       {"delta_near", nf.delta_near},
                       {"delta_near_over_lambda", nf.delta_near / cfg.wavelength},
                       {"near_targets", nf.near_targets.size()},
                       {"cap_reached", nf.cap_reached}});
  }
  json j = {{"wavelength", cfg.wavelength},
            {"k0", cfg.k0()},
            {"order", cfg.order},
            {"adaptive", adaptive_to_json(cfg.adaptive)},
            {"solve",
             {{"iterations", rep.iterations},
              {"residual", rep.residual},
              {"converged", rep.converged},
              {"unknowns", rep.unknowns},
              {"solve_seconds", rep.solve_seconds},
              {"matvec_kernel_evals", rep.matvec_kernel_evals},
              {"dense", cfg.dense}}},
            {"metrics",
             {{"kernel_evals", rep.metrics.kernel_evals},
              {"recounted_kernel_evals", rep.recounted_kernel_evals},
              {"precompute_seconds", rep.metrics.precompute_seconds},
              {"precompute_bytes", rep.metrics.precompute_bytes},
              {"precomp_entries", rep.precomp_entries},
              {"not_converged_entries", rep.not_converged_entries},
              {"capped_patches", rep.capped_patches}}},
            {"patches", patches}};
  if (r.mie_density_error)
    j["mie"] = {{"density_error", *r.mie_density_error}, {"rcs_error", *r.mie_rcs_error}};
  return j;
}

// Reference Cartesian samples of a fine run interpolated onto a coarser grid of
// the same mesh.
std::vector<Vec3c> interpolate_density(const SurfaceGrid& fine, const std::vector<Vec3c>& fine_j,
                                       const SurfaceGrid& coarse) {
  std::vector<Vec3c> out(coarse.node_count());
  const std::size_t per_f = fine.nodes_per_patch();
  const ChebGrid& gc = coarse.grid();
  for (std::size_t p = 0; p < fine.patch_count(); ++p)
    for (int c = 0; c < 3; ++c) {
      Table2D<Complex> samples(fine.grid().n_u, fine.grid().n_v);
      for (std::size_t q = 0; q < per_f; ++q) samples[q] = fine_j[p * per_f + q](c);
      const auto coeffs = cheb_coeffs_2d_fast(samples, fine.grid());
      for (int j = 0; j < gc.n_v; ++j)
        for (int i = 0; i < gc.n_u; ++i)
          out[coarse.global_index(p, i, j)](c) = cheb_eval_2d(coeffs, gc.nodes_u[i], gc.nodes_v[j]);
    }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------
// Flag overrides shared by solve / convergence.

struct Overrides {
  std::string config;
  RunConfig values;  // holder for flag targets
  std::string scheme;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <class T>
  void add(CLI::App& app, const std::string& name, T& slot, const std::string& help,
           std::function<void(RunConfig&, const T&)> apply) {
    CLI::Option* o = app.add_option(name, slot, help);
    setters.emplace_back(o, [apply, &slot](RunConfig& c) { apply(c, slot); });
  }

  void flag(CLI::App& app, const std::string& name, bool& slot, const std::string& help,
            std::function<void(RunConfig&, bool)> apply) {
    CLI::Option* o = app.add_flag(name, slot, help);
    setters.emplace_back(o, [apply, &slot](RunConfig& c) { apply(c, slot); });
  }

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config, "JSON run configuration");
    auto& v = values;
    add<std::string>(app, "--geometry", v.geometry.type, "sphere | toroid | mesh",
                     [](RunConfig& c, const std::string& x) { c.geometry.type = x; });
    add<std::string>(app, "--mesh", v.geometry.path, "mesh file (implies --geometry mesh)", [](RunConfig& c, const std::string& x) {
      c.geometry.type = "mesh";
      c.geometry.path = x;
    });
    add<double>(app, "--diameter", v.geometry.diameter, "sphere diameter",
                [](RunConfig& c, const double& x) { c.geometry.diameter = x; });
    add<int>(app, "--refinement", v.geometry.refinement, "sphere refinement (6 r^2 patches)",
             [](RunConfig& c, const int& x) { c.geometry.refinement = x; });
    flag(app, "--non-uniform", v.geometry.non_uniform, "refine one cube face (non-conforming mesh)",
         [](RunConfig& c, bool x) { c.geometry.non_uniform = x; });
    add<double>(app, "--d-out", v.geometry.d_out, "toroid outer diameter",
                [](RunConfig& c, const double& x) { c.geometry.d_out = x; });
    add<double>(app, "--d-in", v.geometry.d_in, "toroid inner diameter",
                [](RunConfig& c, const double& x) { c.geometry.d_in = x; });
    add<int>(app, "--n-major", v.geometry.n_major, "toroid patches along the major circle",
             [](RunConfig& c, const int& x) { c.geometry.n_major = x; });
    add<int>(app, "--n-minor", v.geometry.n_minor, "toroid patches along the minor circle",
             [](RunConfig& c, const int& x) { c.geometry.n_minor = x; });
    add<double>(app, "--wavelength", v.wavelength, "wavelength", [](RunConfig& c, const double& x) { c.wavelength = x; });
    add<int>(app, "-n,--order", v.order, "Chebyshev grid order per patch", [](RunConfig& c, const int& x) { c.order = x; });
    add<std::string>(app, "--scheme", scheme, "gk | cc | fejer", [](RunConfig& c, const std::string& x) {
      c.adaptive.scheme = scheme_from_string(x);
    });
    add<double>(app, "--tol-abs", v.adaptive.tol_abs, "absolute precompute tolerance",
                [](RunConfig& c, const double& x) { c.adaptive.tol_abs = x; });
    add<double>(app, "--tol-rel", v.adaptive.tol_rel, "relative precompute tolerance",
                [](RunConfig& c, const double& x) { c.adaptive.tol_rel = x; });
    add<int>(app, "--gk-max-panels", v.adaptive.gk_max_panels, "GK panel cap per interval",
             [](RunConfig& c, const int& x) { c.adaptive.gk_max_panels = x; });
    add<int>(app, "--cc-initial-order", v.adaptive.cc_initial_order, "initial CC points per direction",
             [](RunConfig& c, const int& x) { c.adaptive.cc_initial_order = x; });
    add<int>(app, "--cc-max-depth", v.adaptive.cc_max_depth, "CC doubling levels",
             [](RunConfig& c, const int& x) { c.adaptive.cc_max_depth = x; });
    add<int>(app, "--cov-order", v.adaptive.cov_order, "change-of-variables exponent",
             [](RunConfig& c, const int& x) { c.adaptive.cov_order = x; });
    add<double>(app, "--aux-factor", v.adaptive.aux_factor, "auxiliary wavenumber factor",
                [](RunConfig& c, const double& x) { c.adaptive.aux_factor = x; });
    add<int>(app, "--n-beta", v.adaptive.n_beta, "points per direction for the fixed Fejer scheme",
             [](RunConfig& c, const int& x) { c.adaptive.n_beta = x; });
    add<int>(app, "--far-passes", v.adaptive.consecutive_far_passes, "consecutive far checks before cutoff",
             [](RunConfig& c, const int& x) { c.adaptive.consecutive_far_passes = x; });
    flag(app, "--force-near", v.adaptive.force_near, "treat every candidate as near",
         [](RunConfig& c, bool x) { c.adaptive.force_near = x; });
    add<double>(app, "--gmres-tol", v.gmres.tol, "GMRES relative residual", [](RunConfig& c, const double& x) { c.gmres.tol = x; });
    add<int>(app, "--max-iters", v.gmres.max_iters, "GMRES iteration cap", [](RunConfig& c, const int& x) { c.gmres.max_iters = x; });
    add<int>(app, "--restart", v.gmres.restart, "GMRES restart length", [](RunConfig& c, const int& x) { c.gmres.restart = x; });
    flag(app, "--dense", v.dense, "assemble and LU-solve (<= 5000 unknowns)", [](RunConfig& c, bool x) { c.dense = x; });
    add<std::string>(app, "-o,--output-dir", v.output_dir, "output directory",
                     [](RunConfig& c, const std::string& x) { c.output_dir = x; });
    add<std::string>(app, "--cache-dir", v.cache_dir, "precompute cache directory",
                     [](RunConfig& c, const std::string& x) { c.cache_dir = x; });
    add<double>(app, "--theta-start", v.sweep.theta_start, "sweep start (deg)",
                [](RunConfig& c, const double& x) { c.sweep.theta_start = x; });
    add<double>(app, "--theta-stop", v.sweep.theta_stop, "sweep stop (deg)",
                [](RunConfig& c, const double& x) { c.sweep.theta_stop = x; });
    add<double>(app, "--theta-step", v.sweep.theta_step, "sweep step (deg)",
                [](RunConfig& c, const double& x) { c.sweep.theta_step = x; });
    add<double>(app, "--phi", v.sweep.phi, "sweep azimuth (deg)", [](RunConfig& c, const double& x) { c.sweep.phi = x; });
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : load_config(config);
    for (const auto& [opt, set] : setters)
      if (opt->count() > 0) set(cfg);
    cfg.validate();
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_solve(const Overrides& ov, std::ostream& out) {
  const RunConfig cfg = ov.resolve();
  const Mesh mesh = build_mesh(cfg);  // input errors surface before any output
  const fs::path dir = output_directory(cfg);
  RunOutcome r = execute(cfg, mesh, out);
  fs::create_directories(dir);
  write_rcs_csv(dir / "rcs.csv", r.rcs);
  write_text(dir / "density.json", density_json(*r.surface, r.result.density).dump() + "\n");
  write_text(dir / "report.json", report_json(cfg, r).dump(2) + "\n");
  const auto& rep = r.result.report;
  out << "unknowns " << rep.unknowns << ", GMRES iterations " << rep.iterations << ", residual "
      << format_double(rep.residual) << "\n";
  out << "precompute " << rep.metrics.precompute_seconds << " s, " << rep.metrics.kernel_evals << " kernel evaluations, "
      << rep.metrics.precompute_bytes << " bytes\n";
  if (r.mie_density_error)
    out << "Mie: density error " << format_double(*r.mie_density_error) << ", RCS error "
        << format_double(*r.mie_rcs_error) << "\n";
  if (!rep.converged) {
    out << "GMRES did not converge\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_convergence(const Overrides& ov, const std::string& orders_s, const std::string& schemes_s, std::ostream& out,
                    std::ostream& err) {
  RunConfig base = ov.resolve();
  std::vector<int> orders;
  for (const auto& o : split_list(orders_s)) {
    try {
      orders.push_back(std::stoi(o));
    } catch (const std::exception&) {
      throw InputError("bad order '" + o + "'");
    }
  }
  if (orders.size() < 1) throw InputError("--orders needs at least one value");
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  struct SchemeSpec {
    Scheme scheme;
    int n_beta;
    std::string name;
  };
  std::vector<SchemeSpec> schemes;
  for (const auto& s : split_list(schemes_s)) {
    const auto colon = s.find(':');
    SchemeSpec spec{scheme_from_string(s.substr(0, colon)), base.adaptive.n_beta, s};
    if (colon != std::string::npos) {
      try {
        spec.n_beta = std::stoi(s.substr(colon + 1));
      } catch (const std::exception&) {
        throw InputError("bad scheme '" + s + "'");
      }
    }
    schemes.push_back(spec);
  }
  if (schemes.empty()) throw InputError("--schemes needs at least one value");
  for (int o : orders) {
    RunConfig c = base;
    c.order = o;
    c.validate();
  }
  const Mesh mesh = build_mesh(base);
  const fs::path dir = output_directory(base);
  const bool sphere = is_builtin_sphere(base);

  struct Row {
    int order;
    SchemeSpec scheme;
    std::optional<RunOutcome> run;
    std::string status = "ok";
  };
  std::vector<Row> rows;
  for (int o : orders)
    for (const auto& s : schemes) {
      Row row{o, s, std::nullopt};
      RunConfig c = base;
      c.order = o;
      c.adaptive.scheme = s.scheme;
      c.adaptive.n_beta = s.n_beta;
      try {
        row.run = execute(c, mesh, out);
        if (!row.run->result.report.converged) row.status = "gmres_not_converged";
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
        std::replace(row.status.begin(), row.status.end(), ',', ';');
        err << "run order=" << o << " scheme=" << s.name << " failed: " << e.what() << "\n";
      }
      out << "order " << o << " scheme " << s.name << ": " << row.status << "\n";
      rows.push_back(std::move(row));
    }

  // Non-spheres: the finest run of the first scheme is the reference.
  const Row* reference = nullptr;
  if (!sphere)
    for (const auto& row : rows)
      if (row.order == orders.back() && row.scheme.name == schemes.front().name && row.run) reference = &row;

  std::ostringstream csv;
  csv << "order,scheme,n_beta,unknowns,kernel_evals,precompute_seconds,precompute_bytes,gmres_iterations,converged,"
         "density_error,rcs_error,delta_near_median_over_lambda,status\n";
  bool all_ok = true;
  for (const auto& row : rows) {
    csv << row.order << ',' << to_string(row.scheme.scheme) << ',' << row.scheme.n_beta << ',';
    if (!row.run) {
      csv << ",,,,,,,,," << row.status << '\n';
      all_ok = false;
      continue;
    }
    const auto& r = *row.run;
    const auto& rep = r.result.report;
    std::string dens, rcs;
    if (sphere) {
      dens = format_double(*r.mie_density_error);
      rcs = format_double(*r.mie_rcs_error);
    } else if (reference != nullptr && &row != reference) {
      const auto ref_j = to_cartesian(*reference->run->surface, reference->run->result.density);
      const auto ref_here = interpolate_density(*reference->run->surface, ref_j, *r.surface);
      const auto js = to_cartesian(*r.surface, r.result.density);
      dens = format_double(relative_error(std::span<const Vec3c>(js), std::span<const Vec3c>(ref_here)));
      rcs = format_double(relative_error(std::span<const double>(r.rcs.sigma),
                                         std::span<const double>(reference->run->rcs.sigma)));
    }
    std::vector<double> dn;
    for (const auto& nf : r.pre.near_far) dn.push_back(nf.delta_near / base.wavelength);
    csv << rep.unknowns << ',' << rep.metrics.kernel_evals << ',' << format_double(rep.metrics.precompute_seconds) << ','
        << rep.metrics.precompute_bytes << ',' << rep.iterations << ',' << (rep.converged ? 1 : 0) << ',' << dens << ','
        << rcs << ',' << format_double(median(dn)) << ',' << (&row == reference ? "reference" : row.status) << '\n';
    if (!rep.converged) all_ok = false;
  }
  fs::create_directories(dir);
  write_text(dir / "study.csv", csv.str());
  out << "wrote " << (dir / "study.csv").string() << "\n";
  return all_ok ? kExitOk : kExitNotConverged;
}

int cmd_mie(double diameter, double wavelength, const SweepSpec& sweep, const std::string& output,
            const std::string& output_dir, std::ostream& out) {
  if (!(diameter > 0) || !(wavelength > 0)) throw DomainError("diameter and wavelength must be positive");
  const auto dirs = sweep_directions(sweep);
  const auto pattern = mie_rcs(diameter, 2.0 * kPi / wavelength, dirs);
  RunConfig tmp;
  tmp.output_dir = output_dir;
  const fs::path path = output.empty() ? output_directory(tmp) / "rcs_reference.csv" : fs::path(output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_rcs_csv(path, pattern);
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

int cmd_near_hist(const std::string& report_path, int bins, const std::string& output, std::ostream& out) {
  std::ifstream is(report_path);
  if (!is) throw ParseError("cannot open report " + report_path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  if (!j.contains("patches") || !j.at("patches").is_array()) throw ParseError("report: missing 'patches'");
  std::vector<double> all;
  std::vector<std::string> labels;
  for (const auto& p : j.at("patches")) {
    if (!p.contains("delta_near_over_lambda")) throw ParseError("report: patch without 'delta_near_over_lambda'");
    all.push_back(p.at("delta_near_over_lambda").get<double>());
    labels.push_back(p.value("label", std::string{}));
  }
  const auto hist = histogram(all, bins);
  std::vector<std::string> names;
  for (const auto& l : labels)
    if (!l.empty() && std::find(names.begin(), names.end(), l) == names.end()) names.push_back(l);
  std::sort(names.begin(), names.end());

  std::ostringstream csv;
  csv << "bin_lo_over_lambda,bin_hi_over_lambda,count";
  for (const auto& n : names) csv << ",count_" << n;
  csv << '\n';
  const double lo = hist.front().lo;
  const double w = hist.size() > 1 ? hist[0].hi - hist[0].lo : 0.0;
  std::vector<std::map<std::string, std::size_t>> per_bin(hist.size());
  for (std::size_t k = 0; k < all.size(); ++k) {
    std::size_t b = 0;
    if (w > 0) b = static_cast<std::size_t>(std::clamp(static_cast<int>((all[k] - lo) / w), 0, static_cast<int>(hist.size()) - 1));
    per_bin[b][labels[k]]++;
  }
  for (std::size_t b = 0; b < hist.size(); ++b) {
    csv << format_double(hist[b].lo) << ',' << format_double(hist[b].hi) << ',' << hist[b].count;
    for (const auto& n : names) csv << ',' << (per_bin[b].count(n) ? per_bin[b].at(n) : 0);
    csv << '\n';
  }
  const fs::path path = output.empty() ? fs::path(report_path).parent_path() / "delta_near.csv" : fs::path(output);
  write_text(path, csv.str());
  out << "median delta_near/lambda " << format_double(median(all)) << " over " << all.size() << " patches\n";
  for (const auto& n : names) {
    std::vector<double> sel;
    for (std::size_t k = 0; k < all.size(); ++k)
      if (labels[k] == n) sel.push_back(all[k]);
    out << "  " << n << ": median " << format_double(median(sel)) << " (" << sel.size() << " patches)\n";
  }
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive high-order Nystrom MFIE solver for PEC scattering"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = all cores)");

  Overrides solve_ov;
  CLI::App* solve = app.add_subcommand("solve", "solve one configuration; writes rcs.csv, density.json, report.json");
  solve_ov.attach(*solve);

  Overrides conv_ov;
  std::string orders = "6,8,10", schemes = "gk,cc";
  CLI::App* conv = app.add_subcommand("convergence", "sweep grid orders and schemes; writes study.csv");
  conv_ov.attach(*conv);
  conv->add_option("--orders", orders, "comma-separated grid orders");
  conv->add_option("--schemes", schemes, "comma-separated schemes (gk, cc, fejer[:N_beta])");

  double mie_d = 1.0, mie_lambda = 1.0;
  SweepSpec mie_sweep;
  std::string mie_out, mie_dir;
  CLI::App* mie = app.add_subcommand("mie", "analytic PEC-sphere RCS; same schema as rcs.csv");
  mie->add_option("--diameter", mie_d, "sphere diameter");
  mie->add_option("--wavelength", mie_lambda, "wavelength");
  mie->add_option("--theta-start", mie_sweep.theta_start);
  mie->add_option("--theta-stop", mie_sweep.theta_stop);
  mie->add_option("--theta-step", mie_sweep.theta_step);
  mie->add_option("--phi", mie_sweep.phi);
  mie->add_option("-o,--output", mie_out, "output CSV (default <output dir>/rcs_reference.csv)");
  mie->add_option("--output-dir", mie_dir, "output directory");

  std::string report_path, hist_out;
  int bins = 20;
  CLI::App* hist = app.add_subcommand("near-hist", "histogram of per-patch delta_near from report.json");
  hist->add_option("report", report_path, "report.json of a solve")->required();
  hist->add_option("--bins", bins, "number of bins");
  hist->add_option("-o,--output", hist_out, "output CSV (default delta_near.csv next to the report)");

  CLI::App* gen = app.add_subcommand("gen-mesh", "write a built-in mesh in the mesh file format");
  gen->require_subcommand(1);
  double g_d = 1.0, g_lambda = 1.0, g_dout = 4.0, g_din = 2.0;
  int g_ref = 2, g_nmaj = 24, g_nmin = 8, g_ngeo = kDefaultGeometryOrder;
  bool g_nonuni = false;
  std::string g_out;
  CLI::App* gs = gen->add_subcommand("sphere", "cube-sphere");
  gs->add_option("--diameter", g_d);
  gs->add_option("--refinement", g_ref);
  gs->add_flag("--non-uniform", g_nonuni);
  CLI::App* gt = gen->add_subcommand("toroid", "torus");
  gt->add_option("--d-out", g_dout);
  gt->add_option("--d-in", g_din);
  gt->add_option("--n-major", g_nmaj);
  gt->add_option("--n-minor", g_nmin);
  for (CLI::App* sub : {gs, gt}) {
    sub->add_option("--wavelength", g_lambda);
    sub->add_option("--n-geo", g_ngeo, "geometry samples per direction");
    sub->add_option("-o,--output", g_out, "mesh file")->required();
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  set_thread_count(threads);

  try {
    if (solve->parsed()) return cmd_solve(solve_ov, out);
    if (conv->parsed()) return cmd_convergence(conv_ov, orders, schemes, out, err);
    if (mie->parsed()) return cmd_mie(mie_d, mie_lambda, mie_sweep, mie_out, mie_dir, out);
    if (hist->parsed()) return cmd_near_hist(report_path, bins, hist_out, out);
    if (gen->parsed()) {
      Mesh m = gs->parsed() ? make_sphere_mesh(g_d, g_ref, g_ngeo, g_nonuni, g_lambda)
                            : make_toroid_mesh(g_dout, g_din, g_nmaj, g_nmin, g_ngeo, g_lambda);
      if (fs::path(g_out).has_parent_path()) fs::create_directories(fs::path(g_out).parent_path());
      save_mesh(m, g_out);
      out << "wrote " << m.patches.size() << " patches to " << g_out << "\n";
      return kExitOk;
    }
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const DomainError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const DegeneratePatchError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ShapeMismatch& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternalError;
  }
  return kExitInputError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cbie::cli
