#include "cbie/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cbie {

namespace {

Eigen::MatrixXd to_matrix(const Table2D<double>& t) {
  Eigen::MatrixXd m(t.nu(), t.nv());
  for (int j = 0; j < t.nv(); ++j)
    for (int i = 0; i < t.nu(); ++i) m(i, j) = t(i, j);
  return m;
}

Table2D<double> from_matrix(const Eigen::MatrixXd& m) {
  Table2D<double> t(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int j = 0; j < t.nv(); ++j)
    for (int i = 0; i < t.nu(); ++i) t(i, j) = m(i, j);
  return t;
}

Eigen::MatrixXd diff(const Eigen::MatrixXd& c, Direction dir) {
  return to_matrix(cheb_diff(from_matrix(c), dir));
}

Eigen::VectorXd cheb_vector(double x, int n) {
  Eigen::VectorXd t(n);
  chebyshev_t(x, std::span(t.data(), static_cast<std::size_t>(n)));
  return t;
}

Eigen::MatrixXd cheb_matrix(std::span<const double> xs, int n) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(xs.size()), n);
  std::vector<double> row(n);
  for (std::size_t a = 0; a < xs.size(); ++a) {
    chebyshev_t(xs[a], row);
    for (int k = 0; k < n; ++k) t(static_cast<Eigen::Index>(a), k) = row[k];
  }
  return t;
}

// T_k(x0 + d) - T_k(x0) for k < n, by differencing the three-term recurrence.
Eigen::MatrixXd cheb_delta_matrix(double x0, std::span<const double> ds, int n) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(ds.size()), n);
  std::vector<double> base(n);
  chebyshev_t(x0, base);
  for (std::size_t a = 0; a < ds.size(); ++a) {
    const double d = ds[a], x = x0 + d;
    const auto row = static_cast<Eigen::Index>(a);
    t(row, 0) = 0.0;
    if (n > 1) t(row, 1) = d;
    for (int k = 1; k + 1 < n; ++k) t(row, k + 1) = 2.0 * x * t(row, k) + 2.0 * d * base[k] - t(row, k - 1);
  }
  return t;
}

Vec3 contract(const std::array<Eigen::MatrixXd, 3>& c, const Eigen::VectorXd& tu,
              const Eigen::VectorXd& tv) {
  return {tu.dot(c[0] * tv), tu.dot(c[1] * tv), tu.dot(c[2] * tv)};
}

}  // namespace

double TensorSamples::jacobian(int a, int b) const {
  const Vec3 ru(d_u[0](a, b), d_u[1](a, b), d_u[2](a, b));
  const Vec3 rv(d_v[0](a, b), d_v[1](a, b), d_v[2](a, b));
  return ru.cross(rv).norm();
}

Patch::Patch(int id, int n_geo, std::vector<Vec3> points, bool flip, std::string label)
    : id_(id), n_geo_(n_geo), points_(std::move(points)), flip_(flip), label_(std::move(label)) {
  if (n_geo < 2) throw ShapeMismatch("patch " + std::to_string(id) + ": n_geo must be >= 2");
  if (points_.size() != static_cast<std::size_t>(n_geo) * n_geo)
    throw ShapeMismatch("patch " + std::to_string(id) + ": expected " +
                        std::to_string(n_geo * n_geo) + " points, got " +
                        std::to_string(points_.size()));
  for (const auto& p : points_)
    if (!p.allFinite()) throw ShapeMismatch("patch " + std::to_string(id) + ": non-finite point");

  const ChebGrid grid = ChebGrid::square(n_geo);
  for (int c = 0; c < 3; ++c) {
    Table2D<double> samples(n_geo, n_geo);
    for (std::size_t k = 0; k < points_.size(); ++k) samples[k] = points_[k][c];
    c_[c] = to_matrix(cheb_coeffs_2d(samples, grid));
    cu_[c] = diff(c_[c], Direction::U);
    cv_[c] = diff(c_[c], Direction::V);
    cuu_[c] = diff(cu_[c], Direction::U);
    cuv_[c] = diff(cu_[c], Direction::V);
    cvv_[c] = diff(cv_[c], Direction::V);
  }
  for (std::size_t a = 0; a < points_.size(); ++a)
    for (std::size_t b = a + 1; b < points_.size(); ++b)
      diameter_ = std::max(diameter_, (points_[a] - points_[b]).norm());
}

Vec3 Patch::eval(double u, double v) const {
  detail::check_unit_square(u, v);
  return contract(c_, cheb_vector(u, n_geo_), cheb_vector(v, n_geo_));
}

PatchDerivatives Patch::derivatives(double u, double v) const {
  detail::check_unit_square(u, v);
  const auto tu = cheb_vector(u, n_geo_);
  const auto tv = cheb_vector(v, n_geo_);
  return {contract(c_, tu, tv),   contract(cu_, tu, tv),  contract(cv_, tu, tv),
          contract(cuu_, tu, tv), contract(cuv_, tu, tv), contract(cvv_, tu, tv)};
}

GeometryFrame Patch::frame(double u, double v) const {
  detail::check_unit_square(u, v);
  const auto tu = cheb_vector(u, n_geo_);
  const auto tv = cheb_vector(v, n_geo_);
  GeometryFrame f;
  f.position = contract(c_, tu, tv);
  f.e_u = contract(cu_, tu, tv);
  f.e_v = contract(cv_, tu, tv);
  f.g_uu = f.e_u.dot(f.e_u);
  f.g_uv = f.e_u.dot(f.e_v);
  f.g_vv = f.e_v.dot(f.e_v);
  const Vec3 cross = f.e_u.cross(f.e_v);
  f.jacobian = cross.norm();
  if (!(f.jacobian >= 1e-14 * diameter_ * diameter_))
    throw DegeneratePatchError(id_, "patch " + std::to_string(id_) + ": degenerate Jacobian at (" +
                                        std::to_string(u) + ", " + std::to_string(v) + ")");
  f.normal = (flip_ ? -1.0 : 1.0) * cross / f.jacobian;
  const double det = f.g_uu * f.g_vv - f.g_uv * f.g_uv;
  const double guu = f.g_vv / det, guv = -f.g_uv / det, gvv = f.g_uu / det;
  f.e_u_contra = guu * f.e_u + guv * f.e_v;
  f.e_v_contra = guv * f.e_u + gvv * f.e_v;
  return f;
}

void Patch::sample_tensor(std::span<const double> s, std::span<const double> t,
                          TensorSamples& out) const {
  const Eigen::MatrixXd tu = cheb_matrix(s, n_geo_);
  const Eigen::MatrixXd tv = cheb_matrix(t, n_geo_);
  for (int c = 0; c < 3; ++c) {
    out.position[c].noalias() = tu * c_[c] * tv.transpose();
    out.d_u[c].noalias() = tu * cu_[c] * tv.transpose();
    out.d_v[c].noalias() = tu * cv_[c] * tv.transpose();
  }
}

void Patch::sample_tensor_offset(double s0, double t0, std::span<const double> ds,
                                 std::span<const double> dt, TensorSamples& out) const {
  std::vector<double> s(ds.size()), t(dt.size());
  for (std::size_t a = 0; a < ds.size(); ++a) s[a] = s0 + ds[a];
  for (std::size_t b = 0; b < dt.size(); ++b) t[b] = t0 + dt[b];
  const Eigen::MatrixXd tu = cheb_matrix(s, n_geo_);
  const Eigen::MatrixXd tv = cheb_matrix(t, n_geo_);
  const Eigen::MatrixXd du = cheb_delta_matrix(s0, ds, n_geo_);
  const Eigen::MatrixXd dv = cheb_delta_matrix(t0, dt, n_geo_);
  const std::array<double, 1> s0a{s0};
  const Eigen::RowVectorXd tu0 = cheb_matrix(s0a, n_geo_).row(0);
  for (int c = 0; c < 3; ++c) {
    const Eigen::RowVectorXd shift = tu0 * c_[c] * dv.transpose();
    out.position[c].noalias() = du * c_[c] * tv.transpose();
    out.position[c].rowwise() += shift;
    out.d_u[c].noalias() = tu * cu_[c] * tv.transpose();
    out.d_v[c].noalias() = tu * cv_[c] * tv.transpose();
  }
}

Patch patch_from_function(int id, int n_geo, const std::function<Vec3(double, double)>& map,
                          std::string label) {
  const auto rule = cheb_nodes_weights(n_geo);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n_geo) * n_geo);
  for (int j = 0; j < n_geo; ++j)
    for (int i = 0; i < n_geo; ++i) pts.push_back(map(rule.nodes[i], rule.nodes[j]));
  return Patch(id, n_geo, std::move(pts), false, std::move(label));
}

Mesh make_sphere_mesh(double diameter, int refinement, int n_geo, bool non_uniform, double lambda) {
  if (refinement < 1) throw DomainError("make_sphere_mesh: refinement must be >= 1");
  if (!(diameter > 0)) throw DomainError("make_sphere_mesh: diameter must be positive");
  struct Face {
    Vec3 n, t1, t2;
  };
  const std::array<Face, 6> faces = {{
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
      {{-1, 0, 0}, {0, 0, 1}, {0, 1, 0}},
      {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}},
      {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}},
      {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}},
      {{0, 0, -1}, {0, 1, 0}, {1, 0, 0}},
  }};
  const double radius = diameter / 2.0;
  Mesh mesh;
  mesh.lambda = lambda;
  mesh.n_geo = n_geo;
  int id = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const int r = (non_uniform && f == 0) ? 2 * refinement : refinement;
    const Face face = faces[f];
    for (int b = 0; b < r; ++b)
      for (int a = 0; a < r; ++a) {
        auto map = [&](double u, double v) -> Vec3 {
          const double xi = -1.0 + (2.0 * a + u + 1.0) / r;
          const double eta = -1.0 + (2.0 * b + v + 1.0) / r;
          const Vec3 p = face.n + std::tan(kPi / 4.0 * xi) * face.t1 + std::tan(kPi / 4.0 * eta) * face.t2;
          return radius * p / p.norm();
        };
        mesh.patches.push_back(patch_from_function(id++, n_geo, map));
      }
  }
  return mesh;
}

Mesh make_toroid_mesh(double d_out, double d_in, int n_major, int n_minor, int n_geo, double lambda) {
  if (!(d_out > d_in && d_in > 0)) throw DomainError("make_toroid_mesh: need D_out > d_in > 0");
  if (n_major < 3 || n_minor < 3) throw DomainError("make_toroid_mesh: need n_major, n_minor >= 3");
  const double big_r = (d_out + d_in) / 4.0;
  const double small_r = (d_out - d_in) / 4.0;
  Mesh mesh;
  mesh.lambda = lambda;
  mesh.n_geo = n_geo;
  int id = 0;
  const double dth = 2.0 * kPi / n_major, dph = 2.0 * kPi / n_minor;
  for (int b = 0; b < n_minor; ++b)
    for (int a = 0; a < n_major; ++a) {
      auto map = [&](double u, double v) -> Vec3 {
        const double th = dth * (a + 0.5 * (u + 1.0));
        const double ph = dph * (b + 0.5 * (v + 1.0));
        const double w = big_r + small_r * std::cos(ph);
        return {w * std::cos(th), w * std::sin(th), small_r * std::sin(ph)};
      };
      const double c = std::cos(dph * (b + 0.5));
      std::string label = c < -1e-12 ? "inner" : (c > 1e-12 ? "outer" : "side");
      mesh.patches.push_back(patch_from_function(id++, n_geo, map, std::move(label)));
    }
  return mesh;
}

std::string mesh_to_json(const Mesh& mesh) {
  using nlohmann::json;
  std::ostringstream os;
  os << "{\"version\":1,\"lambda\":" << json(mesh.lambda).dump() << ",\"n_geo\":" << mesh.n_geo
     << ",\"patches\":[";
  for (std::size_t p = 0; p < mesh.patches.size(); ++p) {
    const Patch& patch = mesh.patches[p];
    json jp;
    jp["id"] = patch.id();
    json pts = json::array();
    for (const auto& x : patch.points()) pts.push_back({x[0], x[1], x[2]});
    jp["points"] = std::move(pts);
    jp["flip"] = patch.flipped();
    if (!patch.label().empty()) jp["label"] = patch.label();
    os << (p ? ",\n" : "\n") << jp.dump();
  }
  os << "\n]}\n";
  return os.str();
}

Mesh mesh_from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("mesh: ") + e.what());
  }
  Mesh mesh;
  try {
    if (doc.at("version").get<int>() != 1) throw ParseError("mesh: unsupported version");
    mesh.lambda = doc.at("lambda").get<double>();
    mesh.n_geo = doc.at("n_geo").get<int>();
    if (mesh.n_geo < 2) throw ParseError("mesh: n_geo must be >= 2");
  } catch (const json::exception& e) {
    throw ParseError(std::string("mesh header: ") + e.what());
  }
  const std::size_t expected = static_cast<std::size_t>(mesh.n_geo) * mesh.n_geo;
  for (const auto& jp : doc.at("patches")) {
    int id = -1;
    std::vector<Vec3> pts;
    bool flip = false;
    std::string label;
    try {
      id = jp.at("id").get<int>();
      const auto& jpts = jp.at("points");
      if (jpts.size() != expected)
        throw ParseError("mesh: patch " + std::to_string(id) + " has " + std::to_string(jpts.size()) +
                         " points, expected " + std::to_string(expected));
      pts.reserve(expected);
      for (const auto& q : jpts) {
        if (q.size() != 3) throw ParseError("mesh: patch " + std::to_string(id) + " has a point without 3 coordinates");
        pts.emplace_back(q[0].get<double>(), q[1].get<double>(), q[2].get<double>());
      }
      if (jp.contains("flip")) flip = jp["flip"].get<bool>();
      if (jp.contains("label")) label = jp["label"].get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("mesh: patch " + std::to_string(id) + ": " + e.what());
    }
    Patch patch = [&] {
      try {
        return Patch(id, mesh.n_geo, std::move(pts), flip, std::move(label));
      } catch (const ShapeMismatch& e) {
        throw ParseError(std::string("mesh: ") + e.what());
      }
    }();
    // Reject degenerate parametrizations at every geometry node.
    const auto rule = cheb_nodes_weights(mesh.n_geo);
    for (int j = 0; j < mesh.n_geo; ++j)
      for (int i = 0; i < mesh.n_geo; ++i) (void)patch.frame(rule.nodes[i], rule.nodes[j]);
    mesh.patches.push_back(std::move(patch));
  }
  return mesh;
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << mesh_to_json(mesh);
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open mesh file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return mesh_from_json(ss.str());
}

double patch_proxy_distance(std::span<const Vec3> nodes, const Vec3& target) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : nodes) best = std::min(best, (x - target).squaredNorm());
  return std::sqrt(best);
}

double patch_proxy_distance(const Patch& patch, const Vec3& target, const ChebGrid& grid) {
  std::vector<Vec3> nodes;
  nodes.reserve(grid.size());
  for (int j = 0; j < grid.n_v; ++j)
    for (int i = 0; i < grid.n_u; ++i) nodes.push_back(patch.eval(grid.nodes_u[i], grid.nodes_v[j]));
  return patch_proxy_distance(nodes, target);
}

SurfaceGrid::SurfaceGrid(Mesh mesh, int n, int m) : mesh_(std::move(mesh)), grid_(n, m) {
  const std::size_t per = grid_.size();
  frames_.reserve(per * mesh_.patches.size());
  for (const auto& patch : mesh_.patches)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i) frames_.push_back(patch.frame(grid_.nodes_u[i], grid_.nodes_v[j]));
  positions_.reserve(frames_.size());
  qweights_.reserve(frames_.size());
  for (std::size_t k = 0; k < frames_.size(); ++k) {
    positions_.push_back(frames_[k].position);
    const std::size_t local = k % per;
    const int i = static_cast<int>(local % n), j = static_cast<int>(local / n);
    qweights_.push_back(frames_[k].jacobian * grid_.weight(i, j));
  }
}

}  // namespace cbie
