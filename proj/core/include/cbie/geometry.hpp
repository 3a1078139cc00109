#pragma once

// Curvilinear quadrilateral patches r_p(u,v) on [-1,1]^2, their differential
// geometry, mesh generators and the mesh file format.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbie/chebyshev.hpp"
#include "cbie/common.hpp"

namespace cbie {

struct GeometryFrame {
  Vec3 position = Vec3::Zero();
  Vec3 e_u = Vec3::Zero();
  Vec3 e_v = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  double g_uu = 0, g_uv = 0, g_vv = 0;
  double jacobian = 0;  // sqrt(det G)
  Vec3 e_u_contra = Vec3::Zero();
  Vec3 e_v_contra = Vec3::Zero();
};

struct PatchDerivatives {
  Vec3 r, ru, rv, ruu, ruv, rvv;
};

// Geometry and first derivatives sampled on a tensor grid (s_a, t_b);
// matrices are indexed (a, b), one per Cartesian component.
struct TensorSamples {
  std::array<Eigen::MatrixXd, 3> position;
  std::array<Eigen::MatrixXd, 3> d_u;
  std::array<Eigen::MatrixXd, 3> d_v;

  Vec3 r(int a, int b) const { return {position[0](a, b), position[1](a, b), position[2](a, b)}; }
  double jacobian(int a, int b) const;
};

/// One surface patch, stored as point samples at the n_geo x n_geo Chebyshev
/// nodes and evaluated through its Chebyshev interpolant.
class Patch {
 public:
  Patch(int id, int n_geo, std::vector<Vec3> points, bool flip = false, std::string label = {});

  int id() const noexcept { return id_; }
  int n_geo() const noexcept { return n_geo_; }
  const std::vector<Vec3>& points() const noexcept { return points_; }
  bool flipped() const noexcept { return flip_; }
  const std::string& label() const noexcept { return label_; }
  double diameter() const noexcept { return diameter_; }

  Vec3 eval(double u, double v) const;
  GeometryFrame frame(double u, double v) const;
  PatchDerivatives derivatives(double u, double v) const;

  void sample_tensor(std::span<const double> s, std::span<const double> t, TensorSamples& out) const;
  // Same grid given as offsets from (s0, t0); `position` then holds
  // r(s0 + ds, t0 + dt) - r(s0, t0), formed without cancellation.
  void sample_tensor_offset(double s0, double t0, std::span<const double> ds, std::span<const double> dt,
                            TensorSamples& out) const;

 private:
  int id_;
  int n_geo_;
  std::vector<Vec3> points_;
  bool flip_;
  std::string label_;
  double diameter_ = 0;
  // Coefficient matrices C(k, l) of sum C T_k(u) T_l(v), per component.
  std::array<Eigen::MatrixXd, 3> c_, cu_, cv_, cuu_, cuv_, cvv_;
};

struct Mesh {
  std::vector<Patch> patches;
  double lambda = 1.0;
  int n_geo = 16;
};

inline constexpr int kDefaultGeometryOrder = 16;

/// Builds a patch by sampling an analytic map at the n_geo x n_geo Chebyshev nodes.
Patch patch_from_function(int id, int n_geo, const std::function<Vec3(double, double)>& map,
                          std::string label = {});

/// Equiangular cube-sphere with 6 * refinement^2 patches; `non_uniform` splits
/// the +x face one extra level, which produces non-conforming edges.
Mesh make_sphere_mesh(double diameter, int refinement, int n_geo = kDefaultGeometryOrder,
                      bool non_uniform = false, double lambda = 1.0);

/// Torus with major radius (D+d)/4 and minor radius (D-d)/4 split uniformly in
/// both angles. Patches facing the symmetry axis are labelled "inner".
Mesh make_toroid_mesh(double d_out, double d_in, int n_major, int n_minor,
                      int n_geo = kDefaultGeometryOrder, double lambda = 1.0);

std::string mesh_to_json(const Mesh& mesh);
Mesh mesh_from_json(const std::string& text);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);
Mesh load_mesh(const std::filesystem::path& path);

/// Minimum distance from target to a set of patch nodes. A sorting proxy only.
double patch_proxy_distance(std::span<const Vec3> nodes, const Vec3& target);
double patch_proxy_distance(const Patch& patch, const Vec3& target, const ChebGrid& grid);

/// A mesh discretized with an n x m Chebyshev grid on every patch, with the
/// geometry frames cached at every node.
class SurfaceGrid {
 public:
  SurfaceGrid(Mesh mesh, int n, int m);
  SurfaceGrid(Mesh mesh, int order) : SurfaceGrid(std::move(mesh), order, order) {}

  const Mesh& mesh() const noexcept { return mesh_; }
  const ChebGrid& grid() const noexcept { return grid_; }
  std::size_t patch_count() const noexcept { return mesh_.patches.size(); }
  std::size_t nodes_per_patch() const noexcept { return grid_.size(); }
  std::size_t node_count() const noexcept { return frames_.size(); }

  std::size_t global_index(std::size_t patch, int i, int j) const {
    return patch * nodes_per_patch() + i + static_cast<std::size_t>(grid_.n_u) * j;
  }
  std::size_t patch_of(std::size_t node) const noexcept { return node / nodes_per_patch(); }

  const GeometryFrame& frame(std::size_t node) const { return frames_[node]; }
  std::span<const GeometryFrame> patch_frames(std::size_t patch) const {
    return {frames_.data() + patch * nodes_per_patch(), nodes_per_patch()};
  }
  std::span<const Vec3> patch_positions(std::size_t patch) const {
    return {positions_.data() + patch * nodes_per_patch(), nodes_per_patch()};
  }
  // sqrt|G| w_i w_j at a node: the Fejer far-rule weight.
  double quadrature_weight(std::size_t node) const { return qweights_[node]; }

 private:
  Mesh mesh_;
  ChebGrid grid_;
  std::vector<GeometryFrame> frames_;
  std::vector<Vec3> positions_;
  std::vector<double> qweights_;
};

}  // namespace cbie
