#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cbie/geometry.hpp"
#include "doctest.h"

using namespace cbie;

namespace {

Patch flat_patch(double scale = 1.0, int n_geo = 8) {
  return patch_from_function(0, n_geo, [scale](double u, double v) { return Vec3(scale * u, scale * v, 0); });
}

double area(const Patch& p, int q = 16) {
  ChebGrid g(q, q);
  double a = 0;
  for (int j = 0; j < q; ++j)
    for (int i = 0; i < q; ++i) a += g.weight(i, j) * p.frame(g.nodes_u[i], g.nodes_v[j]).jacobian;
  return a;
}

double mesh_area(const Mesh& m) {
  double a = 0;
  for (const auto& p : m.patches) a += area(p);
  return a;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cbie_test_geometry";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("flat patch frame") {
  auto p = flat_patch();
  auto f = p.frame(0.3, -0.7);
  CHECK((f.e_u - Vec3(1, 0, 0)).norm() < 1e-13);
  CHECK((f.e_v - Vec3(0, 1, 0)).norm() < 1e-13);
  CHECK((f.normal - Vec3(0, 0, 1)).norm() < 1e-13);
  CHECK(std::abs(f.jacobian - 1.0) < 1e-13);
  auto s = flat_patch(2.5);
  CHECK(std::abs(s.frame(0.1, 0.2).jacobian - 6.25) < 1e-12);
}

TEST_CASE("sphere generator") {
  auto m1 = make_sphere_mesh(2.0, 1);
  CHECK(m1.patches.size() == 6);
  for (const auto& p : m1.patches)
    for (const auto& x : p.points()) CHECK(std::abs(x.norm() - 1.0) < 1e-14);
  CHECK(make_sphere_mesh(2.0, 2).patches.size() == 24);
  CHECK(make_sphere_mesh(2.0, 2, 16, true).patches.size() == 5 * 4 + 16);
  auto m = make_sphere_mesh(1.0, 2);
  CHECK(std::abs(mesh_area(m) - kPi) < 1e-8);
  CHECK(std::abs(mesh_area(make_sphere_mesh(1.0, 1, 16, true)) - kPi) < 1e-8);
  ChebGrid g(10, 10);
  for (const auto& p : m.patches)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) {
        auto f = p.frame(g.nodes_u[i], g.nodes_v[j]);
        CHECK((f.normal - f.position.normalized()).norm() < 1e-10);
      }
  CHECK_THROWS_AS(make_sphere_mesh(1.0, 0), DomainError);
}

TEST_CASE("toroid generator") {
  auto m = make_toroid_mesh(4, 2, 8, 4);
  CHECK(m.patches.size() == 32);
  const double big_r = 1.5, small_r = 0.5;
  auto fine = make_toroid_mesh(4, 2, 16, 8);
  CHECK(std::abs(mesh_area(fine) - 4 * kPi * kPi * big_r * small_r) < 1e-8);
  ChebGrid g(6, 6);
  for (const auto& p : m.patches)
    for (int j = 0; j < 6; ++j)
      for (int i = 0; i < 6; ++i) {
        auto f = p.frame(g.nodes_u[i], g.nodes_v[j]);
        Vec3 axis_pt(f.position.x(), f.position.y(), 0);
        axis_pt = big_r * axis_pt.normalized();
        CHECK(f.normal.dot(f.position - axis_pt) > 0);
      }
  int inner = 0, outer = 0;
  for (const auto& p : fine.patches) {
    inner += p.label() == "inner";
    outer += p.label() == "outer";
  }
  CHECK(inner == 64);
  CHECK(outer == 64);
  CHECK_THROWS_AS(make_toroid_mesh(2, 4, 8, 4), DomainError);
  CHECK_THROWS_AS(make_toroid_mesh(4, 2, 2, 4), DomainError);
}

TEST_CASE("frame invariants on a probe grid") {
  std::vector<Patch> patches;
  for (auto& p : make_sphere_mesh(1.0, 1, 16, true).patches) patches.push_back(p);
  for (auto& p : make_toroid_mesh(4, 2, 8, 4).patches) patches.push_back(p);
  patches.push_back(patch_from_function(0, 12, [](double u, double v) {
    return Vec3(u + 0.1 * v * v, v, 0.3 * std::sin(u * v));
  }));
  for (const auto& p : patches)
    for (int b = 0; b < 20; ++b)
      for (int a = 0; a < 20; ++a) {
        const double u = -1 + 2.0 * (a + 0.5) / 20, v = -1 + 2.0 * (b + 0.5) / 20;
        auto f = p.frame(u, v);
        CHECK(std::abs(f.normal.norm() - 1) < 1e-12);
        CHECK(f.g_uu * f.g_vv - f.g_uv * f.g_uv > 0);
        CHECK(std::abs(f.e_u_contra.dot(f.e_u) - 1) < 1e-10);
        CHECK(std::abs(f.e_u_contra.dot(f.e_v)) < 1e-10);
        CHECK(std::abs(f.e_v_contra.dot(f.e_u)) < 1e-10);
        CHECK(std::abs(f.e_v_contra.dot(f.e_v) - 1) < 1e-10);
      }
}

TEST_CASE("spectral tangents match finite differences") {
  auto m = make_toroid_mesh(4, 2, 8, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-0.99, 0.99);
  const double h = 1e-5;
  for (const auto& p : m.patches)
    for (int k = 0; k < 5; ++k) {
      const double u = d(rng), v = d(rng);
      auto f = p.frame(u, v);
      const Vec3 fu = (p.eval(u + h, v) - p.eval(u - h, v)) / (2 * h);
      const Vec3 fv = (p.eval(u, v + h) - p.eval(u, v - h)) / (2 * h);
      CHECK((f.e_u - fu).norm() <= 1e-6 * f.e_u.norm());
      CHECK((f.e_v - fv).norm() <= 1e-6 * f.e_v.norm());
    }
}

TEST_CASE("offset tensor samples equal plain differences") {
  auto p = make_sphere_mesh(1.0, 2).patches[5];
  std::vector<double> ds = {1e-9, 0.01, 0.3, -0.2}, dt = {0.0, 1e-7, -0.5};
  const double s0 = 0.1, t0 = -0.3;
  TensorSamples off;
  p.sample_tensor_offset(s0, t0, ds, dt, off);
  for (std::size_t a = 0; a < ds.size(); ++a)
    for (std::size_t b = 0; b < dt.size(); ++b) {
      const Vec3 ref = p.eval(s0 + ds[a], t0 + dt[b]) - p.eval(s0, t0);
      CHECK((off.r(static_cast<int>(a), static_cast<int>(b)) - ref).norm() < 1e-14);
    }
}

TEST_CASE("degenerate patch is rejected") {
  auto p = patch_from_function(3, 6, [](double u, double) { return Vec3(u, 0, 0); });
  CHECK_THROWS_AS(p.frame(0, 0), DegeneratePatchError);
  try {
    (void)p.frame(0, 0);
  } catch (const DegeneratePatchError& e) {
    CHECK(e.patch_id() == 3);
  }
}

TEST_CASE("mesh file round trip") {
  Mesh m;
  m.n_geo = 4;
  m.patches.push_back(flat_patch(1.0, 4));
  const auto a = scratch("one.json"), b = scratch("one_again.json");
  save_mesh(m, a);
  auto loaded = load_mesh(a);
  REQUIRE(loaded.patches.size() == 1);
  CHECK(loaded.patches[0].points() == m.patches[0].points());
  save_mesh(loaded, b);
  CHECK(slurp(a) == slurp(b));

  auto sphere = make_sphere_mesh(1.0, 2);
  save_mesh(sphere, a);
  save_mesh(load_mesh(a), b);
  CHECK(slurp(a) == slurp(b));
  auto back = load_mesh(a);
  for (std::size_t k = 0; k < sphere.patches.size(); ++k) CHECK(back.patches[k].points() == sphere.patches[k].points());
}

TEST_CASE("malformed mesh names the patch") {
  const std::string bad = R"({"version":1,"lambda":1,"n_geo":2,"patches":[
    {"id":0,"points":[[0,0,0],[1,0,0],[0,1,0],[1,1,0]]},
    {"id":7,"points":[[0,0,0],[1,0,0],[0,1,0]]}]})";
  try {
    (void)mesh_from_json(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("patch 7") != std::string::npos);
  }
  CHECK_THROWS_AS(mesh_from_json("{not json"), ParseError);
  CHECK_THROWS_AS(load_mesh(scratch("does_not_exist.json")), ParseError);
  const std::string degenerate = R"({"version":1,"lambda":1,"n_geo":2,"patches":[
    {"id":4,"points":[[0,0,0],[1,0,0],[0,0,0],[1,0,0]]}]})";
  CHECK_THROWS_AS(mesh_from_json(degenerate), DegeneratePatchError);
}

TEST_CASE("proxy distance") {
  auto p = flat_patch(1.0, 8);
  ChebGrid g(10, 10);
  const Vec3 node = p.eval(g.nodes_u[3], g.nodes_v[6]);
  CHECK(patch_proxy_distance(p, node, g) < 1e-15);
  const double d = patch_proxy_distance(p, Vec3(0, 0, 1), g);
  double best = 1e9;
  for (int j = 0; j < 10; ++j)
    for (int i = 0; i < 10; ++i)
      best = std::min(best, std::sqrt(1 + g.nodes_u[i] * g.nodes_u[i] + g.nodes_v[j] * g.nodes_v[j]));
  CHECK(d >= 1.0);
  CHECK(d <= std::sqrt(1 + 2 * std::pow(std::cos(kPi / 20), 2)));
  CHECK(std::abs(d - best) < 1e-14);
}

TEST_CASE("surface grid bookkeeping") {
  SurfaceGrid s(make_sphere_mesh(1.0, 1), 5, 6);
  CHECK(s.node_count() == 6 * 30);
  CHECK(s.global_index(2, 1, 3) == 2 * 30 + 1 + 5 * 3);
  CHECK(s.patch_of(s.global_index(4, 4, 5)) == 4);
  double a = 0;
  for (std::size_t g = 0; g < s.node_count(); ++g) a += s.quadrature_weight(g);
  CHECK(std::abs(a - kPi) < 1e-3);
}
