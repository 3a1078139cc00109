#include <cmath>

#include "cbie/postprocess.hpp"
#include "doctest.h"

using namespace cbie;

namespace {

std::vector<Vec3> node_positions(const SurfaceGrid& s) {
  std::vector<Vec3> p(s.node_count());
  for (std::size_t g = 0; g < p.size(); ++g) p[g] = s.frame(g).position;
  return p;
}

}  // namespace

TEST_CASE("theta sweep and dB helpers") {
  auto d = theta_sweep(0, 180, 0.5, 90);
  REQUIRE(d.size() == 361);
  CHECK(d.front().theta_deg == 0);
  CHECK(d.back().theta_deg == 180);
  CHECK(d[1].theta_deg == 0.5);
  CHECK((d[0].unit() - Vec3::UnitZ()).norm() < 1e-15);
  CHECK((Direction2{90, 90}.unit() - Vec3::UnitY()).norm() < 1e-15);
  CHECK_THROWS_AS(theta_sweep(0, 180, 0, 0), DomainError);
  CHECK(FarFieldPattern::to_db(100.0) == doctest::Approx(20.0));
  CHECK(FarFieldPattern::from_db(FarFieldPattern::to_db(3.7)) == doctest::Approx(3.7).epsilon(1e-14));
}

TEST_CASE("relative error norms") {
  std::vector<double> r{3, 4}, c{3, 5};
  CHECK(relative_error(std::span<const double>(c), std::span<const double>(r)) == doctest::Approx(0.2));
  CHECK(relative_error(std::span<const double>(c), std::span<const double>(r), Norm::Max) == doctest::Approx(0.25));
  std::vector<double> zero{0, 0};
  CHECK_THROWS_AS(relative_error(std::span<const double>(c), std::span<const double>(zero)), DomainError);
  std::vector<double> shorter{1};
  CHECK_THROWS_AS(relative_error(std::span<const double>(shorter), std::span<const double>(r)), ShapeMismatch);
}

TEST_CASE("Rayleigh limit of the PEC sphere") {
  const double a = 1.0, ka = 0.01, k0 = ka / a;
  std::vector<Direction2> back{{180, 0}, {180, 90}};
  auto p = mie_rcs(2 * a, k0, back);
  for (double s : p.sigma) {
    const double ratio = s / (kPi * a * a) / (9 * std::pow(ka, 4));
    CHECK(std::abs(ratio - 1) < 0.01);
  }
}

TEST_CASE("forward scattering dominates for electrically large spheres") {
  for (double ka : {5.0, 8.0, 12.0}) {
    std::vector<Direction2> d{{0, 0}, {180, 0}, {0, 90}, {180, 90}};
    auto p = mie_rcs(2.0, ka, d);
    CHECK(p.sigma[0] > p.sigma[1]);
    CHECK(p.sigma[2] > p.sigma[3]);
  }
}

TEST_CASE("series truncation is converged") {
  const double k0 = 2 * kPi;
  Mesh mesh = make_sphere_mesh(1.0, 1);
  SurfaceGrid s(mesh, 6, 6);
  auto pts = node_positions(s);
  auto j0 = mie_surface_current(1.0, k0, pts);
  auto j1 = mie_surface_current(1.0, k0, pts, 10);
  double worst = 0, scale = 0;
  for (std::size_t q = 0; q < pts.size(); ++q) {
    worst = std::max(worst, (j0[q] - j1[q]).norm());
    scale = std::max(scale, j1[q].norm());
  }
  CHECK(worst < 1e-13 * scale);
  CHECK(mie_truncation(3.14) == 24);
  CHECK_THROWS_AS(mie_rcs(1.0, 0.0, theta_sweep(0, 10, 1, 0)), DomainError);
}

TEST_CASE("Mie current is tangential and tends to the magnetostatic limit") {
  const double k0 = 0.002;  // ka = 0.001
  Mesh mesh = make_sphere_mesh(1.0, 1);
  SurfaceGrid s(mesh, 6, 6);
  auto pts = node_positions(s);
  auto j = mie_surface_current(1.0, k0, pts);
  for (std::size_t q = 0; q < pts.size(); ++q) {
    const Vec3 n = pts[q].normalized();
    CHECK(std::abs(n.cast<Complex>().dot(j[q])) < 1e-12);
    // Static field at a PEC sphere is 3/2 times the tangential applied field.
    const Vec3c expected = (1.5 * n.cross(Vec3::UnitY())).cast<Complex>();
    CHECK((j[q] - expected).norm() < 5e-3);
  }
}

TEST_CASE("far field of the Mie current reproduces the Mie RCS") {
  const double k0 = 2 * kPi;
  Mesh mesh = make_sphere_mesh(1.0, 2);
  SurfaceGrid s(mesh, 10, 10);
  auto j = mie_surface_current(1.0, k0, node_positions(s));
  for (double phi : {0.0, 90.0}) {
    auto dirs = theta_sweep(0, 180, 0.5, phi);
    auto ff = far_field(s, std::span<const Vec3c>(j), k0, dirs);
    auto ref = mie_rcs(1.0, k0, dirs);
    const double err = relative_error(std::span<const double>(ff.sigma), std::span<const double>(ref.sigma));
    MESSAGE("phi " << phi << " rcs error " << err);
    CHECK(err <= 1e-6);
    // The amplitude is transverse.
    for (std::size_t d = 0; d < dirs.size(); ++d)
      CHECK(std::abs(dirs[d].unit().cast<Complex>().dot(ff.amplitude[d])) < 1e-12 * (1 + ff.amplitude[d].norm()));
  }
}

TEST_CASE("far field evaluated from components matches the Cartesian path") {
  const double k0 = 2 * kPi;
  Mesh mesh = make_sphere_mesh(1.0, 1);
  SurfaceGrid s(mesh, 6, 6);
  auto d = incident_rhs(s, k0);
  auto dirs = theta_sweep(0, 180, 10, 45);
  auto a = far_field(s, d, k0, dirs);
  auto cart = to_cartesian(s, d);
  auto b = far_field(s, std::span<const Vec3c>(cart), k0, dirs);
  CHECK(a.sigma == b.sigma);
  CHECK_THROWS_AS(far_field(s, d, k0, std::vector<Direction2>{}), DomainError);
}
