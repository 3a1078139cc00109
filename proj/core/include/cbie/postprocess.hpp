#pragma once

// Far field and radar cross section of a solved current, the PEC-sphere Mie
// series reference and error norms.

#include <span>
#include <vector>

#include "cbie/geometry.hpp"
#include "cbie/solver.hpp"

namespace cbie {

struct Direction2 {
  double theta_deg = 0;
  double phi_deg = 0;

  Vec3 unit() const;
};

/// theta from theta0 to theta1 (inclusive) in steps of `step` at fixed phi.
std::vector<Direction2> theta_sweep(double theta0, double theta1, double step, double phi_deg);

struct FarFieldPattern {
  std::vector<Direction2> directions;
  std::vector<Vec3c> amplitude;  // F(r_hat)
  std::vector<double> sigma;     // 4 pi |F|^2
  double wavelength = 1.0;

  double sigma_over_lambda2(std::size_t k) const { return sigma[k] / (wavelength * wavelength); }
  double sigma_db(std::size_t k) const { return to_db(sigma_over_lambda2(k)); }

  static double to_db(double x) { return 10.0 * std::log10(x); }
  static double from_db(double db) { return std::pow(10.0, db / 10.0); }
};

/// F(r) = (i k0 / 4 pi)(I - r r^T) sum_q J(x_q) exp(-i k0 r . x_q) sqrt|G| w_q.
FarFieldPattern far_field(const SurfaceGrid& surface, const SurfaceDensity& density, double k0,
                          std::span<const Direction2> directions);
FarFieldPattern far_field(const SurfaceGrid& surface, std::span<const Vec3c> cartesian, double k0,
                          std::span<const Direction2> directions);

/// Series order used for a sphere of the given size parameter k0 a.
int mie_truncation(double size_parameter);

/// Cartesian n x H on the PEC sphere of the given diameter centred at the origin
/// (x-polarized plane wave travelling along +z, exp(-i w t), unit impedance).
std::vector<Vec3c> mie_surface_current(double diameter, double k0, std::span<const Vec3> points,
                                       int extra_terms = 0);

FarFieldPattern mie_rcs(double diameter, double k0, std::span<const Direction2> directions);

enum class Norm { L2, Max };

double relative_error(std::span<const Complex> candidate, std::span<const Complex> reference, Norm norm = Norm::L2);
double relative_error(std::span<const double> candidate, std::span<const double> reference, Norm norm = Norm::L2);
double relative_error(std::span<const Vec3c> candidate, std::span<const Vec3c> reference, Norm norm = Norm::L2);

}  // namespace cbie
