#include "cbie/postprocess.hpp"

#include <cmath>

#include "cbie/parallel.hpp"

namespace cbie {

Vec3 Direction2::unit() const {
  const double th = theta_deg * kPi / 180.0, ph = phi_deg * kPi / 180.0;
  return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
}

std::vector<Direction2> theta_sweep(double theta0, double theta1, double step, double phi_deg) {
  if (!(step > 0) || theta1 < theta0) throw DomainError("theta_sweep: invalid range");
  const auto count = static_cast<std::size_t>(std::floor((theta1 - theta0) / step + 1e-9)) + 1;
  std::vector<Direction2> d(count);
  for (std::size_t k = 0; k < count; ++k) d[k] = {theta0 + step * static_cast<double>(k), phi_deg};
  return d;
}

FarFieldPattern far_field(const SurfaceGrid& surface, std::span<const Vec3c> j, double k0,
                          std::span<const Direction2> directions) {
  if (directions.empty()) throw DomainError("far_field: no directions");
  if (j.size() != surface.node_count()) throw ShapeMismatch("far_field: sample count mismatch");
  FarFieldPattern pat;
  pat.directions.assign(directions.begin(), directions.end());
  pat.amplitude.resize(directions.size());
  pat.sigma.resize(directions.size());
  pat.wavelength = 2.0 * kPi / k0;
  parallel_for(directions.size(), [&](std::size_t d) {
    const Vec3 r = directions[d].unit();
    Vec3c acc = Vec3c::Zero();
    for (std::size_t q = 0; q < j.size(); ++q) {
      const double ph = -k0 * r.dot(surface.frame(q).position);
      acc += j[q] * (Complex(std::cos(ph), std::sin(ph)) * surface.quadrature_weight(q));
    }
    const Vec3c rc = r.cast<Complex>();
    const Vec3c transverse = acc - rc * rc.transpose() * acc;
    pat.amplitude[d] = Complex(0.0, k0 / (4.0 * kPi)) * transverse;
    pat.sigma[d] = 4.0 * kPi * pat.amplitude[d].squaredNorm();
  });
  return pat;
}

FarFieldPattern far_field(const SurfaceGrid& surface, const SurfaceDensity& density, double k0,
                          std::span<const Direction2> directions) {
  const auto j = to_cartesian(surface, density);
  return far_field(surface, std::span<const Vec3c>(j), k0, directions);
}

int mie_truncation(double x) { return static_cast<int>(std::ceil(x)) + 20; }

namespace {

struct MieSeries {
  double x = 0;
  int order = 0;
  // Riccati-Bessel psi_n(x), xi_n(x) = x h_n^(1)(x) and derivatives, n = 0..L.
  std::vector<double> psi, dpsi;
  std::vector<Complex> xi, dxi, a, b;
};

MieSeries mie_series(double x, int order) {
  if (!(x > 0)) throw DomainError("Mie series needs a positive size parameter");
  if (x > 200) throw DomainError("Mie series limited to k0 a <= 200");
  MieSeries s;
  s.x = x;
  s.order = order;
  s.psi.resize(order + 1);
  s.dpsi.resize(order + 1);
  s.xi.resize(order + 1);
  s.dxi.resize(order + 1);
  s.a.resize(order + 1);
  s.b.resize(order + 1);
  for (int n = 0; n <= order; ++n) {
    const auto un = static_cast<unsigned>(n);
    s.psi[n] = x * std::sph_bessel(un, x);
    s.xi[n] = x * Complex(std::sph_bessel(un, x), std::sph_neumann(un, x));
  }
  s.dpsi[0] = std::cos(x);
  s.dxi[0] = Complex(std::cos(x), std::sin(x));  // d/dx (-i e^{ix})
  for (int n = 1; n <= order; ++n) {
    s.dpsi[n] = s.psi[n - 1] - n * s.psi[n] / x;
    s.dxi[n] = s.xi[n - 1] - static_cast<double>(n) * s.xi[n] / x;
    s.a[n] = s.dpsi[n] / s.dxi[n];
    s.b[n] = s.psi[n] / s.xi[n];
  }
  for (int n = 0; n <= order; ++n)
    if (!std::isfinite(std::abs(s.xi[n])) || !std::isfinite(std::abs(s.dxi[n])))
      throw DomainError("Mie series: Riccati-Bessel overflow");
  // Truncation check on the last retained term.
  double biggest = 0;
  for (int n = 1; n <= order; ++n) biggest = std::max({biggest, std::abs(s.a[n]), std::abs(s.b[n])});
  const double last = std::max(std::abs(s.a[order]), std::abs(s.b[order]));
  if (!(last <= 1e-14 * biggest)) throw DomainError("Mie series truncation residual too large");
  return s;
}

// Angular functions pi_n(cos theta), tau_n(cos theta), n = 0..L.
void angular(double mu, int order, std::vector<double>& pi, std::vector<double>& tau) {
  pi.assign(order + 1, 0.0);
  tau.assign(order + 1, 0.0);
  if (order >= 1) pi[1] = 1.0;
  for (int n = 2; n <= order; ++n)
    pi[n] = (2.0 * n - 1.0) / (n - 1.0) * mu * pi[n - 1] - n / (n - 1.0) * pi[n - 2];
  for (int n = 1; n <= order; ++n) tau[n] = n * mu * pi[n] - (n + 1.0) * pi[n - 1];
}

Complex e_n(int n) {
  static const Complex powers[4] = {1.0, Complex(0, 1), -1.0, Complex(0, -1)};
  return powers[n % 4] * ((2.0 * n + 1.0) / (n * (n + 1.0)));
}

}  // namespace

std::vector<Vec3c> mie_surface_current(double diameter, double k0, std::span<const Vec3> points,
                                       int extra_terms) {
  const double radius = 0.5 * diameter;
  const double x = k0 * radius;
  const MieSeries s = mie_series(x, mie_truncation(x) + extra_terms);
  std::vector<Vec3c> out(points.size());
  std::vector<double> pi, tau;
  for (std::size_t q = 0; q < points.size(); ++q) {
    const Vec3& p = points[q];
    const double rho = std::hypot(p.x(), p.y());
    const double theta = std::atan2(rho, p.z());
    const double phi = std::atan2(p.y(), p.x());
    angular(std::cos(theta), s.order, pi, tau);
    Complex h_theta{}, h_phi{};
    for (int n = 1; n <= s.order; ++n) {
      const Complex en = e_n(n);
      const Complex i_over_dxi = Complex(0, 1) / (x * s.dxi[n]);
      const Complex one_over_xi = 1.0 / (x * s.xi[n]);
      h_theta += en * (pi[n] * i_over_dxi - tau[n] * one_over_xi);
      h_phi += en * (tau[n] * i_over_dxi - pi[n] * one_over_xi);
    }
    h_theta *= std::sin(phi);
    h_phi *= std::cos(phi);
    const Vec3 th_hat(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
    const Vec3 ph_hat(-std::sin(phi), std::cos(phi), 0.0);
    // J = r x H = H_theta phi_hat - H_phi theta_hat
    out[q] = ph_hat.cast<Complex>() * h_theta - th_hat.cast<Complex>() * h_phi;
  }
  return out;
}

FarFieldPattern mie_rcs(double diameter, double k0, std::span<const Direction2> directions) {
  if (directions.empty()) throw DomainError("mie_rcs: no directions");
  const double x = 0.5 * k0 * diameter;
  const MieSeries s = mie_series(x, mie_truncation(x));
  FarFieldPattern pat;
  pat.directions.assign(directions.begin(), directions.end());
  pat.amplitude.resize(directions.size());
  pat.sigma.resize(directions.size());
  pat.wavelength = 2.0 * kPi / k0;
  std::vector<double> pi, tau;
  for (std::size_t d = 0; d < directions.size(); ++d) {
    const double theta = directions[d].theta_deg * kPi / 180.0;
    const double phi = directions[d].phi_deg * kPi / 180.0;
    angular(std::cos(theta), s.order, pi, tau);
    Complex s1{}, s2{};
    for (int n = 1; n <= s.order; ++n) {
      const double c = (2.0 * n + 1.0) / (n * (n + 1.0));
      s1 += c * (s.a[n] * pi[n] + s.b[n] * tau[n]);
      s2 += c * (s.a[n] * tau[n] + s.b[n] * pi[n]);
    }
    const Vec3 th_hat(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
    const Vec3 ph_hat(-std::sin(phi), std::cos(phi), 0.0);
    pat.amplitude[d] = Complex(0, 1.0 / k0) *
                       (std::cos(phi) * s2 * th_hat.cast<Complex>() - std::sin(phi) * s1 * ph_hat.cast<Complex>());
    pat.sigma[d] = 4.0 * kPi / (k0 * k0) *
                   (std::pow(std::cos(phi), 2) * std::norm(s2) + std::pow(std::sin(phi), 2) * std::norm(s1));
  }
  return pat;
}

namespace {

template <class T, class Mag>
double rel_err(std::span<const T> c, std::span<const T> r, Norm norm, Mag mag) {
  if (c.size() != r.size()) throw ShapeMismatch("relative_error: length mismatch");
  double num = 0, den = 0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double e = mag(c[k] - r[k]), m = mag(r[k]);
    if (norm == Norm::L2) {
      num += e * e;
      den += m * m;
    } else {
      num = std::max(num, e);
      den = std::max(den, m);
    }
  }
  if (den == 0) throw DomainError("relative_error: reference norm is zero");
  return norm == Norm::L2 ? std::sqrt(num / den) : num / den;
}

}  // namespace

double relative_error(std::span<const Complex> c, std::span<const Complex> r, Norm norm) {
  return rel_err(c, r, norm, [](const Complex& z) { return std::abs(z); });
}

double relative_error(std::span<const double> c, std::span<const double> r, Norm norm) {
  return rel_err(c, r, norm, [](double z) { return std::abs(z); });
}

double relative_error(std::span<const Vec3c> c, std::span<const Vec3c> r, Norm norm) {
  return rel_err(c, r, norm, [](const Vec3c& z) { return z.norm(); });
}

}  // namespace cbie
