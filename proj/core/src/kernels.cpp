#include "cbie/kernels.hpp"

#include <array>

namespace cbie {

Wavenumber::Wavenumber(double value) : k(value) {
  if (!std::isfinite(value) || value < 0) throw DomainError("wavenumber must be finite and >= 0");
}

KernelKind KernelKind::adjoint_double_layer(const Vec3& n) {
  if (std::abs(n.norm() - 1.0) > 1e-10) throw DomainError("adjoint double layer needs a unit normal");
  return {KernelTag::AdjointDoubleLayer, n};
}

namespace {

double checked_distance(const Vec3& r, const Vec3& rp) {
  const double big_r = (r - rp).norm();
  if (!(big_r >= 1e-300)) throw SingularEvaluationError("Green's function evaluated at r == r'");
  return big_r;
}

}  // namespace

Complex greens(Wavenumber k, const Vec3& r, const Vec3& rp) {
  const double big_r = checked_distance(r, rp);
  return std::exp(Complex(0.0, k.k * big_r)) / (4.0 * kPi * big_r);
}

Vec3c grad_greens(Wavenumber k, const Vec3& r, const Vec3& rp) {
  const double big_r = checked_distance(r, rp);
  const Complex factor =
      Complex(-1.0, k.k * big_r) * std::exp(Complex(0.0, k.k * big_r)) / (4.0 * kPi * big_r * big_r * big_r);
  return factor * (r - rp).cast<Complex>();
}

Complex kernel_value(const KernelKind& kind, Wavenumber k, const Vec3& r, const Vec3& rp) {
  KernelCounter::add(1);
  if (kind.tag == KernelTag::SingleLayer) return greens(k, r, rp);
  return kind.normal.cast<Complex>().dot(grad_greens(k, r, rp));
}

double helmholtz_residual(Wavenumber k, const Vec3& r, const Vec3& rp, double h) {
  const Complex g0 = greens(k, r, rp);
  Complex lap = -6.0 * g0;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 step = Vec3::Zero();
    step[axis] = h;
    lap += greens(k, r + step, rp) + greens(k, r - step, rp);
  }
  lap /= h * h;
  return std::abs(lap + k.k * k.k * g0) / std::abs(g0);
}

}  // namespace cbie
