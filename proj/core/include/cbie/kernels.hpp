#pragma once

// Free-space Helmholtz Green's function G = exp(ikR) / (4 pi R) (exp(-i w t)
// convention), its target gradient, and the single-layer / adjoint
// double-layer kernels.

#include <atomic>
#include <cmath>
#include <cstdint>

#include "cbie/common.hpp"

namespace cbie {

struct Wavenumber {
  double k = 0.0;

  explicit Wavenumber(double value);
  Wavenumber() = default;
  operator double() const noexcept { return k; }
};

enum class KernelTag { SingleLayer, AdjointDoubleLayer };

struct KernelKind {
  KernelTag tag = KernelTag::SingleLayer;
  Vec3 normal = Vec3::Zero();  // target normal, AdjointDoubleLayer only

  static KernelKind single_layer() { return {}; }
  static KernelKind adjoint_double_layer(const Vec3& n);
};

/// Process-wide count of kernel evaluations. Increments are relaxed atomics;
/// totals are exact once all workers have joined.
class KernelCounter {
 public:
  static void add(std::uint64_t n) noexcept { count_.fetch_add(n, std::memory_order_relaxed); }
  static std::uint64_t value() noexcept { return count_.load(std::memory_order_relaxed); }

 private:
  static inline std::atomic<std::uint64_t> count_{0};
};

Complex greens(Wavenumber k, const Vec3& r, const Vec3& rp);
Vec3c grad_greens(Wavenumber k, const Vec3& r, const Vec3& rp);

/// Counted kernel evaluation; each call adds exactly one to KernelCounter.
Complex kernel_value(const KernelKind& kind, Wavenumber k, const Vec3& r, const Vec3& rp);

/// |(Delta_h + k^2) G| / |G| with a 7-point Laplacian of step h (diagnostic).
double helmholtz_residual(Wavenumber k, const Vec3& r, const Vec3& rp, double h);

// Both kernels at one source position, sharing the exponential. Uncounted:
// batched callers account for their evaluations through KernelCounter::add.
struct KernelPair {
  Complex single;
  Complex adjoint;
};

// d = r - rp supplied directly, for callers that form it without cancellation.
inline KernelPair kernel_pair_offset(double k, const Vec3& d, const Vec3& n) {
  const double r2 = d.squaredNorm();
  const double big_r = std::sqrt(r2);
  const double inv = 1.0 / big_r;
  const double kr = k * big_r;
  const Complex e(std::cos(kr), std::sin(kr));
  const Complex g = e * (inv / (4.0 * kPi));
  // grad_r G = (ikR - 1) e^{ikR} / (4 pi R^3) (r - rp)
  const Complex radial = g * Complex(-1.0, kr) * (inv * inv);
  return {g, radial * n.dot(d)};
}

inline KernelPair kernel_pair(double k, const Vec3& r, const Vec3& n, const Vec3& rp) {
  return kernel_pair_offset(k, r - rp, n);
}

}  // namespace cbie
