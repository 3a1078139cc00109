#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cbie {

using Complex = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// Error hierarchy. Everything thrown by the library derives from Error so
// front-ends can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DegeneratePatchError : public Error {
 public:
  DegeneratePatchError(int patch_id, const std::string& what)
      : Error(what), patch_id_(patch_id) {}
  int patch_id() const noexcept { return patch_id_; }

 private:
  int patch_id_;
};

class SingularEvaluationError : public Error {
 public:
  using Error::Error;
};

// Dense two-index table with the first index (u) running fastest in memory.
// This is the node ordering used everywhere: entry (i, j) sits at i + nu * j.
template <class T>
class Table2D {
 public:
  Table2D() = default;
  Table2D(int nu, int nv, const T& fill = T{})
      : nu_(nu), nv_(nv), data_(static_cast<std::size_t>(nu) * nv, fill) {}

  int nu() const noexcept { return nu_; }
  int nv() const noexcept { return nv_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int i, int j) { return data_[i + static_cast<std::size_t>(nu_) * j]; }
  const T& operator()(int i, int j) const {
    return data_[i + static_cast<std::size_t>(nu_) * j];
  }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(const Table2D& o) const noexcept { return nu_ == o.nu_ && nv_ == o.nv_; }

 private:
  int nu_ = 0;
  int nv_ = 0;
  std::vector<T> data_;
};

}  // namespace cbie
