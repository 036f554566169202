#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsewalk/error.hpp"

namespace sparsewalk {

inline constexpr int kMaxDim = 3;

/// A point of Z^d, d <= kMaxDim. Coordinates beyond the working dimension are zero.
using Site = std::array<int, kMaxDim>;

inline constexpr Site kOrigin{};

inline Site operator+(const Site& a, const Site& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Site operator-(const Site& a, const Site& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Site operator-(const Site& a) { return {-a[0], -a[1], -a[2]}; }

inline Site make_site(std::initializer_list<int> coords) {
  Site s{};
  int i = 0;
  for (int c : coords) {
    if (i >= kMaxDim) break;
    s[static_cast<std::size_t>(i++)] = c;
  }
  return s;
}

/// Euclidean norm |x|.
inline double norm2(const Site& x) {
  return std::sqrt(static_cast<double>(x[0]) * x[0] + static_cast<double>(x[1]) * x[1] +
                   static_cast<double>(x[2]) * x[2]);
}

/// Max norm |x|_inf.
inline int norm_inf(const Site& x) {
  int m = 0;
  for (int c : x) m = std::max(m, std::abs(c));
  return m;
}

inline double dot(const double* theta, const Site& x, int dim) {
  double s = 0.0;
  for (int a = 0; a < dim; ++a) s += theta[a] * x[static_cast<std::size_t>(a)];
  return s;
}

/// Ordering used for support lists: by Euclidean norm, then lexicographically.
inline bool norm_then_lex(const Site& a, const Site& b) {
  const long na = static_cast<long>(a[0]) * a[0] + static_cast<long>(a[1]) * a[1] +
                  static_cast<long>(a[2]) * a[2];
  const long nb = static_cast<long>(b[0]) * b[0] + static_cast<long>(b[1]) * b[1] +
                  static_cast<long>(b[2]) * b[2];
  if (na != nb) return na < nb;
  return a < b;
}

inline std::string to_string(const Site& x, int dim) {
  std::string s = "(";
  for (int a = 0; a < dim; ++a) {
    if (a) s += ",";
    s += std::to_string(x[static_cast<std::size_t>(a)]);
  }
  return s + ")";
}

/// The cube Q(c, l) = {x : |x - c|_inf <= l} with a row-major linear indexer.
class LatticeBox {
 public:
  LatticeBox(int dim, int radius, Site center = kOrigin) : dim_(dim), radius_(radius), center_(center) {
    if (dim < 1 || dim > kMaxDim) fail(Errc::InvalidArgument, "lattice", "dimension must be in [1,3]");
    if (radius < 0) fail(Errc::InvalidArgument, "lattice", "negative box radius");
    side_ = 2 * radius + 1;
    size_ = 1;
    for (int a = 0; a < dim; ++a) size_ *= static_cast<std::size_t>(side_);
  }

  int dim() const noexcept { return dim_; }
  int radius() const noexcept { return radius_; }
  int side() const noexcept { return side_; }
  const Site& center() const noexcept { return center_; }
  std::size_t size() const noexcept { return size_; }

  bool contains(const Site& x) const noexcept {
    for (int a = 0; a < kMaxDim; ++a) {
      const auto i = static_cast<std::size_t>(a);
      if (a < dim_) {
        if (std::abs(x[i] - center_[i]) > radius_) return false;
      } else if (x[i] != 0) {
        return false;
      }
    }
    return true;
  }

  std::optional<std::size_t> index(const Site& x) const noexcept {
    if (!contains(x)) return std::nullopt;
    return index_unchecked(x);
  }

  std::size_t index_unchecked(const Site& x) const noexcept {
    std::size_t idx = 0;
    for (int a = 0; a < dim_; ++a) {
      const auto i = static_cast<std::size_t>(a);
      idx = idx * static_cast<std::size_t>(side_) + static_cast<std::size_t>(x[i] - center_[i] + radius_);
    }
    return idx;
  }

  Site site(std::size_t idx) const noexcept {
    Site x{};
    for (int a = dim_ - 1; a >= 0; --a) {
      const auto i = static_cast<std::size_t>(a);
      x[i] = static_cast<int>(idx % static_cast<std::size_t>(side_)) - radius_ + center_[i];
      idx /= static_cast<std::size_t>(side_);
    }
    return x;
  }

  std::vector<Site> sites() const {
    std::vector<Site> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = site(i);
    return out;
  }

 private:
  int dim_;
  int radius_;
  Site center_;
  int side_ = 1;
  std::size_t size_ = 1;
};

/// Pairwise (cascade) summation; the result depends only on the input order.
template <class T>
T pairwise_sum(const T* data, std::size_t n) {
  if (n == 0) return T{};
  if (n <= 16) {
    T s = data[0];
    for (std::size_t i = 1; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

template <class T>
T pairwise_sum(const std::vector<T>& v) {
  return pairwise_sum(v.data(), v.size());
}

}  // namespace sparsewalk
