#pragma once

// Sylvester inertia counts for the banded symmetrized truncation, in any floating type.
// With a multiprecision type this resolves eigenvalue distances far below double rounding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "sparsewalk/kernel.hpp"
#include "sparsewalk/truncation.hpp"

namespace sparsewalk {

using MpReal = boost::multiprecision::cpp_bin_float_100;

/// Lower band of a symmetric matrix: entry (i, j) for i - b <= j <= i.
template <class T>
struct BandedSym {
  std::size_t n = 0;
  int b = 0;
  std::vector<T> band;  // row i holds columns i-b .. i

  T& at(std::size_t i, std::size_t j) { return band[i * static_cast<std::size_t>(b + 1) + (i - j)]; }
  const T& at(std::size_t i, std::size_t j) const { return band[i * static_cast<std::size_t>(b + 1) + (i - j)]; }
};

/// sqrt((1+V(x))(1+V(y))) p(y-x), with square roots taken in T.
template <class T>
BandedSym<T> banded_sym(const TruncatedOperator& op, const WalkKernel& k) {
  const LatticeBox& box = op.box;
  BandedSym<T> m;
  m.n = box.size();
  long bw = 0;
  for (const auto& e : k.entries()) {
    long delta = 0;
    for (int a = 0; a < box.dim(); ++a) delta = delta * box.side() + e.offset[static_cast<std::size_t>(a)];
    bw = std::max(bw, std::abs(delta));
  }
  m.b = static_cast<int>(bw);
  m.band.assign(m.n * static_cast<std::size_t>(m.b + 1), T(0));
  std::vector<T> ds(m.n);
  for (std::size_t i = 0; i < m.n; ++i) ds[i] = sqrt(T(1) + T(op.V[i]));
  for (std::size_t i = 0; i < m.n; ++i) {
    const Site x = box.site(i);
    for (const auto& e : k.entries()) {
      auto j = box.index(x + e.offset);
      if (!j || *j > i) continue;
      m.at(i, *j) = ds[i] * ds[*j] * T(e.prob);
    }
  }
  return m;
}

/// Number of eigenvalues strictly below s, from the signs of the LDL^T pivots of (A - s I).
template <class T>
std::size_t count_below(const BandedSym<T>& a, const T& s) {
  const std::size_t n = a.n;
  const auto b = static_cast<std::size_t>(a.b);
  std::vector<T> L(n * (b + 1), T(0));  // L(i, j) stored like the band, unit diagonal implied
  std::vector<T> D(n, T(0));
  auto Lat = [&](std::size_t i, std::size_t j) -> T& { return L[i * (b + 1) + (i - j)]; };
  const T tiny = std::numeric_limits<T>::epsilon() * std::numeric_limits<T>::epsilon();
  std::size_t negatives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j0 = i >= b ? i - b : 0;
    for (std::size_t j = j0; j < i; ++j) {
      T v = a.at(i, j);
      const std::size_t k0 = std::max(j0, j >= b ? j - b : 0);
      for (std::size_t k = k0; k < j; ++k) v -= Lat(i, k) * Lat(j, k) * D[k];
      Lat(i, j) = v / D[j];
    }
    T d = a.at(i, i) - s;
    for (std::size_t k = j0; k < i; ++k) d -= Lat(i, k) * Lat(i, k) * D[k];
    if (d == 0) d = tiny;
    D[i] = d;
    if (d < 0) ++negatives;
  }
  return negatives;
}

struct SpectrumDistance {
  double distance = 0.0;
  bool below_floor = false;  // true: the distance is at most `distance` (the resolution floor)
};

/// min |mu - target| over eigenvalues mu, by bisection in log(t) on the count of eigenvalues in
/// (target - t, target + t).
template <class T>
SpectrumDistance distance_to_spectrum(const BandedSym<T>& a, const T& target, double floor, double ceiling) {
  auto hits = [&](double t) {
    const T tt(t);
    return count_below(a, T(target + tt)) > count_below(a, T(target - tt));
  };
  if (hits(floor)) return {floor, true};
  double lo = std::log(floor), hi = std::log(ceiling);
  if (!hits(ceiling)) return {ceiling, false};
  for (int it = 0; it < 80 && hi - lo > 1e-6; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (hits(std::exp(mid))) hi = mid; else lo = mid;
  }
  return {std::exp(hi), false};
}

}  // namespace sparsewalk
