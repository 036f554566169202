#pragma once

// Equally spaced (trapezoid) means over the torus [0, 2pi)^d.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sparsewalk/lattice.hpp"
#include "sparsewalk/parallel.hpp"

namespace sparsewalk {

namespace detail {
inline constexpr std::size_t kQuadratureChunk = std::size_t{1} << 14;
}

/// Mean of f over the N^d grid theta_j = 2 pi j / N. f(const double* theta) -> T.
/// Chunks are summed independently and combined pairwise, so the value does not depend on
/// the worker count.
template <class T, class F>
T torus_mean(int dim, std::size_t n, F&& f) {
  std::size_t total = 1;
  for (int a = 0; a < dim; ++a) total *= n;
  const std::size_t chunks = (total + detail::kQuadratureChunk - 1) / detail::kQuadratureChunk;
  std::vector<T> partial(chunks, T{});
  const double h = 2.0 * std::numbers::pi / static_cast<double>(n);
  auto body = [&](std::size_t c) {
    const std::size_t begin = c * detail::kQuadratureChunk;
    const std::size_t end = std::min(total, begin + detail::kQuadratureChunk);
    std::vector<T> vals;
    vals.reserve(end - begin);
    double theta[kMaxDim] = {0.0, 0.0, 0.0};
    for (std::size_t idx = begin; idx < end; ++idx) {
      std::size_t rem = idx;
      for (int a = dim - 1; a >= 0; --a) {
        theta[a] = h * static_cast<double>(rem % n);
        rem /= n;
      }
      vals.push_back(f(static_cast<const double*>(theta)));
    }
    partial[c] = pairwise_sum(vals);
  };
  if (total >= (std::size_t{1} << 16)) {
    parallel_tasks(chunks, body);
  } else {
    for (std::size_t c = 0; c < chunks; ++c) body(c);
  }
  return pairwise_sum(partial) / static_cast<double>(total);
}

/// Largest points per axis the adaptive quadrature may reach in dimension d.
inline std::size_t quadrature_cap(int dim) {
  switch (dim) {
    case 1: return std::size_t{1} << 22;
    case 2: return 4096;
    default: return 256;
  }
}

}  // namespace sparsewalk
