// Shared helpers for the test suite: random matrix builders, a central
// finite-difference probe, and a self-cleaning scratch directory.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "roundrank/matrix.hpp"

namespace testutil {

inline roundrank::RealMatrix gaussian_matrix(std::size_t n, std::size_t m,
                                             std::mt19937_64& rng, double sigma = 1.0) {
  roundrank::RealMatrix x(n, m);
  std::normal_distribution<double> g(0.0, sigma);
  for (double& v : x.data) v = g(rng);
  return x;
}

// Product of two gaussian factors, so the result has rank <= r exactly.
inline roundrank::RealMatrix low_rank_matrix(std::size_t n, std::size_t m, std::size_t r,
                                             std::mt19937_64& rng) {
  const auto a = gaussian_matrix(n, r, rng);
  const auto b = gaussian_matrix(m, r, rng);
  roundrank::RealMatrix x(n, m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < r; ++c)
      for (std::size_t j = 0; j < m; ++j) x(i, j) += a(i, c) * b(j, c);
  return x;
}

inline double frob_norm(const roundrank::RealMatrix& x) {
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  return std::sqrt(acc);
}

// |a - b| measured against max(1, |b|): absolute near zero, relative at scale.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(b));
}

// Central difference of a scalar function of one coordinate.
template <typename F>
double central_diff(F&& f, double& slot, double h = 1e-5) {
  const double saved = slot;
  slot = saved + h;
  const double up = f();
  slot = saved - h;
  const double down = f();
  slot = saved;
  return (up - down) / (2.0 * h);
}

// Scratch directory under the system temp root, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;

  explicit ScratchDir(const std::string& stem) {
    static std::atomic<unsigned> counter{0};
    path = std::filesystem::temp_directory_path() /
           (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
