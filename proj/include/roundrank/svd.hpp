#pragma once

// Dense singular value decomposition via one-sided Jacobi rotations, plus the
// truncation residuals used for approximate-rank curves. One-sided Jacobi is
// slower than bidiagonalization but compact, numerically robust, and exact
// enough here: inputs stay well under a couple thousand rows/columns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "roundrank/matrix.hpp"

namespace roundrank {

struct SvdResult {
  std::vector<double> singular_values;  // descending, non-negative
  RealMatrix left_vectors;              // n x r, orthonormal columns
  RealMatrix right_vectors;             // m x r, orthonormal columns
};

namespace detail {

// Orthogonalizes columns of a (tall, n >= m) in place by plane rotations and
// accumulates the rotations into v. On return the columns of a are mutually
// orthogonal; their norms are the singular values.
inline void one_sided_jacobi(RealMatrix& a, RealMatrix& v) {
  const std::size_t n = a.n_rows, m = a.n_cols;
  const double tol = 50.0 * std::numeric_limits<double>::epsilon();
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          alpha += ap * ap;
          beta += aq * aq;
          gamma += ap * aq;
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }
}

// Fills null columns of u (those whose singular value vanished) with unit
// vectors orthogonal to every other column, so the returned basis stays
// orthonormal even for rank-deficient inputs.
inline void complete_basis(RealMatrix& u, const std::vector<std::size_t>& null_cols) {
  const std::size_t n = u.n_rows, m = u.n_cols;
  std::size_t candidate = 0;
  for (std::size_t col : null_cols) {
    for (; candidate <= n; ++candidate) {
      detail::require(candidate < n, "svd: failed to complete orthonormal basis");
      std::vector<double> w(n, 0.0);
      w[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {  // twice-is-enough Gram-Schmidt
        for (std::size_t c = 0; c < m; ++c) {
          if (c == col) continue;
          bool is_null = false;
          for (std::size_t other : null_cols)
            if (other == c && other >= col) { is_null = true; break; }
          if (is_null) continue;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += w[i] * u(i, c);
          for (std::size_t i = 0; i < n; ++i) w[i] -= dot * u(i, c);
        }
      }
      double nrm = 0.0;
      for (double x : w) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (std::size_t i = 0; i < n; ++i) u(i, col) = w[i] / nrm;
        ++candidate;
        break;
      }
    }
  }
}

}  // namespace detail

inline SvdResult svd(const RealMatrix& x) {
  detail::require(x.n_rows > 0 && x.n_cols > 0, "svd: matrix must be non-empty");
  for (double v : x.data) detail::require(std::isfinite(v), "svd: non-finite entry");

  const bool transposed = x.n_rows < x.n_cols;
  RealMatrix a = transposed ? x.transposed() : x;
  const std::size_t n = a.n_rows, m = a.n_cols;

  RealMatrix v(m, m, 0.0);
  for (std::size_t i = 0; i < m; ++i) v(i, i) = 1.0;
  detail::one_sided_jacobi(a, v);

  std::vector<double> sigma(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(nrm);
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t p, std::size_t q) { return sigma[p] > sigma[q]; });

  SvdResult out;
  out.singular_values.resize(m);
  out.left_vectors = RealMatrix(n, m);
  out.right_vectors = RealMatrix(m, m);
  std::vector<std::size_t> null_cols;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t src = order[j];
    out.singular_values[j] = sigma[src];
    if (sigma[src] > 0.0) {
      for (std::size_t i = 0; i < n; ++i) out.left_vectors(i, j) = a(i, src) / sigma[src];
    } else {
      null_cols.push_back(j);
    }
    for (std::size_t i = 0; i < m; ++i) out.right_vectors(i, j) = v(i, src);
  }
  if (!null_cols.empty()) detail::complete_basis(out.left_vectors, null_cols);

  if (transposed) std::swap(out.left_vectors, out.right_vectors);
  return out;
}

// Best achievable squared Frobenius error of any rank-k approximation:
// the sum of squared trailing singular values.
inline double best_rank_k_error(const SvdResult& s, std::size_t k) {
  double acc = 0.0;
  for (std::size_t i = k; i < s.singular_values.size(); ++i)
    acc += s.singular_values[i] * s.singular_values[i];
  return acc;
}

inline double best_rank_k_error(const RealMatrix& x, std::size_t k) {
  return best_rank_k_error(svd(x), k);
}

// Rank-k truncation U_k diag(sigma_k) V_k^T, handy for cross-checks.
inline RealMatrix rank_k_truncation(const SvdResult& s, std::size_t k) {
  const std::size_t n = s.left_vectors.n_rows, m = s.right_vectors.n_rows;
  k = std::min(k, s.singular_values.size());
  RealMatrix x(n, m, 0.0);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const double ui = s.left_vectors(i, c) * s.singular_values[c];
      for (std::size_t j = 0; j < m; ++j) x(i, j) += ui * s.right_vectors(j, c);
    }
  return x;
}

// Squared-error-vs-rank curve for an ordinal matrix read as reals: one
// (k, residual) point for each k in 0..k_max.
inline std::vector<std::pair<int, double>> approx_rank_curve(const OrdinalMatrix& y,
                                                             int k_max) {
  validate_ordinal(y, "approx_rank_curve");
  detail::require(k_max >= 0, "approx_rank_curve: k_max must be >= 0");
  RealMatrix x(y.n_rows, y.n_cols);
  for (std::size_t c = 0; c < y.data.size(); ++c) x.data[c] = static_cast<double>(y.data[c]);
  const SvdResult s = svd(x);
  std::vector<std::pair<int, double>> curve;
  const int top = std::min<int>(k_max, static_cast<int>(s.singular_values.size()));
  for (int k = 0; k <= k_max; ++k)
    curve.emplace_back(k, best_rank_k_error(s, static_cast<std::size_t>(std::min(k, top))));
  return curve;
}

}  // namespace roundrank
