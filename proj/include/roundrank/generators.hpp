#pragma once

// Synthetic ordinal matrices with known low round-rank, each paired with an
// explicit witness. Witness parameterizations:
//
//   upper triangle   rank 1: u_i = tau/(i + 0.5), v_j = j + 1, so the score
//                    crosses tau exactly between columns i-1 and i
//   banded families  rank 2 via points on a circular arc: scores
//                    x_ij = cos(theta_i - theta_j) decrease with |i - j|, and
//                    a threshold between two adjacent separations carves out
//                    any centered band (identity is bandwidth 1)
//   random low rank  gaussian factors; thresholds sit at gap midpoints of the
//                    score distribution so every level occurs with margin
//
// Constructions are never trusted: generate() verifies each witness and
// throws if verification fails.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "roundrank/analysis.hpp"
#include "roundrank/link.hpp"
#include "roundrank/matrix.hpp"

namespace roundrank {

enum class MatrixFamily {
  identity,
  upper_triangle,
  band_diagonal,
  block_diagonal,
  complement_identity,
  complement_upper_triangle,
  complement_band_diagonal,
  random_low_grr,
};

inline std::string family_name(MatrixFamily f) {
  switch (f) {
    case MatrixFamily::identity: return "identity";
    case MatrixFamily::upper_triangle: return "upper_triangle";
    case MatrixFamily::band_diagonal: return "band_diagonal";
    case MatrixFamily::block_diagonal: return "block_diagonal";
    case MatrixFamily::complement_identity: return "complement_identity";
    case MatrixFamily::complement_upper_triangle: return "complement_upper_triangle";
    case MatrixFamily::complement_band_diagonal: return "complement_band_diagonal";
    case MatrixFamily::random_low_grr: return "random_low_grr";
  }
  return "unknown";
}

inline std::optional<MatrixFamily> family_from_name(const std::string& s) {
  for (MatrixFamily f :
       {MatrixFamily::identity, MatrixFamily::upper_triangle, MatrixFamily::band_diagonal,
        MatrixFamily::block_diagonal, MatrixFamily::complement_identity,
        MatrixFamily::complement_upper_triangle, MatrixFamily::complement_band_diagonal,
        MatrixFamily::random_low_grr})
    if (family_name(f) == s) return f;
  return std::nullopt;
}

struct SyntheticSpec {
  MatrixFamily family = MatrixFamily::identity;
  std::size_t n = 10;        // structured families are square
  int band_width = 3;        // band_diagonal and its complement
  std::size_t block_size = 0;  // block_diagonal; 0 -> n/4 rounded up
  std::size_t rank = 2;      // random_low_grr factor rank
  int max_level = 1;         // random_low_grr threshold count
  std::uint64_t seed = 0;
  bool quantile_thresholds = true;  // false -> thresholds uniform over the score range
};

struct GeneratedMatrix {
  std::string name;
  OrdinalMatrix matrix;
  GrrWitness witness;
};

namespace detail {

// Rank-2 witness for any centered 0/1 band via scores cos(theta_i - theta_j):
// with theta_i = i * pi / n the score depends only on |i - j| and decreases
// with it, so a threshold between separations w-1 and w yields the band
// |i - j| < w. `invert` negates the scores (and picks the mirrored threshold)
// to witness the complement.
inline GrrWitness band_witness(std::size_t n, int w, bool invert) {
  const double delta = std::numbers::pi / static_cast<double>(n);
  const double near = std::cos(delta * (w - 1));
  const double far = std::cos(delta * w);
  const double tau = 0.5 * (near + far);
  RealMatrix u(n, 2), v(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = delta * static_cast<double>(i);
    const double sgn = invert ? -1.0 : 1.0;
    u(i, 0) = sgn * std::cos(th);
    u(i, 1) = sgn * std::sin(th);
    v(i, 0) = std::cos(th);
    v(i, 1) = std::sin(th);
  }
  return make_witness(std::move(u), std::move(v), {invert ? -tau : tau});
}

// Rank-2 witness for the block-identity pattern: all rows of a block share
// one arc point, so same-block scores sit at 1 and cross-block scores at most
// cos(delta) with delta separating distinct blocks.
inline GrrWitness block_witness(std::size_t n, std::size_t block, bool invert) {
  const std::size_t n_blocks = (n + block - 1) / block;
  const double delta = std::numbers::pi / (2.0 * static_cast<double>(std::max<std::size_t>(n_blocks, 2)));
  const double tau = 0.5 * (1.0 + std::cos(delta));
  RealMatrix u(n, 2), v(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = delta * static_cast<double>(i / block);
    const double sgn = invert ? -1.0 : 1.0;
    u(i, 0) = sgn * std::cos(th);
    u(i, 1) = sgn * std::sin(th);
    v(i, 0) = std::cos(th);
    v(i, 1) = std::sin(th);
  }
  return make_witness(std::move(u), std::move(v), {invert ? -tau : tau});
}

// Rank-1 witness for the (possibly reversed) staircase: 1 iff j >= i, or for
// the strict lower triangle when `strict_lower`.
inline GrrWitness triangle_witness(std::size_t n, bool strict_lower, double tau = 0.5) {
  RealMatrix u(n, 1), v(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = strict_lower ? n - i : i;  // lower: 1 iff j < i <=> rev(j) >= rev(i)+1
    u(i, 0) = tau / (static_cast<double>(r) + 0.5);
    const std::size_t cj = strict_lower ? n - 1 - i : i;
    v(i, 0) = static_cast<double>(cj) + 1.0;
  }
  return make_witness(std::move(u), std::move(v), {tau});
}

inline std::vector<double> quantile_gap_thresholds(const std::vector<double>& entries,
                                                   int count) {
  std::vector<double> vals(entries);
  std::sort(vals.begin(), vals.end());
  const std::size_t nm = vals.size();
  std::vector<double> taus;
  std::size_t prev_idx = 0;
  for (int d = 1; d <= count; ++d) {
    // Target the d/(count+1) quantile, then slide forward to a genuine gap so
    // the threshold keeps a margin from every score.
    std::size_t idx = static_cast<std::size_t>(
        std::llround(double(d) * double(nm) / double(count + 1)));
    idx = std::clamp<std::size_t>(std::max(idx, prev_idx + 1), 1, nm - 1);
    while (idx < nm && vals[idx] - vals[idx - 1] < 1e-6) ++idx;
    if (idx >= nm) return {};  // ran out of spread; caller reseeds
    taus.push_back(0.5 * (vals[idx - 1] + vals[idx]));
    prev_idx = idx;
  }
  return taus;
}

}  // namespace detail

inline GeneratedMatrix generate(const SyntheticSpec& spec) {
  detail::require(spec.n >= 2, "generate: n must be >= 2");
  const std::size_t n = spec.n;
  GeneratedMatrix out;
  out.name = family_name(spec.family);

  switch (spec.family) {
    case MatrixFamily::identity:
      out.witness = detail::band_witness(n, 1, false);
      break;
    case MatrixFamily::complement_identity:
      out.witness = detail::band_witness(n, 1, true);
      break;
    case MatrixFamily::band_diagonal:
    case MatrixFamily::complement_band_diagonal: {
      detail::require(spec.band_width >= 1 && spec.band_width <= static_cast<int>(n),
                      "generate: band_width outside [1, n]");
      const bool invert = spec.family == MatrixFamily::complement_band_diagonal;
      out.witness = detail::band_witness(n, spec.band_width, invert);
      out.name += "_w" + std::to_string(spec.band_width);
      break;
    }
    case MatrixFamily::block_diagonal: {
      const std::size_t block = spec.block_size ? spec.block_size : (n + 3) / 4;
      detail::require(block >= 1 && block <= n, "generate: block_size outside [1, n]");
      out.witness = detail::block_witness(n, block, false);
      break;
    }
    case MatrixFamily::upper_triangle:
      out.witness = detail::triangle_witness(n, false);
      break;
    case MatrixFamily::complement_upper_triangle:
      out.witness = detail::triangle_witness(n, true);
      break;
    case MatrixFamily::random_low_grr: {
      detail::require(spec.rank >= 1, "generate: rank must be >= 1");
      detail::require(spec.max_level >= 1, "generate: max_level must be >= 1");
      std::mt19937_64 rng(spec.seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int attempt = 0; attempt < 64; ++attempt) {
        RealMatrix u(n, spec.rank), v(n, spec.rank);
        for (double& x : u.data) x = gauss(rng);
        for (double& x : v.data) x = gauss(rng);
        const RealMatrix x = predict_real({u, v, {}});
        std::vector<double> taus;
        if (spec.quantile_thresholds) {
          taus = detail::quantile_gap_thresholds(x.data, spec.max_level);
        } else {
          // Thresholds drawn uniformly over the observed score range.
          // Levels are not guaranteed to be balanced or present.
          const auto [mn, mx] = std::minmax_element(x.data.begin(), x.data.end());
          std::uniform_real_distribution<double> unif(*mn, *mx);
          for (int d = 0; d < spec.max_level; ++d) taus.push_back(unif(rng));
          std::sort(taus.begin(), taus.end());
          bool distinct = true;
          for (std::size_t d = 1; d < taus.size(); ++d)
            if (taus[d] - taus[d - 1] < 1e-6) distinct = false;
          if (!distinct) continue;
        }
        if (taus.empty()) continue;
        out.witness = make_witness(std::move(u), std::move(v), std::move(taus));
        break;
      }
      detail::require(out.witness.u.n_rows == n,
                      "generate: failed to draw usable thresholds");
      break;
    }
  }

  const FactorModel m{out.witness.u, out.witness.v, out.witness.thresholds};
  out.matrix = grf(predict_real(m), out.witness.thresholds);
  detail::require(verify_witness(out.matrix, out.witness),
                  "generate: witness failed verification for " + out.name);

  if (spec.family == MatrixFamily::random_low_grr && spec.quantile_thresholds) {
    // Quantile placement must leave every level represented.
    std::vector<int> seen(static_cast<std::size_t>(out.matrix.max_level) + 1, 0);
    for (Level v : out.matrix.data) seen[static_cast<std::size_t>(v)] = 1;
    for (int c : seen)
      detail::require(c == 1, "generate: a level is missing from the random draw");
  }
  return out;
}

// The gallery of structured families used for the approximate-rank figure:
// three named patterns, a block variant, and the three complements, each with
// a verified witness of rank <= 2.
inline std::vector<GeneratedMatrix> figure_one_matrices(std::size_t n) {
  detail::require(n >= 8, "figure_one_matrices: n must be >= 8");
  std::vector<GeneratedMatrix> out;
  for (MatrixFamily f :
       {MatrixFamily::identity, MatrixFamily::upper_triangle, MatrixFamily::band_diagonal,
        MatrixFamily::block_diagonal, MatrixFamily::complement_identity,
        MatrixFamily::complement_upper_triangle, MatrixFamily::complement_band_diagonal}) {
    SyntheticSpec spec;
    spec.family = f;
    spec.n = n;
    spec.band_width = 3;
    out.push_back(generate(spec));
  }
  return out;
}

}  // namespace roundrank
