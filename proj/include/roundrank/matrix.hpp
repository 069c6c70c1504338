#pragma once

// Dense row-major matrix containers and observation plumbing shared by the
// rest of the library. Everything here is deliberately plain: factorization
// sizes in this project are small enough that contiguous std::vector storage
// beats anything fancier.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace roundrank {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail

// Ordinal level. Values run 0..max_level inclusive.
using Level = int;

struct RealMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;  // row-major, n_rows * n_cols

  RealMatrix() = default;
  RealMatrix(std::size_t n, std::size_t m, double fill = 0.0)
      : n_rows(n), n_cols(m), data(n * m, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * n_cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * n_cols, n_cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * n_cols, n_cols};
  }

  RealMatrix transposed() const {
    RealMatrix t(n_cols, n_rows);
    for (std::size_t i = 0; i < n_rows; ++i)
      for (std::size_t j = 0; j < n_cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }
};

struct OrdinalMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  int max_level = 1;  // levels are {0, ..., max_level}; max_level == threshold count
  std::vector<Level> data;  // row-major

  OrdinalMatrix() = default;
  OrdinalMatrix(std::size_t n, std::size_t m, int levels, Level fill = 0)
      : n_rows(n), n_cols(m), max_level(levels), data(n * m, fill) {}

  Level& operator()(std::size_t i, std::size_t j) { return data[i * n_cols + j]; }
  Level operator()(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }
};

inline void validate_ordinal(const OrdinalMatrix& y, const std::string& who) {
  detail::require(y.n_rows > 0 && y.n_cols > 0, who + ": matrix must be non-empty");
  detail::require(y.max_level >= 1, who + ": max_level must be >= 1");
  detail::require(y.data.size() == y.n_rows * y.n_cols, who + ": bad storage size");
  for (Level v : y.data)
    detail::require(v >= 0 && v <= y.max_level,
                    who + ": level " + std::to_string(v) + " outside [0, " +
                        std::to_string(y.max_level) + "]");
}

// Rank-k factor pair plus the threshold vector the model was trained against.
// thresholds may be empty for purely linear models.
struct FactorModel {
  RealMatrix u;  // n x k
  RealMatrix v;  // m x k
  std::vector<double> thresholds;

  std::size_t rank() const { return u.n_cols; }
};

inline void validate_thresholds(std::span<const double> taus, const std::string& who) {
  detail::require(!taus.empty(), who + ": threshold vector must be non-empty");
  for (std::size_t d = 0; d < taus.size(); ++d) {
    detail::require(std::isfinite(taus[d]), who + ": thresholds must be finite");
    if (d > 0)
      detail::require(taus[d] > taus[d - 1], who + ": thresholds must be strictly ascending");
  }
}

inline double predict_entry(const FactorModel& model, std::size_t i, std::size_t j) {
  const double* u = model.u.data.data() + i * model.u.n_cols;
  const double* v = model.v.data.data() + j * model.v.n_cols;
  double acc = 0.0;
  for (std::size_t c = 0; c < model.u.n_cols; ++c) acc += u[c] * v[c];
  return acc;
}

// X = U V^T.
inline RealMatrix predict_real(const FactorModel& model) {
  detail::require(model.u.n_cols == model.v.n_cols, "predict_real: factor rank mismatch");
  RealMatrix x(model.u.n_rows, model.v.n_rows);
  for (std::size_t i = 0; i < x.n_rows; ++i)
    for (std::size_t j = 0; j < x.n_cols; ++j) x(i, j) = predict_entry(model, i, j);
  return x;
}

enum class SplitTag : std::uint8_t { train, validation };

struct Observation {
  std::size_t row = 0;
  std::size_t col = 0;
  Level value = 0;
  SplitTag tag = SplitTag::train;
};

// Sparse view of an ordinal matrix: which entries are known, their levels and
// their train/validation assignment.
struct ObservationSet {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  int max_level = 1;
  std::vector<Observation> entries;

  std::size_t count(SplitTag tag) const {
    std::size_t c = 0;
    for (const auto& e : entries) c += (e.tag == tag) ? 1 : 0;
    return c;
  }
};

inline void validate_observations(const ObservationSet& obs, const std::string& who) {
  detail::require(obs.n_rows > 0 && obs.n_cols > 0, who + ": empty shape");
  detail::require(obs.max_level >= 1, who + ": max_level must be >= 1");
  std::vector<std::uint8_t> seen(obs.n_rows * obs.n_cols, 0);
  for (const auto& e : obs.entries) {
    detail::require(e.row < obs.n_rows && e.col < obs.n_cols, who + ": index out of range");
    detail::require(e.value >= 0 && e.value <= obs.max_level, who + ": level out of range");
    std::uint8_t& s = seen[e.row * obs.n_cols + e.col];
    detail::require(s == 0, who + ": duplicate entry at (" + std::to_string(e.row) + ", " +
                               std::to_string(e.col) + ")");
    s = 1;
  }
}

// Observation set covering every entry of y (all tagged train).
inline ObservationSet observe_all(const OrdinalMatrix& y) {
  ObservationSet obs{y.n_rows, y.n_cols, y.max_level, {}};
  obs.entries.reserve(y.n_rows * y.n_cols);
  for (std::size_t i = 0; i < y.n_rows; ++i)
    for (std::size_t j = 0; j < y.n_cols; ++j)
      obs.entries.push_back({i, j, y(i, j), SplitTag::train});
  return obs;
}

// Per-entry admissible real interval induced by an ordinal level. Boundary
// levels get one synthetic bound at distance `pad` so every interval has
// finite length (uniqueness analysis needs finite interval lengths).
struct IntervalMatrix {
  RealMatrix lower;
  RealMatrix upper;
  double boundary_pad = 0.0;
};

inline double default_boundary_pad(std::span<const double> taus) {
  return 10.0 * (taus.back() - taus.front() + 1.0);
}

inline std::pair<double, double> grf_interval(Level v, std::span<const double> taus,
                                              double pad) {
  const int n = static_cast<int>(taus.size());
  double lo = (v == 0) ? taus.front() - pad : taus[static_cast<std::size_t>(v) - 1];
  double hi = (v == n) ? taus.back() + pad : taus[static_cast<std::size_t>(v)];
  return {lo, hi};
}

inline IntervalMatrix interval_matrix(const OrdinalMatrix& y, std::span<const double> taus,
                                      double pad) {
  validate_ordinal(y, "interval_matrix");
  validate_thresholds(taus, "interval_matrix");
  detail::require(static_cast<int>(taus.size()) == y.max_level,
                  "interval_matrix: need one threshold per level step");
  detail::require(pad > 0.0 && std::isfinite(pad), "interval_matrix: pad must be positive");
  IntervalMatrix out{RealMatrix(y.n_rows, y.n_cols), RealMatrix(y.n_rows, y.n_cols), pad};
  for (std::size_t i = 0; i < y.n_rows; ++i)
    for (std::size_t j = 0; j < y.n_cols; ++j) {
      auto [lo, hi] = grf_interval(y(i, j), taus, pad);
      out.lower(i, j) = lo;
      out.upper(i, j) = hi;
    }
  return out;
}

namespace detail {

// Deterministic uniform pick from [0, n).
inline std::size_t pick_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace detail

// Samples ~fraction of all entries, guaranteeing at least one observation per
// row and per column whenever the requested count allows it. Same seed, same
// entry list. All entries come back tagged train.
inline ObservationSet apply_mask(const OrdinalMatrix& y, double fraction,
                                 std::uint64_t seed) {
  validate_ordinal(y, "apply_mask");
  detail::require(fraction > 0.0 && fraction <= 1.0, "apply_mask: fraction outside (0, 1]");
  const std::size_t nm = y.n_rows * y.n_cols;
  std::size_t target = static_cast<std::size_t>(std::llround(fraction * double(nm)));
  target = std::min(std::max<std::size_t>(target, 1), nm);
  if (target < y.n_rows + y.n_cols && target < nm)
    std::cerr << "apply_mask: warning: target " << target
              << " is below rows+cols; full coverage may be infeasible\n";

  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> picked(nm, 0);
  std::vector<std::size_t> chosen;
  auto take = [&](std::size_t i, std::size_t j) {
    std::size_t cell = i * y.n_cols + j;
    if (!picked[cell]) {
      picked[cell] = 1;
      chosen.push_back(cell);
    }
  };

  if (target == nm) {
    ObservationSet all = observe_all(y);
    return all;
  }

  for (std::size_t i = 0; i < y.n_rows; ++i) take(i, detail::pick_index(rng, y.n_cols));
  std::vector<std::uint8_t> col_hit(y.n_cols, 0);
  for (std::size_t cell : chosen) col_hit[cell % y.n_cols] = 1;
  for (std::size_t j = 0; j < y.n_cols; ++j)
    if (!col_hit[j]) take(detail::pick_index(rng, y.n_rows), j);

  if (chosen.size() > target) {
    // Coverage needs more entries than requested; keep a random subset.
    std::shuffle(chosen.begin(), chosen.end(), rng);
    for (std::size_t k = target; k < chosen.size(); ++k) picked[chosen[k]] = 0;
    chosen.resize(target);
  } else if (chosen.size() < target) {
    std::vector<std::size_t> rest;
    rest.reserve(nm - chosen.size());
    for (std::size_t cell = 0; cell < nm; ++cell)
      if (!picked[cell]) rest.push_back(cell);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t k = 0; chosen.size() < target; ++k) {
      picked[rest[k]] = 1;
      chosen.push_back(rest[k]);
    }
  }

  std::sort(chosen.begin(), chosen.end());
  ObservationSet obs{y.n_rows, y.n_cols, y.max_level, {}};
  obs.entries.reserve(chosen.size());
  for (std::size_t cell : chosen) {
    std::size_t i = cell / y.n_cols, j = cell % y.n_cols;
    obs.entries.push_back({i, j, y(i, j), SplitTag::train});
  }
  return obs;
}

// Completion-experiment split: first draws a disjoint held-out evaluation set
// (tagged validation, uniform over all entries), then draws the training
// observations from the complement with row/column coverage when feasible.
// Fractions are both relative to the full n*m entry count.
inline ObservationSet completion_mask(const OrdinalMatrix& y, double observe_fraction,
                                      double holdout_fraction, std::uint64_t seed) {
  validate_ordinal(y, "completion_mask");
  detail::require(observe_fraction > 0.0, "completion_mask: observe_fraction must be > 0");
  detail::require(holdout_fraction >= 0.0, "completion_mask: holdout_fraction must be >= 0");
  detail::require(observe_fraction + holdout_fraction <= 1.0 + 1e-12,
                  "completion_mask: fractions exceed the matrix");
  const std::size_t nm = y.n_rows * y.n_cols;
  const std::size_t n_val =
      static_cast<std::size_t>(std::llround(holdout_fraction * double(nm)));
  std::size_t n_train = static_cast<std::size_t>(std::llround(observe_fraction * double(nm)));
  n_train = std::min(std::max<std::size_t>(n_train, 1), nm - n_val);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> cells(nm);
  for (std::size_t c = 0; c < nm; ++c) cells[c] = c;
  std::shuffle(cells.begin(), cells.end(), rng);

  // 0 = free, 1 = train, 2 = validation
  std::vector<std::uint8_t> state(nm, 0);
  for (std::size_t k = 0; k < n_val; ++k) state[cells[k]] = 2;

  std::vector<std::size_t> free_cells;
  free_cells.reserve(nm - n_val);
  for (std::size_t cell : cells)
    if (state[cell] == 0) free_cells.push_back(cell);

  std::size_t taken = 0;
  std::vector<std::uint8_t> row_hit(y.n_rows, 0), col_hit(y.n_cols, 0);
  auto cover = [&](bool rows) {
    for (std::size_t cell : free_cells) {
      if (taken >= n_train) break;
      if (state[cell] != 0) continue;
      std::size_t i = cell / y.n_cols, j = cell % y.n_cols;
      if (rows ? row_hit[i] : col_hit[j]) continue;
      state[cell] = 1;
      row_hit[i] = 1;
      col_hit[j] = 1;
      ++taken;
    }
  };
  cover(true);
  cover(false);
  for (std::size_t cell : free_cells) {
    if (taken >= n_train) break;
    if (state[cell] != 0) continue;
    state[cell] = 1;
    ++taken;
  }

  ObservationSet obs{y.n_rows, y.n_cols, y.max_level, {}};
  obs.entries.reserve(n_train + n_val);
  for (std::size_t cell = 0; cell < nm; ++cell) {
    if (state[cell] == 0) continue;
    std::size_t i = cell / y.n_cols, j = cell % y.n_cols;
    obs.entries.push_back(
        {i, j, y(i, j), state[cell] == 1 ? SplitTag::train : SplitTag::validation});
  }
  return obs;
}

}  // namespace roundrank
