#pragma once

// Certificates and diagnostic analyses for generalized round-rank:
//
//   * witnesses (factor pairs + thresholds) and their verification
//   * an exact decision procedure for rank-1 representability on small inputs
//   * randomized checks of the constructive rank lemmas
//   * the threshold-change construction (new thresholds, bounded rank growth)
//   * combinatorial rank lower bounds read off matrix structure
//   * the interval-based uniqueness analysis for completions
//
// Everything that claims "verified" re-checks the claim numerically instead of
// trusting the construction that produced it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "roundrank/link.hpp"
#include "roundrank/matrix.hpp"
#include "roundrank/svd.hpp"

namespace roundrank {

// Margin below which a witness is considered numerically untrustworthy.
inline constexpr double kWitnessMarginFloor = 1e-9;

struct GrrWitness {
  RealMatrix u;  // n x k
  RealMatrix v;  // m x k
  std::vector<double> thresholds;
  double min_margin = 0.0;  // smallest |score - threshold| over all entries

  std::size_t rank() const { return u.n_cols; }
};

inline double witness_margin(const RealMatrix& x, std::span<const double> taus) {
  double margin = std::numeric_limits<double>::infinity();
  for (double xe : x.data)
    for (double t : taus) margin = std::min(margin, std::abs(xe - t));
  return margin;
}

inline GrrWitness make_witness(RealMatrix u, RealMatrix v, std::vector<double> taus) {
  detail::require(u.n_cols == v.n_cols, "make_witness: factor rank mismatch");
  validate_thresholds(taus, "make_witness");
  GrrWitness w{std::move(u), std::move(v), std::move(taus), 0.0};
  const FactorModel m{w.u, w.v, w.thresholds};
  w.min_margin = witness_margin(predict_real(m), w.thresholds);
  return w;
}

// True iff the witness reproduces y exactly under the round map and every
// score clears every threshold by more than the margin floor.
inline bool verify_witness(const OrdinalMatrix& y, const GrrWitness& w) {
  if (w.u.n_rows != y.n_rows || w.v.n_rows != y.n_cols) return false;
  if (static_cast<int>(w.thresholds.size()) != y.max_level) return false;
  double margin = std::numeric_limits<double>::infinity();
  const FactorModel m{w.u, w.v, w.thresholds};
  for (std::size_t i = 0; i < y.n_rows; ++i)
    for (std::size_t j = 0; j < y.n_cols; ++j) {
      const double x = predict_entry(m, i, j);
      if (grf(x, w.thresholds) != y(i, j)) return false;
      for (double t : w.thresholds) margin = std::min(margin, std::abs(x - t));
    }
  return margin > kWitnessMarginFloor;
}

// Same check restricted to the train-tagged entries of an observation set.
inline bool verify_witness_on(const ObservationSet& obs, const GrrWitness& w) {
  if (w.u.n_rows != obs.n_rows || w.v.n_rows != obs.n_cols) return false;
  if (static_cast<int>(w.thresholds.size()) != obs.max_level) return false;
  double margin = std::numeric_limits<double>::infinity();
  const FactorModel m{w.u, w.v, w.thresholds};
  for (const auto& e : obs.entries) {
    if (e.tag != SplitTag::train) continue;
    const double x = predict_entry(m, e.row, e.col);
    if (grf(x, w.thresholds) != e.value) return false;
    for (double t : w.thresholds) margin = std::min(margin, std::abs(x - t));
  }
  return margin > kWitnessMarginFloor;
}

// ---------------------------------------------------------------------------
// Rank-1 representability.
//
// A rank-1 witness is u_i = s_i exp(p_i), v_j = t_j exp(q_j) with signs in
// {-1, 0, +1}. For a fixed sign pattern the level constraints become interval
// constraints on p_i + q_j, i.e. a difference-constraint system, decided
// exactly by Bellman-Ford negative-cycle detection. Sign patterns are
// enumerated with pruning (global sign flip is factored out). "true" always
// carries a re-verified witness; "false" means no witness whose scores clear
// every interval boundary by the resolution margin.
// ---------------------------------------------------------------------------

struct Rank1Decision {
  bool representable = false;
  std::optional<GrrWitness> witness;
  double resolution = 1e-3;
  std::string note;
};

namespace detail {

struct SignedBox {
  // Allowed open interval for the entry's real score, already shrunk by the
  // resolution margin. +-infinity marks an unbounded side.
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool allows_zero = false;
  bool allows_pos = false;
  bool allows_neg = false;
};

inline SignedBox entry_box(Level v, std::span<const double> taus, double resolution) {
  const double inf = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(taus.size());
  double lo = (v == 0) ? -inf : taus[static_cast<std::size_t>(v) - 1];
  double hi = (v == n) ? inf : taus[static_cast<std::size_t>(v)];
  const double width = hi - lo;  // inf when a side is unbounded
  const double shrink = std::min(resolution, std::isfinite(width) ? width / 4.0 : resolution);
  if (std::isfinite(lo)) lo += shrink;
  if (std::isfinite(hi)) hi -= shrink;
  SignedBox b;
  b.lo = lo;
  b.hi = hi;
  b.allows_zero = lo <= 0.0 && 0.0 <= hi;
  b.allows_pos = hi > 0.0;
  b.allows_neg = lo < 0.0;
  return b;
}

// Feasibility of { L_e <= p_i + q_j <= U_e } via Bellman-Ford on the
// difference system p_i - (-q_j) <= U_e, (-q_j) - p_i <= -L_e.
struct SumConstraint {
  std::size_t row, col;
  double lo, hi;  // bounds on p_row + q_col, possibly infinite
};

inline bool solve_sum_constraints(std::size_t n_rows, std::size_t n_cols,
                                  const std::vector<SumConstraint>& cons,
                                  std::vector<double>& p, std::vector<double>& q) {
  const std::size_t n_nodes = n_rows + n_cols;  // p_i then r_j = -q_j
  struct Edge {
    std::size_t from, to;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(2 * cons.size());
  for (const auto& c : cons) {
    if (std::isfinite(c.hi)) edges.push_back({n_rows + c.col, c.row, c.hi});
    if (std::isfinite(c.lo)) edges.push_back({c.row, n_rows + c.col, -c.lo});
  }
  std::vector<double> dist(n_nodes, 0.0);
  bool changed = true;
  for (std::size_t it = 0; it <= n_nodes && changed; ++it) {
    changed = false;
    for (const auto& e : edges) {
      if (dist[e.from] + e.w < dist[e.to] - 1e-15) {
        dist[e.to] = dist[e.from] + e.w;
        changed = true;
      }
    }
    if (it == n_nodes && changed) return false;  // negative cycle
  }
  p.assign(n_rows, 0.0);
  q.assign(n_cols, 0.0);
  for (std::size_t i = 0; i < n_rows; ++i) p[i] = dist[i];
  for (std::size_t j = 0; j < n_cols; ++j) q[j] = -dist[n_rows + j];
  return true;
}

}  // namespace detail

inline Rank1Decision rank1_grf_representable(const OrdinalMatrix& y,
                                             std::span<const double> taus,
                                             double resolution = 1e-3) {
  validate_ordinal(y, "rank1_grf_representable");
  validate_thresholds(taus, "rank1_grf_representable");
  detail::require(static_cast<int>(taus.size()) == y.max_level,
                  "rank1_grf_representable: need one threshold per level step");
  detail::require(y.n_rows <= 8 && y.n_cols <= 8,
                  "rank1_grf_representable: matrices up to 8x8 only");
  detail::require(resolution > 0.0, "rank1_grf_representable: resolution must be positive");

  const std::size_t n = y.n_rows, m = y.n_cols;
  std::vector<detail::SignedBox> box(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      box[i * m + j] = detail::entry_box(y(i, j), taus, resolution);

  Rank1Decision out;
  out.resolution = resolution;

  std::vector<int> s(n, 0), t(m, 0);
  std::vector<double> p, q;

  // Signs a column may take given the current row signs; zero means the whole
  // column of scores is zero.
  auto column_options = [&](std::size_t j) {
    std::vector<int> opts;
    for (int tj : {+1, -1, 0}) {
      bool ok = true;
      for (std::size_t i = 0; i < n && ok; ++i) {
        const auto& b = box[i * m + j];
        const int prod = s[i] * tj;
        if (prod == 0)
          ok = b.allows_zero;
        else if (prod > 0)
          ok = b.allows_pos;
        else
          ok = b.allows_neg;
      }
      if (ok) opts.push_back(tj);
    }
    return opts;
  };

  auto feasible_with_signs = [&]() -> bool {
    std::vector<detail::SumConstraint> cons;
    for (std::size_t i = 0; i < n; ++i) {
      if (s[i] == 0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (t[j] == 0) continue;
        const auto& b = box[i * m + j];
        const int prod = s[i] * t[j];
        // Bounds on the log magnitude of the score.
        double lo, hi;
        if (prod > 0) {
          lo = b.lo > 0.0 ? std::log(b.lo) : -std::numeric_limits<double>::infinity();
          hi = std::isfinite(b.hi) ? std::log(b.hi) : std::numeric_limits<double>::infinity();
        } else {
          lo = b.hi < 0.0 ? std::log(-b.hi) : -std::numeric_limits<double>::infinity();
          hi = std::isfinite(b.lo) ? std::log(-b.lo) : std::numeric_limits<double>::infinity();
        }
        if (std::isfinite(lo) && std::isfinite(hi) && lo > hi) return false;
        cons.push_back({i, j, lo, hi});
      }
    }
    return detail::solve_sum_constraints(n, m, cons, p, q);
  };

  // DFS over column signs with prefix feasibility pruning.
  std::vector<std::vector<int>> opts(m);
  auto try_columns = [&](auto&& self, std::size_t j) -> bool {
    if (j == m) return feasible_with_signs();
    for (int tj : opts[j]) {
      t[j] = tj;
      // Prefix check: constraints among columns 0..j only.
      std::vector<int> saved(t.begin() + j + 1, t.end());
      for (std::size_t jj = j + 1; jj < m; ++jj) t[jj] = 0;
      const bool prefix_ok = feasible_with_signs();
      std::copy(saved.begin(), saved.end(), t.begin() + j + 1);
      if (prefix_ok && self(self, j + 1)) return true;
    }
    t[j] = 0;
    return false;
  };

  auto try_rows = [&](auto&& self, std::size_t i, bool any_nonzero) -> bool {
    if (i == n) {
      for (std::size_t j = 0; j < m; ++j) {
        opts[j] = column_options(j);
        if (opts[j].empty()) return false;
      }
      return try_columns(try_columns, 0);
    }
    // Canonical form: the first nonzero row sign is +1 (global flip symmetry).
    for (int si : (any_nonzero ? std::vector<int>{+1, -1, 0} : std::vector<int>{+1, 0})) {
      if (si == 0) {
        bool zero_ok = true;
        for (std::size_t j = 0; j < m && zero_ok; ++j) zero_ok = box[i * m + j].allows_zero;
        if (!zero_ok) continue;
      }
      s[i] = si;
      if (self(self, i + 1, any_nonzero || si != 0)) return true;
    }
    s[i] = 0;
    return false;
  };

  if (try_rows(try_rows, 0, false)) {
    RealMatrix u(n, 1), v(m, 1);
    for (std::size_t i = 0; i < n; ++i) u(i, 0) = s[i] * (s[i] ? std::exp(p[i]) : 0.0);
    for (std::size_t j = 0; j < m; ++j) v(j, 0) = t[j] * (t[j] ? std::exp(q[j]) : 0.0);
    GrrWitness w = make_witness(std::move(u), std::move(v),
                                std::vector<double>(taus.begin(), taus.end()));
    if (verify_witness(y, w)) {
      out.representable = true;
      out.witness = std::move(w);
      out.note = "witness verified";
      return out;
    }
    out.note = "feasible sign pattern failed verification";
    return out;
  }
  std::ostringstream msg;
  msg << "no witness found at resolution " << resolution;
  out.note = msg.str();
  return out;
}

// ---------------------------------------------------------------------------
// Randomized checks of the constructive rank lemmas.
// ---------------------------------------------------------------------------

struct LemmaCheckReport {
  int trials = 0;
  int violations = 0;
  std::vector<std::string> failures;

  bool all_passed() const { return violations == 0; }
};

namespace detail {

// Thresholds placed at midpoints of gaps between sorted score values, so
// every generated witness has a comfortable margin.
inline std::vector<double> gap_thresholds(const RealMatrix& x, int count,
                                          std::mt19937_64& rng) {
  std::vector<double> vals(x.data);
  std::sort(vals.begin(), vals.end());
  std::vector<std::size_t> gaps;
  for (std::size_t i = 0; i + 1 < vals.size(); ++i)
    if (vals[i + 1] - vals[i] > 1e-6) gaps.push_back(i);
  if (static_cast<int>(gaps.size()) < count) return {};
  std::shuffle(gaps.begin(), gaps.end(), rng);
  gaps.resize(static_cast<std::size_t>(count));
  std::sort(gaps.begin(), gaps.end());
  std::vector<double> taus;
  for (std::size_t g : gaps) taus.push_back(0.5 * (vals[g] + vals[g + 1]));
  return taus;
}

}  // namespace detail

inline LemmaCheckReport check_lemma_suite(int trials, std::uint64_t seed) {
  detail::require(trials > 0, "check_lemma_suite: trials must be positive");
  LemmaCheckReport report;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> dim_dist(2, 8), k_dist(1, 3), n_dist(1, 4);
  std::uniform_real_distribution<double> shift_dist(-2.0, 2.0), scale_dist(0.25, 4.0);

  auto fail = [&](int trial, const std::string& what) {
    ++report.violations;
    report.failures.push_back("trial " + std::to_string(trial) + ": " + what);
  };

  for (int trial = 0; trial < trials; ++trial) {
    ++report.trials;
    const std::size_t n = static_cast<std::size_t>(dim_dist(rng));
    const std::size_t m = static_cast<std::size_t>(dim_dist(rng));
    const std::size_t k = static_cast<std::size_t>(k_dist(rng));
    RealMatrix u(n, k), v(m, k);
    for (double& x : u.data) x = gauss(rng);
    for (double& x : v.data) x = gauss(rng);
    const RealMatrix x = predict_real({u, v, {}});
    const int want_taus = n_dist(rng);
    std::vector<double> taus = detail::gap_thresholds(x, want_taus, rng);
    if (taus.empty()) continue;  // degenerate draw; trial still counted
    const OrdinalMatrix y = grf(x, taus);

    // (a) The round map decomposes into per-threshold binary rounds, exactly.
    bool decomp_ok = true;
    for (double xe : x.data) {
      Level acc = 0;
      for (double tau : taus) acc += round_binary(xe, tau);
      if (acc != grf(xe, taus)) decomp_ok = false;
    }
    if (!decomp_ok) fail(trial, "binary decomposition mismatch");

    // (b) Shift: appending a constant column pair realizes y under shifted
    // thresholds at rank k+1.
    {
      const double c = shift_dist(rng);
      RealMatrix u2(n, k + 1), v2(m, k + 1);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t cc = 0; cc < k; ++cc) u2(i, cc) = u(i, cc);
        u2(i, k) = c;
      }
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t cc = 0; cc < k; ++cc) v2(j, cc) = v(j, cc);
        v2(j, k) = 1.0;
      }
      std::vector<double> taus2(taus);
      for (double& tt : taus2) tt += c;
      if (!verify_witness(y, make_witness(u2, v2, taus2)))
        fail(trial, "shift construction failed (c=" + std::to_string(c) + ")");
    }

    // (c) Positive scaling: sqrt(g)-scaled factors realize y under g-scaled
    // thresholds at the same rank.
    {
      const double g = scale_dist(rng);
      RealMatrix u2 = u, v2 = v;
      for (double& e : u2.data) e *= std::sqrt(g);
      for (double& e : v2.data) e *= std::sqrt(g);
      std::vector<double> taus2(taus);
      for (double& tt : taus2) tt *= g;
      if (!verify_witness(y, make_witness(u2, v2, taus2)))
        fail(trial, "scale construction failed (g=" + std::to_string(g) + ")");
    }

    // (d) Transpose: swapping the factors certifies y^T at the same rank.
    {
      OrdinalMatrix yt(y.n_cols, y.n_rows, y.max_level);
      for (std::size_t i = 0; i < y.n_rows; ++i)
        for (std::size_t j = 0; j < y.n_cols; ++j) yt(j, i) = y(i, j);
      if (!verify_witness(yt, make_witness(v, u, taus)))
        fail(trial, "transpose construction failed");
    }

    // (e) Concatenated factors realize the sum of the real score matrices at
    // rank k_a + k_b (checked on the reals; round of a sum is not the sum of
    // rounds in general).
    {
      const std::size_t kb = static_cast<std::size_t>(k_dist(rng));
      RealMatrix ub(n, kb), vb(m, kb);
      for (double& e : ub.data) e = gauss(rng);
      for (double& e : vb.data) e = gauss(rng);
      const RealMatrix xb = predict_real({ub, vb, {}});
      RealMatrix uc(n, k + kb), vc(m, kb + k);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t cc = 0; cc < k; ++cc) uc(i, cc) = u(i, cc);
        for (std::size_t cc = 0; cc < kb; ++cc) uc(i, k + cc) = ub(i, cc);
      }
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t cc = 0; cc < k; ++cc) vc(j, cc) = v(j, cc);
        for (std::size_t cc = 0; cc < kb; ++cc) vc(j, k + cc) = vb(j, cc);
      }
      const RealMatrix xc = predict_real({uc, vc, {}});
      bool sum_ok = true;
      for (std::size_t c = 0; c < xc.data.size(); ++c) {
        const double want = x.data[c] + xb.data[c];
        if (std::abs(xc.data[c] - want) > 1e-9 * std::max(1.0, std::abs(want)))
          sum_ok = false;
      }
      if (!sum_ok) fail(trial, "factor concatenation does not realize the sum");
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Threshold change with bounded rank growth.
//
// Given a witness for y under thresholds T and any target thresholds T', a
// factorization for y under T' is assembled from positive combinations of
// per-threshold reduced copies of the witness plus one shift column. The
// achieved rank is at most N*k + 1.
// ---------------------------------------------------------------------------

struct ThresholdBoundReport {
  bool ok = false;
  std::size_t achieved_rank = 0;
  GrrWitness constructed;
  std::string note;
};

inline ThresholdBoundReport threshold_bound_demo(const OrdinalMatrix& y,
                                                 const GrrWitness& witness,
                                                 std::span<const double> tau_alt) {
  ThresholdBoundReport report;
  validate_thresholds(tau_alt, "threshold_bound_demo");
  detail::require(tau_alt.size() == witness.thresholds.size(),
                  "threshold_bound_demo: threshold count must match");
  if (!verify_witness(y, witness)) {
    report.note = "input witness failed verification";
    return report;
  }
  const std::size_t n_taus = tau_alt.size();
  const std::vector<double>& tau0 = witness.thresholds;
  if (std::equal(tau_alt.begin(), tau_alt.end(), tau0.begin(),
                 [](double a, double b) { return a == b; })) {
    report.ok = true;
    report.constructed = witness;
    report.achieved_rank = witness.rank();
    report.note = "thresholds unchanged; original witness reused";
    return report;
  }

  const FactorModel base{witness.u, witness.v, witness.thresholds};
  const RealMatrix x = predict_real(base);

  // Per threshold d < N-1, find eps_d > 0 such that lowering only that
  // threshold by eps_d still realizes y with the same witness. Candidates come
  // from a geometric grid under the witness margin; each is re-verified.
  std::vector<double> eps(n_taus > 0 ? n_taus - 1 : 0, 0.0);
  for (std::size_t d = 0; d + 1 < n_taus; ++d) {
    double cap = witness.min_margin;
    if (d > 0) cap = std::min(cap, (tau0[d] - tau0[d - 1]) / 2.0);
    bool found = false;
    for (double candidate = cap; candidate > kWitnessMarginFloor; candidate /= 2.0) {
      std::vector<double> taus_red(tau0);
      taus_red[d] -= candidate;
      bool ok = taus_red[d] > (d > 0 ? taus_red[d - 1] : -std::numeric_limits<double>::infinity());
      for (std::size_t c = 0; c < x.data.size() && ok; ++c)
        ok = grf(x.data[c], taus_red) == grf(x.data[c], tau0);
      if (ok) {
        eps[d] = candidate;
        found = true;
        break;
      }
    }
    if (!found) {
      report.note = "no workable threshold reduction at index " + std::to_string(d);
      return report;
    }
  }

  // Solve for the mixing weights: g * tau0 - sum_d gamma_d eps_d e_d + c * 1
  // must equal tau_alt, with every gamma non-negative.
  const double t0_last = tau0[n_taus - 1], ta_last = tau_alt[n_taus - 1];
  double g_hi = std::numeric_limits<double>::infinity();
  double s1 = 0.0, s2 = 1.0;
  for (std::size_t d = 0; d + 1 < n_taus; ++d) {
    const double num = ta_last - tau_alt[d];
    const double den = t0_last - tau0[d];
    g_hi = std::min(g_hi, num / den);
    s1 += num / eps[d];
    s2 += den / eps[d];
  }
  const double g_lo = n_taus > 1 ? s1 / s2 : 0.5;
  const double g = std::isfinite(g_hi) ? 0.5 * (g_lo + g_hi) : 1.0;
  const double c = ta_last - g * t0_last;

  std::vector<double> gamma(n_taus > 0 ? n_taus - 1 : 0, 0.0);
  double gamma_base = g;
  for (std::size_t d = 0; d + 1 < n_taus; ++d) {
    gamma[d] = (ta_last - tau_alt[d] - g * (t0_last - tau0[d])) / eps[d];
    if (gamma[d] < 0.0) gamma[d] = 0.0;  // numerical guard; re-verified below
    gamma_base -= gamma[d];
  }
  if (gamma_base < 0.0 || g <= 0.0) {
    report.note = "mixing weights came out negative; construction failed";
    return report;
  }

  // Assemble block factors: one sqrt(gamma)-scaled copy of the witness per
  // active weight, plus the shift column.
  std::vector<double> weights;
  if (gamma_base > 0.0) weights.push_back(gamma_base);
  for (std::size_t d = 0; d + 1 < n_taus; ++d)
    if (gamma[d] > 0.0) weights.push_back(gamma[d]);
  const std::size_t k = witness.rank();
  const bool with_shift = c != 0.0;
  const std::size_t rank_out = weights.size() * k + (with_shift ? 1 : 0);
  RealMatrix u2(y.n_rows, rank_out), v2(y.n_cols, rank_out);
  std::size_t col = 0;
  for (double w : weights) {
    const double root = std::sqrt(w);
    for (std::size_t cc = 0; cc < k; ++cc, ++col) {
      for (std::size_t i = 0; i < y.n_rows; ++i) u2(i, col) = root * witness.u(i, cc);
      for (std::size_t j = 0; j < y.n_cols; ++j) v2(j, col) = root * witness.v(j, cc);
    }
  }
  if (with_shift) {
    for (std::size_t i = 0; i < y.n_rows; ++i) u2(i, col) = c;
    for (std::size_t j = 0; j < y.n_cols; ++j) v2(j, col) = 1.0;
    ++col;
  }

  GrrWitness out = make_witness(std::move(u2), std::move(v2),
                                std::vector<double>(tau_alt.begin(), tau_alt.end()));
  if (!verify_witness(y, out)) {
    report.note = "assembled factorization failed verification";
    return report;
  }
  report.ok = true;
  report.achieved_rank = rank_out;
  report.constructed = std::move(out);
  report.note = "verified";
  return report;
}

// ---------------------------------------------------------------------------
// Structural rank lower bounds.
// ---------------------------------------------------------------------------

struct StructureBound {
  int identity_size = 0;        // largest identity-shaped submatrix
  int upper_triangle_size = 0;  // largest triangular submatrix, nonzero diagonal
  int distinct_row_bound = 0;   // rows sharing two equal nonzero columns
  int bound() const {
    return std::max(identity_size, std::max(upper_triangle_size, distinct_row_bound));
  }
};

namespace detail {

// DFS for the longest row/column pairing (i_1,j_1),...,(i_p,j_p) such that
// y(i_a, j_a) != 0 and y(i_a, j_b) == 0 for b < a (triangular mode) or for all
// b != a (identity mode, enforced incrementally in both directions). Candidate
// order makes the first descent a plain greedy pass; a node budget keeps the
// search bounded, and any sequence found certifies its length.
struct PairingSearch {
  const OrdinalMatrix& y;
  bool identity_mode;
  std::size_t budget;
  std::vector<std::size_t> rows, cols;
  std::vector<std::uint8_t> row_used, col_used;
  std::size_t best = 0;

  PairingSearch(const OrdinalMatrix& yy, bool ident, std::size_t nodes)
      : y(yy), identity_mode(ident), budget(nodes),
        row_used(yy.n_rows, 0), col_used(yy.n_cols, 0) {}

  bool admissible(std::size_t i, std::size_t j) const {
    if (y(i, j) == 0) return false;
    for (std::size_t b = 0; b < rows.size(); ++b) {
      if (y(i, cols[b]) != 0) return false;
      if (identity_mode && y(rows[b], j) != 0) return false;
    }
    return true;
  }

  void dfs() {
    best = std::max(best, rows.size());
    const std::size_t max_possible = std::min(y.n_rows, y.n_cols);
    if (best == max_possible || budget == 0) return;
    const std::size_t remaining =
        std::min(y.n_rows - rows.size(), y.n_cols - rows.size());
    if (rows.size() + remaining <= best) return;
    // In identity mode the pairing is order-free, so rows may be forced
    // ascending to cut symmetric branches.
    const std::size_t row_start = identity_mode && !rows.empty() ? rows.back() + 1 : 0;
    for (std::size_t i = row_start; i < y.n_rows; ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < y.n_cols; ++j) {
        if (col_used[j] || !admissible(i, j)) continue;
        if (budget == 0) return;
        --budget;
        rows.push_back(i);
        cols.push_back(j);
        row_used[i] = col_used[j] = 1;
        dfs();
        row_used[i] = col_used[j] = 0;
        rows.pop_back();
        cols.pop_back();
        if (best == max_possible) return;
      }
    }
  }
};

}  // namespace detail

inline StructureBound rank_lower_bound_structures(const OrdinalMatrix& y) {
  validate_ordinal(y, "rank_lower_bound_structures");
  StructureBound out;

  // Exhaustive (budgeted) search on small matrices, greedy-first on large
  // ones; either way every reported value is certified by an explicit pairing.
  const bool small = std::max(y.n_rows, y.n_cols) <= 32;
  const std::size_t budget = small ? 4'000'000 : std::max(y.n_rows, y.n_cols) * 4;
  {
    detail::PairingSearch tri(y, false, budget);
    tri.dfs();
    out.upper_triangle_size = static_cast<int>(tri.best);
  }
  {
    detail::PairingSearch ident(y, true, budget);
    ident.dfs();
    out.identity_size = static_cast<int>(ident.best);
  }

  // Rows sharing two constant nonzero columns that differ somewhere: the
  // number of distinct such rows lower-bounds the rank.
  for (std::size_t j0 = 0; j0 < y.n_cols; ++j0)
    for (std::size_t j1 = j0 + 1; j1 < y.n_cols; ++j1) {
      bool cols_differ = false;
      for (std::size_t i = 0; i < y.n_rows && !cols_differ; ++i)
        cols_differ = y(i, j0) != y(i, j1);
      if (!cols_differ) continue;
      for (Level c = 1; c <= y.max_level; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < y.n_rows; ++i)
          if (y(i, j0) == c && y(i, j1) == c) rows.push_back(i);
        if (static_cast<int>(rows.size()) <= out.distinct_row_bound) continue;
        std::vector<std::vector<Level>> distinct;
        for (std::size_t i : rows) {
          std::vector<Level> r(y.data.begin() + static_cast<std::ptrdiff_t>(i * y.n_cols),
                               y.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * y.n_cols));
          if (std::find(distinct.begin(), distinct.end(), r) == distinct.end())
            distinct.push_back(std::move(r));
        }
        out.distinct_row_bound =
            std::max(out.distinct_row_bound, static_cast<int>(distinct.size()));
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Uniqueness analysis for completions.
// ---------------------------------------------------------------------------

struct UniquenessEntryReport {
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<double> coeffs;   // expansion of U_row over the column's basis rows
  double coeff_abs_sum = 0.0;
  bool necessary_ok = false;
  double epsilon_bar = 0.0;     // distance of the score to its interval ends
  double sufficient_bound = 0.0;
  bool sufficient_ok = false;
};

struct UniquenessReport {
  std::vector<UniquenessEntryReport> entries;
  std::vector<std::size_t> unverifiable_columns;
  double t_min = 0.0;
  double t_max = 0.0;
  double epsilon_used = 0.0;
  double boundary_pad = 0.0;

  bool all_necessary() const {
    for (const auto& e : entries)
      if (!e.necessary_ok) return false;
    return true;
  }
  bool all_sufficient() const {
    for (const auto& e : entries)
      if (!e.sufficient_ok) return false;
    return unverifiable_columns.empty();
  }
};

namespace detail {

// Gaussian elimination with partial pivoting; nullopt on a singular system.
inline std::optional<std::vector<double>> solve_linear(RealMatrix a, std::vector<double> b) {
  const std::size_t k = a.n_rows;
  require(a.n_cols == k && b.size() == k, "solve_linear: shape mismatch");
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) < 1e-12) return std::nullopt;
    if (pivot != col) {
      for (std::size_t cc = 0; cc < k; ++cc) std::swap(a(col, cc), a(pivot, cc));
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < k; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t cc = col; cc < k; ++cc) a(r, cc) -= f * a(col, cc);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> sol(k, 0.0);
  for (std::size_t r = k; r-- > 0;) {
    double acc = b[r];
    for (std::size_t cc = r + 1; cc < k; ++cc) acc -= a(r, cc) * sol[cc];
    sol[r] = acc / a(r, r);
  }
  return sol;
}

// Greedy basis selection: repeatedly add the observed row whose inclusion
// maximizes the smallest singular value of the stacked selection.
inline std::vector<std::size_t> pivot_basis(const RealMatrix& u,
                                            const std::vector<std::size_t>& rows,
                                            std::size_t k) {
  std::vector<std::size_t> chosen;
  std::vector<std::uint8_t> used(rows.size(), 0);
  for (std::size_t step = 0; step < k; ++step) {
    double best_sv = -1.0;
    std::size_t best_idx = rows.size();
    for (std::size_t cand = 0; cand < rows.size(); ++cand) {
      if (used[cand]) continue;
      RealMatrix stack(chosen.size() + 1, k);
      for (std::size_t r = 0; r < chosen.size(); ++r)
        for (std::size_t c = 0; c < k; ++c) stack(r, c) = u(chosen[r], c);
      for (std::size_t c = 0; c < k; ++c) stack(chosen.size(), c) = u(rows[cand], c);
      const SvdResult s = svd(stack);
      const double sv = s.singular_values.empty() ? 0.0 : s.singular_values.back();
      if (sv > best_sv) {
        best_sv = sv;
        best_idx = cand;
      }
    }
    if (best_idx == rows.size() || best_sv <= 0.0) break;
    used[best_idx] = 1;
    chosen.push_back(rows[best_idx]);
  }
  return chosen;
}

}  // namespace detail

// Interval-based uniqueness analysis of a completion. For every unobserved
// entry, expands its U-row over a basis of observed rows in the same column
// and evaluates both interval conditions: the necessary bound on the
// coefficient mass and the sufficient bound on the reachable score change.
inline UniquenessReport uniqueness_check(const OrdinalMatrix& y, const ObservationSet& obs,
                                         const FactorModel& model, double epsilon = 0.5,
                                         double boundary_pad = 0.0) {
  validate_ordinal(y, "uniqueness_check");
  validate_observations(obs, "uniqueness_check");
  detail::require(obs.n_rows == y.n_rows && obs.n_cols == y.n_cols,
                  "uniqueness_check: observation shape mismatch");
  detail::require(epsilon > 0.0 && epsilon <= 1.0, "uniqueness_check: epsilon outside (0, 1]");
  validate_thresholds(model.thresholds, "uniqueness_check");
  for (const auto& e : obs.entries)
    detail::require(e.value == y(e.row, e.col),
                    "uniqueness_check: observed value disagrees with the reference matrix");
  const double pad =
      boundary_pad > 0.0 ? boundary_pad : default_boundary_pad(model.thresholds);

  const GrrWitness w{model.u, model.v, model.thresholds, 0.0};
  detail::require(verify_witness_on(obs, w),
                  "uniqueness_check: model does not reproduce the observed entries");

  const IntervalMatrix iv = interval_matrix(y, model.thresholds, pad);
  UniquenessReport report;
  report.epsilon_used = epsilon;
  report.boundary_pad = pad;
  report.t_min = std::numeric_limits<double>::infinity();
  report.t_max = 0.0;
  for (std::size_t c = 0; c < iv.lower.data.size(); ++c) {
    const double len = iv.upper.data[c] - iv.lower.data[c];
    report.t_min = std::min(report.t_min, len);
    report.t_max = std::max(report.t_max, len);
  }
  const double necessary_rhs = epsilon * report.t_min / report.t_max;

  const std::size_t k = model.rank();
  std::vector<std::uint8_t> observed(y.n_rows * y.n_cols, 0);
  for (const auto& e : obs.entries)
    if (e.tag == SplitTag::train) observed[e.row * y.n_cols + e.col] = 1;

  for (std::size_t j = 0; j < y.n_cols; ++j) {
    std::vector<std::size_t> obs_rows, miss_rows;
    for (std::size_t i = 0; i < y.n_rows; ++i)
      (observed[i * y.n_cols + j] ? obs_rows : miss_rows).push_back(i);
    if (miss_rows.empty()) continue;

    std::vector<std::size_t> basis;
    if (obs_rows.size() >= k) basis = detail::pivot_basis(model.u, obs_rows, k);
    bool usable = basis.size() == k;
    RealMatrix mt(k, k);
    if (usable) {
      // System M^T a = U_i^T with M's rows the basis rows of U.
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) mt(r, c) = model.u(basis[c], r);
    }
    if (!usable) {
      report.unverifiable_columns.push_back(j);
      continue;
    }

    // Signed slack of each basis entry inside its interval.
    std::vector<double> eps_plus(k), eps_minus(k);
    bool column_ok = true;
    for (std::size_t r = 0; r < k; ++r) {
      const double x = predict_entry(model, basis[r], j);
      eps_plus[r] = iv.upper(basis[r], j) - x;
      eps_minus[r] = iv.lower(basis[r], j) - x;
      if (eps_plus[r] < 0.0 || eps_minus[r] > 0.0) column_ok = false;
    }
    if (!column_ok) {
      report.unverifiable_columns.push_back(j);
      continue;
    }

    for (std::size_t i : miss_rows) {
      std::vector<double> rhs(k);
      for (std::size_t c = 0; c < k; ++c) rhs[c] = model.u(i, c);
      auto a = detail::solve_linear(mt, rhs);
      if (!a) {
        report.unverifiable_columns.push_back(j);
        break;
      }
      UniquenessEntryReport er;
      er.row = i;
      er.col = j;
      er.coeffs = *a;
      for (double av : *a) er.coeff_abs_sum += std::abs(av);
      er.necessary_ok = er.coeff_abs_sum <= necessary_rhs + 1e-12;

      const double x = predict_entry(model, i, j);
      er.epsilon_bar = std::min(x - iv.lower(i, j), iv.upper(i, j) - x);
      double up = 0.0, down = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        const double av = (*a)[r];
        if (av > 0.0) {
          up += av * eps_plus[r];
          down += av * eps_minus[r];
        } else if (av < 0.0) {
          up += av * eps_minus[r];
          down += av * eps_plus[r];
        }
      }
      er.sufficient_bound = std::max(up, std::abs(down));
      er.sufficient_ok = er.epsilon_bar + 1e-9 >= er.sufficient_bound;
      report.entries.push_back(std::move(er));
    }
  }
  std::sort(report.unverifiable_columns.begin(), report.unverifiable_columns.end());
  report.unverifiable_columns.erase(
      std::unique(report.unverifiable_columns.begin(), report.unverifiable_columns.end()),
      report.unverifiable_columns.end());
  return report;
}

// Attempts to exhibit a second completion that matches the observed entries
// but lands on a different level at (row, col): pushes the column factor so
// the basis scores travel toward their interval corners, backing off along
// the segment until the observed column entries stay strictly inside their
// intervals. Returns the perturbed model if the target entry's level changed.
inline std::optional<FactorModel> uniqueness_counterexample(
    const OrdinalMatrix& y, const ObservationSet& obs, const FactorModel& model,
    std::size_t row, std::size_t col, double boundary_pad = 0.0) {
  validate_ordinal(y, "uniqueness_counterexample");
  const double pad =
      boundary_pad > 0.0 ? boundary_pad : default_boundary_pad(model.thresholds);
  const IntervalMatrix iv = interval_matrix(y, model.thresholds, pad);
  const std::size_t k = model.rank();

  std::vector<std::uint8_t> observed(y.n_rows * y.n_cols, 0);
  for (const auto& e : obs.entries)
    if (e.tag == SplitTag::train) observed[e.row * y.n_cols + e.col] = 1;
  detail::require(!observed[row * y.n_cols + col],
                  "uniqueness_counterexample: target entry is observed");

  std::vector<std::size_t> obs_rows;
  for (std::size_t i = 0; i < y.n_rows; ++i)
    if (observed[i * y.n_cols + col]) obs_rows.push_back(i);
  if (obs_rows.size() < k) return std::nullopt;
  const std::vector<std::size_t> basis = detail::pivot_basis(model.u, obs_rows, k);
  if (basis.size() < k) return std::nullopt;

  RealMatrix mt(k, k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) mt(r, c) = model.u(basis[c], r);
  std::vector<double> rhs(k);
  for (std::size_t c = 0; c < k; ++c) rhs[c] = model.u(row, c);
  const auto a = detail::solve_linear(mt, rhs);
  if (!a) return std::nullopt;

  const Level ref_level = grf(predict_entry(model, row, col), model.thresholds);
  RealMatrix m_basis(k, k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) m_basis(r, c) = model.u(basis[r], c);

  for (int dir : {+1, -1}) {
    // Corner target: each basis score moves to the interval end that drives
    // the expansion coefficients in the same direction.
    std::vector<double> target(k);
    for (std::size_t r = 0; r < k; ++r) {
      const double x = predict_entry(model, basis[r], col);
      const bool up = ((*a)[r] >= 0.0) == (dir > 0);
      target[r] = (up ? iv.upper(basis[r], col) : iv.lower(basis[r], col)) - x;
    }
    const auto c_full = detail::solve_linear(m_basis, target);
    if (!c_full) continue;
    for (double t = 1.0; t > 1e-3; t *= 0.85) {
      FactorModel trial = model;
      for (std::size_t c = 0; c < k; ++c) trial.v(col, c) += t * (*c_full)[c];
      bool observed_ok = true;
      for (std::size_t i : obs_rows) {
        const double x = predict_entry(trial, i, col);
        if (!(x > iv.lower(i, col) && x < iv.upper(i, col))) {
          observed_ok = false;
          break;
        }
      }
      if (!observed_ok) continue;
      if (grf(predict_entry(trial, row, col), model.thresholds) != ref_level)
        return trial;
    }
  }
  return std::nullopt;
}

}  // namespace roundrank
