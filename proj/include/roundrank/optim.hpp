#pragma once

// Loss functions and the stochastic gradient trainer for ordinal matrix
// factorization. Three losses share one update loop:
//
//   linear         squared error against the raw factor product
//   round          hinge penalty for leaving the level's admissible interval
//   multi_sigmoid  squared error against the smooth step-sum surrogate
//
// Each adds an L2 penalty on the factor matrices. The round hinge uses
// subgradient 0 at its kink; an optional softplus smoothing is available.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "roundrank/link.hpp"
#include "roundrank/matrix.hpp"

namespace roundrank {

enum class LossKind { linear, round, multi_sigmoid };

inline std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::linear: return "linear";
    case LossKind::round: return "round";
    case LossKind::multi_sigmoid: return "multi_sigmoid";
  }
  return "unknown";
}

struct TrainConfig {
  LossKind loss = LossKind::linear;
  std::size_t rank = 1;
  double learning_rate = 0.05;
  double lr_decay = 1.0;  // multiplied into the rate after every epoch
  double l2_reg = 0.0;
  int max_epochs = 1000;
  int patience = 50;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;
  bool thresholds_fixed = true;
  std::vector<double> initial_thresholds;  // empty -> 0.5, 1.5, ..., N - 0.5
  double init_scale = 0.0;                 // <= 0 -> 1/sqrt(rank)
  double hinge_smoothing = 0.0;            // 0 -> exact hinge
  double sharpness = 1.0;                  // multi-sigmoid step steepness
  double boundary_pad = 0.0;               // <= 0 -> default from thresholds
};

struct TrainReport {
  FactorModel model;  // state with the smallest validation RMSE seen
  std::vector<double> train_loss;
  std::vector<double> val_rmse;
  int best_epoch = -1;
  int epochs_run = 0;
  bool early_stopped = false;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double softplus(double w) { return w > 30.0 ? w : std::log1p(std::exp(w)); }

// max(z, 0), optionally smoothed to eps * softplus(z / eps).
inline double hinge(double z, double eps) {
  if (eps > 0.0) return eps * softplus(z / eps);
  return z > 0.0 ? z : 0.0;
}

// Derivative of hinge(); the exact hinge takes subgradient 0 at the kink.
inline double hinge_slope(double z, double eps) {
  if (eps > 0.0) return sigmoid(z / eps);
  return z > 0.0 ? 1.0 : 0.0;
}

// Threshold indices whose movement shifts this level's interval bounds. The
// synthetic pad bounds of levels 0 and N track the outermost thresholds.
inline std::pair<std::size_t, std::size_t> interval_tau_indices(Level v, std::size_t n_taus) {
  const std::size_t lo_idx = (v == 0) ? 0 : static_cast<std::size_t>(v) - 1;
  const std::size_t hi_idx =
      (static_cast<std::size_t>(v) == n_taus) ? n_taus - 1 : static_cast<std::size_t>(v);
  return {lo_idx, hi_idx};
}

}  // namespace detail

// Per-entry training objective: the entry's data term plus the L2 penalty on
// the two factor rows it touches. This is exactly what one SGD step descends.
inline double entry_loss(LossKind kind, const FactorModel& model, const Observation& e,
                         double l2, double sharpness, double hinge_smoothing, double pad) {
  const double x = predict_entry(model, e.row, e.col);
  double data = 0.0;
  switch (kind) {
    case LossKind::linear: {
      const double d = x - static_cast<double>(e.value);
      data = d * d;
      break;
    }
    case LossKind::round: {
      auto [lo, hi] = grf_interval(e.value, model.thresholds, pad);
      data = detail::hinge(lo - x, hinge_smoothing) + detail::hinge(x - hi, hinge_smoothing);
      break;
    }
    case LossKind::multi_sigmoid: {
      const double d = multi_sigmoid(x, model.thresholds, sharpness) - double(e.value);
      data = d * d;
      break;
    }
  }
  double reg = 0.0;
  for (double u : model.u.row(e.row)) reg += u * u;
  for (double v : model.v.row(e.col)) reg += v * v;
  return data + l2 * reg;
}

struct EntryGrad {
  std::vector<double> du;    // w.r.t. the touched row of U
  std::vector<double> dv;    // w.r.t. the touched row of V
  std::vector<double> dtau;  // w.r.t. every threshold
};

inline EntryGrad entry_grad(LossKind kind, const FactorModel& model, const Observation& e,
                            double l2, double sharpness, double hinge_smoothing, double pad) {
  const double x = predict_entry(model, e.row, e.col);
  const std::size_t k = model.rank();
  EntryGrad g{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0),
              std::vector<double>(model.thresholds.size(), 0.0)};
  double gx = 0.0;
  switch (kind) {
    case LossKind::linear:
      gx = 2.0 * (x - static_cast<double>(e.value));
      break;
    case LossKind::round: {
      auto [lo, hi] = grf_interval(e.value, model.thresholds, pad);
      const double below = detail::hinge_slope(lo - x, hinge_smoothing);
      const double above = detail::hinge_slope(x - hi, hinge_smoothing);
      gx = above - below;
      auto [lo_idx, hi_idx] = detail::interval_tau_indices(e.value, model.thresholds.size());
      g.dtau[lo_idx] += below;
      g.dtau[hi_idx] -= above;
      break;
    }
    case LossKind::multi_sigmoid: {
      const double err = multi_sigmoid(x, model.thresholds, sharpness) - double(e.value);
      const MultiSigmoidGrad mg = multi_sigmoid_grad(x, model.thresholds, sharpness);
      gx = 2.0 * err * mg.dx;
      for (std::size_t d = 0; d < g.dtau.size(); ++d) g.dtau[d] = 2.0 * err * mg.dtau[d];
      break;
    }
  }
  const auto u = model.u.row(e.row);
  const auto v = model.v.row(e.col);
  for (std::size_t c = 0; c < k; ++c) {
    g.du[c] = gx * v[c] + 2.0 * l2 * u[c];
    g.dv[c] = gx * u[c] + 2.0 * l2 * v[c];
  }
  return g;
}

namespace detail {

inline double frobenius_sq(const RealMatrix& m) {
  double acc = 0.0;
  for (double x : m.data) acc += x * x;
  return acc;
}

template <typename PerEntry>
inline double sum_train_loss(const ObservationSet& obs, double l2, const FactorModel& model,
                             PerEntry&& f) {
  double acc = 0.0;
  for (const auto& e : obs.entries)
    if (e.tag == SplitTag::train) acc += f(e);
  return acc + l2 * (frobenius_sq(model.u) + frobenius_sq(model.v));
}

}  // namespace detail

// Total training losses (observed train entries + global L2 on the factors).

inline double loss_linear(const FactorModel& model, const ObservationSet& obs, double l2) {
  return detail::sum_train_loss(obs, l2, model, [&](const Observation& e) {
    const double d = predict_entry(model, e.row, e.col) - double(e.value);
    return d * d;
  });
}

inline double loss_round(const FactorModel& model, const ObservationSet& obs,
                         const IntervalMatrix& intervals, double hinge_smoothing = 0.0,
                         double l2 = 0.0) {
  return detail::sum_train_loss(obs, l2, model, [&](const Observation& e) {
    const double x = predict_entry(model, e.row, e.col);
    return detail::hinge(intervals.lower(e.row, e.col) - x, hinge_smoothing) +
           detail::hinge(x - intervals.upper(e.row, e.col), hinge_smoothing);
  });
}

inline double loss_multi_sigmoid(const FactorModel& model, const ObservationSet& obs,
                                 double l2, double sharpness = 1.0) {
  return detail::sum_train_loss(obs, l2, model, [&](const Observation& e) {
    const double x = predict_entry(model, e.row, e.col);
    const double d = multi_sigmoid(x, model.thresholds, sharpness) - double(e.value);
    return d * d;
  });
}

// Link under which a model trained with the given loss makes predictions:
// raw scores for linear, hard levels for round, smooth levels for the
// sigmoid surrogate.
inline LinkKind link_for(LossKind kind, const FactorModel& model, double sharpness = 1.0) {
  switch (kind) {
    case LossKind::linear: return LinkKind::make_identity();
    case LossKind::round: return LinkKind::make_grf(model.thresholds);
    case LossKind::multi_sigmoid:
      return LinkKind::make_multi_sigmoid(model.thresholds, sharpness);
  }
  throw std::invalid_argument("link_for: unknown loss");
}

template <typename EntryRange>
inline double rmse_on(const FactorModel& model, const LinkKind& link,
                      const EntryRange& entries) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const Observation& e : entries) {
    const double p = apply_link(link, predict_entry(model, e.row, e.col));
    const double d = p - static_cast<double>(e.value);
    acc += d * d;
    ++n;
  }
  detail::require(n > 0, "rmse: no entries to evaluate");
  return std::sqrt(acc / static_cast<double>(n));
}

namespace detail {

inline std::vector<Observation> split_of(const ObservationSet& obs, SplitTag tag) {
  std::vector<Observation> out;
  for (const auto& e : obs.entries)
    if (e.tag == tag) out.push_back(e);
  return out;
}

}  // namespace detail

// RMSE of link-mapped predictions over the validation entries.
inline double rmse(const FactorModel& model, const ObservationSet& obs,
                   const LinkKind& link) {
  const auto val = detail::split_of(obs, SplitTag::validation);
  detail::require(!val.empty(), "rmse: observation set has no validation entries");
  return rmse_on(model, link, val);
}

// Fraction of validation entries whose link-mapped prediction lands within
// +-0.5 of the true level.
inline double accuracy_half(const FactorModel& model, const ObservationSet& obs,
                            const LinkKind& link) {
  const auto val = detail::split_of(obs, SplitTag::validation);
  detail::require(!val.empty(), "accuracy_half: observation set has no validation entries");
  std::size_t hit = 0;
  for (const auto& e : val) {
    const double p = apply_link(link, predict_entry(model, e.row, e.col));
    hit += (std::abs(p - static_cast<double>(e.value)) <= 0.5) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(val.size());
}

inline std::vector<double> auto_thresholds(int max_level) {
  std::vector<double> taus(static_cast<std::size_t>(max_level));
  for (int d = 0; d < max_level; ++d) taus[static_cast<std::size_t>(d)] = d + 0.5;
  return taus;
}

// Stochastic gradient training. Entries are visited in a fresh shuffled order
// every epoch; factor rows update simultaneously from their pre-step values;
// learned thresholds are clamped back to strictly ascending order after every
// step. Deterministic for a fixed config (including the seed).
inline TrainReport train(const ObservationSet& obs, const TrainConfig& cfg) {
  validate_observations(obs, "train");
  detail::require(cfg.rank >= 1, "train: rank must be >= 1");
  detail::require(cfg.learning_rate > 0.0, "train: learning_rate must be positive");
  detail::require(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0,
                  "train: lr_decay must be in (0, 1]");
  detail::require(cfg.max_epochs >= 1, "train: max_epochs must be >= 1");
  detail::require(cfg.patience >= 0, "train: patience must be >= 0");
  detail::require(cfg.l2_reg >= 0.0, "train: l2_reg must be >= 0");

  std::vector<double> taus =
      cfg.initial_thresholds.empty() ? auto_thresholds(obs.max_level) : cfg.initial_thresholds;
  validate_thresholds(taus, "train");
  detail::require(static_cast<int>(taus.size()) == obs.max_level,
                  "train: need one threshold per level step");
  const double pad = cfg.boundary_pad > 0.0 ? cfg.boundary_pad : default_boundary_pad(taus);
  const double init_scale =
      cfg.init_scale > 0.0 ? cfg.init_scale : 1.0 / std::sqrt(double(cfg.rank));

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(-init_scale, init_scale);
  FactorModel model;
  model.u = RealMatrix(obs.n_rows, cfg.rank);
  model.v = RealMatrix(obs.n_cols, cfg.rank);
  for (double& x : model.u.data) x = unif(rng);
  for (double& x : model.v.data) x = unif(rng);
  model.thresholds = taus;

  std::vector<std::size_t> train_idx;
  std::vector<Observation> val_entries;
  for (std::size_t i = 0; i < obs.entries.size(); ++i) {
    if (obs.entries[i].tag == SplitTag::train)
      train_idx.push_back(i);
    else
      val_entries.push_back(obs.entries[i]);
  }
  detail::require(!train_idx.empty(), "train: no training entries");
  // Recovery runs observe everything: fall back to reconstruction RMSE.
  std::vector<Observation> eval_entries = val_entries;
  if (eval_entries.empty())
    for (std::size_t i : train_idx) eval_entries.push_back(obs.entries[i]);

  const bool learn_taus = !cfg.thresholds_fixed && !model.thresholds.empty();
  auto epoch_train_loss = [&]() {
    switch (cfg.loss) {
      case LossKind::linear: return loss_linear(model, obs, cfg.l2_reg);
      case LossKind::round: {
        // Bounds derive from the current thresholds so learned-threshold runs
        // are scored against where the thresholds actually are.
        double acc = 0.0;
        for (std::size_t i : train_idx) {
          const Observation& e = obs.entries[i];
          const double x = predict_entry(model, e.row, e.col);
          auto [lo, hi] = grf_interval(e.value, model.thresholds, pad);
          acc += detail::hinge(lo - x, cfg.hinge_smoothing) +
                 detail::hinge(x - hi, cfg.hinge_smoothing);
        }
        return acc + cfg.l2_reg * (detail::frobenius_sq(model.u) +
                                   detail::frobenius_sq(model.v));
      }
      case LossKind::multi_sigmoid:
        return loss_multi_sigmoid(model, obs, cfg.l2_reg, cfg.sharpness);
    }
    return 0.0;
  };

  TrainReport report;
  double lr = cfg.learning_rate;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t idx : train_idx) {
      const Observation& e = obs.entries[idx];
      // entry_grad reads the pre-step rows, so both factor rows update
      // simultaneously from the same state.
      const EntryGrad g = entry_grad(cfg.loss, model, e, cfg.l2_reg, cfg.sharpness,
                                     cfg.hinge_smoothing, pad);
      auto u = model.u.row(e.row);
      auto v = model.v.row(e.col);
      for (std::size_t c = 0; c < cfg.rank; ++c) {
        u[c] -= lr * g.du[c];
        v[c] -= lr * g.dv[c];
      }
      if (learn_taus) {
        auto& t = model.thresholds;
        for (std::size_t d = 0; d < t.size(); ++d) t[d] -= lr * g.dtau[d];
        for (std::size_t d = 1; d < t.size(); ++d)
          t[d] = std::max(t[d], t[d - 1] + 1e-3);
      }
    }

    const double tl = epoch_train_loss();
    if (!std::isfinite(tl)) {
      std::ostringstream msg;
      msg << "train: loss diverged at epoch " << epoch << " (learning rate " << lr << ")";
      throw DivergenceError(msg.str());
    }
    const LinkKind link = link_for(cfg.loss, model, cfg.sharpness);
    const double vr = rmse_on(model, link, eval_entries);
    report.train_loss.push_back(tl);
    report.val_rmse.push_back(vr);
    report.epochs_run = epoch + 1;

    if (vr < best_val) {
      best_val = vr;
      report.model = model;
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale > cfg.patience) {
      report.early_stopped = true;
      break;
    }
    lr *= cfg.lr_decay;
  }
  return report;
}

// CSV serialization of the per-epoch curves: epoch, train_loss, val_rmse.
inline void write_train_report_csv(const TrainReport& report, std::ostream& os) {
  os << "epoch,train_loss,val_rmse\n";
  os.precision(17);
  for (std::size_t i = 0; i < report.train_loss.size(); ++i)
    os << i << ',' << report.train_loss[i] << ',' << report.val_rmse[i] << '\n';
}

}  // namespace roundrank
