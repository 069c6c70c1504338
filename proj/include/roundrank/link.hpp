#pragma once

// Link functions mapping real scores to ordinal levels, plus the smooth
// surrogate used for gradient-based training.
//
// Boundary convention used throughout: a score exactly equal to a threshold
// maps to the lower level. round_binary(x, t) is 0 iff x <= t, and the
// generalized round function counts thresholds strictly below x.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "roundrank/matrix.hpp"

namespace roundrank {

inline double sigmoid(double t) {
  // Split on sign so large |t| never feeds exp() an overflowing argument.
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// 0 below (or at) the threshold, 1 above.
inline Level round_binary(double x, double tau) { return x <= tau ? 0 : 1; }

// Sign link into {0, 1}: 0 for negative scores, 1 otherwise.
inline Level sign01(double x) { return x < 0.0 ? 0 : 1; }

// Generalized round: number of thresholds strictly less than x. Thresholds
// must be strictly ascending; the result lies in {0, ..., taus.size()}.
inline Level grf(double x, std::span<const double> taus) {
  Level lvl = 0;
  for (double t : taus) lvl += (t < x) ? 1 : 0;
  return lvl;
}

inline OrdinalMatrix grf(const RealMatrix& x, std::span<const double> taus) {
  validate_thresholds(taus, "grf");
  OrdinalMatrix y(x.n_rows, x.n_cols, static_cast<int>(taus.size()));
  for (std::size_t c = 0; c < x.data.size(); ++c) y.data[c] = grf(x.data[c], taus);
  return y;
}

// Smooth monotone surrogate for grf: a sum of logistic steps, one per
// threshold. sharpness scales how quickly each step saturates.
inline double multi_sigmoid(double x, std::span<const double> taus, double sharpness = 1.0) {
  double acc = 0.0;
  for (double t : taus) acc += sigmoid(sharpness * (x - t));
  return acc;
}

struct MultiSigmoidGrad {
  double dx = 0.0;
  std::vector<double> dtau;  // one per threshold
};

inline MultiSigmoidGrad multi_sigmoid_grad(double x, std::span<const double> taus,
                                           double sharpness = 1.0) {
  MultiSigmoidGrad g;
  g.dtau.resize(taus.size());
  for (std::size_t d = 0; d < taus.size(); ++d) {
    const double s = sigmoid(sharpness * (x - taus[d]));
    const double slope = sharpness * s * (1.0 - s);
    g.dx += slope;
    g.dtau[d] = -slope;
  }
  return g;
}

enum class LinkType { identity, sign, round, grf, multi_sigmoid };

// A link function together with its parameters. round uses thresholds[0];
// identity and sign carry no parameters.
struct LinkKind {
  LinkType type = LinkType::identity;
  std::vector<double> thresholds;
  double sharpness = 1.0;

  static LinkKind make_identity() { return {LinkType::identity, {}, 1.0}; }
  static LinkKind make_sign() { return {LinkType::sign, {}, 1.0}; }
  static LinkKind make_round(double tau) { return {LinkType::round, {tau}, 1.0}; }
  static LinkKind make_grf(std::vector<double> taus) {
    validate_thresholds(taus, "LinkKind::make_grf");
    return {LinkType::grf, std::move(taus), 1.0};
  }
  static LinkKind make_multi_sigmoid(std::vector<double> taus, double sharpness = 1.0) {
    validate_thresholds(taus, "LinkKind::make_multi_sigmoid");
    detail::require(sharpness > 0.0, "LinkKind: sharpness must be positive");
    return {LinkType::multi_sigmoid, std::move(taus), sharpness};
  }
};

// Scalar prediction under a link. identity and multi_sigmoid stay real valued,
// the others land on ordinal levels.
inline double apply_link(const LinkKind& link, double x) {
  switch (link.type) {
    case LinkType::identity: return x;
    case LinkType::sign: return static_cast<double>(sign01(x));
    case LinkType::round: return static_cast<double>(round_binary(x, link.thresholds.at(0)));
    case LinkType::grf: return static_cast<double>(grf(x, link.thresholds));
    case LinkType::multi_sigmoid: return multi_sigmoid(x, link.thresholds, link.sharpness);
  }
  throw std::invalid_argument("apply_link: unknown link type");
}

inline std::string link_name(const LinkKind& link) {
  switch (link.type) {
    case LinkType::identity: return "identity";
    case LinkType::sign: return "sign";
    case LinkType::round: return "round";
    case LinkType::grf: return "grf";
    case LinkType::multi_sigmoid: return "multi_sigmoid";
  }
  return "unknown";
}

}  // namespace roundrank
