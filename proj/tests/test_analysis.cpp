#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "roundrank/analysis.hpp"
#include "roundrank/generators.hpp"
#include "roundrank/optim.hpp"

using namespace roundrank;

namespace {

OrdinalMatrix ordinal_from(std::initializer_list<std::initializer_list<int>> rows,
                           int max_level) {
  OrdinalMatrix y(rows.size(), rows.begin()->size(), max_level);
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t j = 0;
    for (int v : r) y(i, j++) = v;
    ++i;
  }
  return y;
}

}  // namespace

TEST_CASE("witness verification demands exact levels and a real margin", "[analysis]") {
  const GeneratedMatrix gen = generate({MatrixFamily::band_diagonal, 7, 2, 0, 1, 1, 0, true});
  REQUIRE(verify_witness(gen.matrix, gen.witness));
  CHECK(gen.witness.min_margin > kWitnessMarginFloor);

  SECTION("a single flipped level is caught") {
    OrdinalMatrix tampered = gen.matrix;
    tampered(0, 0) = 1 - tampered(0, 0);
    CHECK_FALSE(verify_witness(tampered, gen.witness));
  }
  SECTION("a score parked on a threshold is caught") {
    // Levels all agree with the round map here, but the (0,0) score equals
    // the threshold exactly, so the margin floor must reject it.
    RealMatrix u(2, 1), v(2, 1);
    u(0, 0) = 1.0;
    u(1, 0) = -1.0;
    v(0, 0) = 0.5;
    v(1, 0) = 1.0;
    const GrrWitness flat{u, v, {0.5}, 0.0};
    const OrdinalMatrix target = grf(predict_real({u, v, {0.5}}), flat.thresholds);
    CHECK_FALSE(verify_witness(target, flat));
    CHECK(make_witness(u, v, {0.5}).min_margin == 0.0);
  }
  SECTION("shape and threshold-count mismatches fail fast") {
    OrdinalMatrix wide(7, 8, 1, 0);
    CHECK_FALSE(verify_witness(wide, gen.witness));
    GrrWitness extra = gen.witness;
    extra.thresholds.push_back(extra.thresholds.back() + 1.0);
    CHECK_FALSE(verify_witness(gen.matrix, extra));
  }
}

TEST_CASE("observed-entry verification skips the validation split", "[analysis]") {
  const GeneratedMatrix gen = generate({MatrixFamily::upper_triangle, 5, 3, 0, 1, 1, 0, true});
  ObservationSet obs = observe_all(gen.matrix);
  REQUIRE(verify_witness_on(obs, gen.witness));

  obs.entries[3].value = 1 - obs.entries[3].value;
  CHECK_FALSE(verify_witness_on(obs, gen.witness));
  obs.entries[3].tag = SplitTag::validation;  // corrupted entry no longer counts
  CHECK(verify_witness_on(obs, gen.witness));
}

TEST_CASE("rank-one decision procedure on the canonical small cases", "[analysis]") {
  const std::vector<double> half{0.5};

  SECTION("triangles are representable and come with a certificate") {
    const OrdinalMatrix y = ordinal_from({{1, 1, 1}, {0, 1, 1}, {0, 0, 1}}, 1);
    const Rank1Decision d = rank1_grf_representable(y, half, 1e-3);
    REQUIRE(d.representable);
    REQUIRE(d.witness.has_value());
    CHECK(d.witness->rank() == 1);
    CHECK(d.witness->thresholds == half);
    CHECK(verify_witness(y, *d.witness));
  }
  SECTION("the identity needs more than rank one") {
    const OrdinalMatrix y = ordinal_from({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 1);
    const Rank1Decision d = rank1_grf_representable(y, half, 1e-3);
    CHECK_FALSE(d.representable);
    CHECK_FALSE(d.witness.has_value());
    CHECK_THAT(d.note, Catch::Matchers::ContainsSubstring("resolution"));
  }
  SECTION("the 2x2 anti-diagonal is reached through mixed signs") {
    // u = (-1, 1), v = (1, -1) realizes it, so the search must find a
    // certificate even though no all-positive factorization exists.
    const OrdinalMatrix y = ordinal_from({{0, 1}, {1, 0}}, 1);
    const Rank1Decision d = rank1_grf_representable(y, half, 1e-3);
    REQUIRE(d.representable);
    CHECK(verify_witness(y, *d.witness));
  }
  SECTION("single cells are always representable") {
    OrdinalMatrix y(1, 1, 3, 3);
    const std::vector<double> taus{0.5, 1.5, 2.5};
    const Rank1Decision d = rank1_grf_representable(y, taus, 1e-3);
    REQUIRE(d.representable);
    CHECK(verify_witness(y, *d.witness));
  }
}

TEST_CASE("rank-one decisions find every planted factorization", "[analysis]") {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> gauss(0.0, 1.0);

  int found = 0;
  while (found < 150) {
    const std::size_t n = 2 + found % 2, m = 3 + found % 2;
    std::vector<double> u(n), v(m);
    for (double& x : u) x = gauss(rng);
    for (double& x : v) x = gauss(rng);

    RealMatrix x(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) x(i, j) = u[i] * v[j];

    // Thresholds in genuine gaps of the score list, so the planted witness
    // itself clears the decision procedure's resolution comfortably.
    std::vector<double> sorted(x.data);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> taus;
    const int want = 1 + found % 2;
    for (std::size_t g = 0; g + 1 < sorted.size() && static_cast<int>(taus.size()) < want; ++g)
      if (sorted[g + 1] - sorted[g] > 0.1) taus.push_back(0.5 * (sorted[g] + sorted[g + 1]));
    if (static_cast<int>(taus.size()) < want) continue;

    const OrdinalMatrix y = grf(x, taus);
    const Rank1Decision d = rank1_grf_representable(y, taus, 1e-3);
    REQUIRE(d.representable);
    REQUIRE(d.witness.has_value());
    CHECK(verify_witness(y, *d.witness));
    ++found;
  }
}

TEST_CASE("rank-one representability survives transposition", "[analysis]") {
  std::mt19937_64 rng(88);
  const std::vector<double> half{0.5};
  for (int t = 0; t < 25; ++t) {
    OrdinalMatrix y(3, 3, 1);
    for (Level& v : y.data) v = static_cast<Level>(rng() % 2);
    OrdinalMatrix yt(3, 3, 1);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) yt(j, i) = y(i, j);
    CHECK(rank1_grf_representable(y, half, 1e-3).representable ==
          rank1_grf_representable(yt, half, 1e-3).representable);
  }
}

TEST_CASE("constructive identity suite holds over many random draws", "[analysis]") {
  const LemmaCheckReport rep = check_lemma_suite(500, 2026);
  CHECK(rep.trials == 500);
  CHECK(rep.violations == 0);
  CHECK(rep.failures.empty());
  CHECK(rep.all_passed());

  const LemmaCheckReport again = check_lemma_suite(500, 2026);
  CHECK(again.violations == rep.violations);
}

TEST_CASE("threshold changes cost at most one extra rank per level", "[analysis]") {
  SECTION("unchanged thresholds reuse the witness") {
    const GeneratedMatrix gen =
        generate({MatrixFamily::upper_triangle, 5, 3, 0, 1, 1, 0, true});
    const ThresholdBoundReport rep =
        threshold_bound_demo(gen.matrix, gen.witness, gen.witness.thresholds);
    REQUIRE(rep.ok);
    CHECK(rep.achieved_rank == gen.witness.rank());
  }
  SECTION("a single threshold moves for one extra rank") {
    const GeneratedMatrix gen =
        generate({MatrixFamily::upper_triangle, 5, 3, 0, 1, 1, 0, true});
    const std::vector<double> alt{2.25};
    const ThresholdBoundReport rep = threshold_bound_demo(gen.matrix, gen.witness, alt);
    REQUIRE(rep.ok);
    CHECK(rep.achieved_rank <= gen.witness.rank() + 1);
    CHECK(rep.constructed.thresholds == alt);
    CHECK(verify_witness(gen.matrix, rep.constructed));
  }
  SECTION("two thresholds stay within twice the rank plus one") {
    const GeneratedMatrix gen =
        generate({MatrixFamily::random_low_grr, 6, 3, 0, 2, 2, 19, true});
    REQUIRE(gen.witness.thresholds.size() == 2);
    std::vector<double> alt = gen.witness.thresholds;
    alt[0] = alt[0] * 1.2 - 0.15;
    alt[1] = alt[1] * 1.1 + 0.4;
    REQUIRE(alt[0] < alt[1]);
    const ThresholdBoundReport rep = threshold_bound_demo(gen.matrix, gen.witness, alt);
    REQUIRE(rep.ok);
    CHECK(rep.achieved_rank <= 2 * gen.witness.rank() + 1);
    CHECK(verify_witness(gen.matrix, rep.constructed));
  }
  SECTION("a broken input witness is reported, not used") {
    const GeneratedMatrix gen =
        generate({MatrixFamily::upper_triangle, 4, 3, 0, 1, 1, 0, true});
    GrrWitness bad = gen.witness;
    for (double& x : bad.u.data) x = 0.0;
    const ThresholdBoundReport rep =
        threshold_bound_demo(gen.matrix, bad, std::vector<double>{1.0});
    CHECK_FALSE(rep.ok);
    CHECK_FALSE(rep.note.empty());
  }
}

TEST_CASE("structural lower bounds on the stock patterns", "[analysis]") {
  SECTION("identity") {
    const GeneratedMatrix gen = generate({MatrixFamily::identity, 10, 3, 0, 1, 1, 0, true});
    const StructureBound b = rank_lower_bound_structures(gen.matrix);
    CHECK(b.identity_size == 10);
    CHECK(b.bound() == 10);
  }
  SECTION("upper triangle") {
    const GeneratedMatrix gen =
        generate({MatrixFamily::upper_triangle, 10, 3, 0, 1, 1, 0, true});
    const StructureBound b = rank_lower_bound_structures(gen.matrix);
    CHECK(b.upper_triangle_size == 10);
    CHECK(b.identity_size == 1);
    CHECK(b.bound() == 10);
  }
  SECTION("permuted identity") {
    OrdinalMatrix y(5, 5, 1, 0);
    for (std::size_t i = 0; i < 5; ++i) y(i, 4 - i) = 1;
    CHECK(rank_lower_bound_structures(y).identity_size == 5);
  }
  SECTION("all ones collapses to one") {
    OrdinalMatrix y(6, 6, 1, 1);
    const StructureBound b = rank_lower_bound_structures(y);
    CHECK(b.identity_size == 1);
    CHECK(b.upper_triangle_size == 1);
    CHECK(b.distinct_row_bound == 0);
    CHECK(b.bound() == 1);
  }
  SECTION("all zeros has no certificate at all") {
    OrdinalMatrix y(4, 4, 1, 0);
    CHECK(rank_lower_bound_structures(y).bound() == 0);
  }
  SECTION("repeated constant columns count their distinct rows") {
    const OrdinalMatrix y = ordinal_from({{2, 2, 1, 1, 1, 1},
                                          {2, 2, 1, 1, 1, 2},
                                          {2, 2, 1, 1, 2, 1},
                                          {2, 2, 1, 2, 1, 1},
                                          {2, 1, 1, 1, 1, 1}},
                                         2);
    const StructureBound b = rank_lower_bound_structures(y);
    CHECK(b.distinct_row_bound == 4);
    CHECK(b.identity_size == 1);  // no zeros anywhere, so pairings stop at one
    CHECK(b.upper_triangle_size == 1);
    CHECK(b.bound() == 4);
  }
}

namespace {

// Rank-one instance whose second row is the first scaled by two: with the
// first row in the expansion basis the missing entry's coefficient is 2,
// well past any workable bound on the coefficient mass.
struct PlantedViolation {
  FactorModel model;
  OrdinalMatrix y;
  ObservationSet obs;  // everything except (1, 0)

  PlantedViolation() {
    model.u = RealMatrix(8, 1);
    const double us[8] = {1.0, 2.0, 0.9, -0.8, 0.7, -0.6, 0.5, 0.4};
    for (std::size_t i = 0; i < 8; ++i) model.u(i, 0) = us[i];
    model.v = RealMatrix(8, 1, 0.45);
    model.thresholds = {-1.0, 1.0};
    y = grf(predict_real(model), model.thresholds);
    obs = ObservationSet{8, 8, 2, {}};
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        if (!(i == 1 && j == 0)) obs.entries.push_back({i, j, y(i, j), SplitTag::train});
  }
};

}  // namespace

TEST_CASE("a duplicated scaled row breaks the coefficient-mass condition", "[analysis]") {
  const PlantedViolation inst;
  const UniquenessReport rep = uniqueness_check(inst.y, inst.obs, inst.model, 0.5);

  REQUIRE(rep.entries.size() == 1);
  const UniquenessEntryReport& e = rep.entries.front();
  CHECK(e.row == 1);
  CHECK(e.col == 0);
  REQUIRE(e.coeffs.size() == 1);
  CHECK_THAT(e.coeffs[0], Catch::Matchers::WithinAbs(2.0, 1e-9));
  CHECK_FALSE(e.necessary_ok);
  CHECK_FALSE(e.sufficient_ok);
  CHECK_FALSE(rep.all_necessary());
  CHECK(rep.unverifiable_columns.empty());

  SECTION("and a second completion with a different level exists") {
    const auto alt = uniqueness_counterexample(inst.y, inst.obs, inst.model, 1, 0);
    REQUIRE(alt.has_value());
    CHECK(alt->rank() == 1);
    const GrrWitness w{alt->u, alt->v, alt->thresholds, 0.0};
    CHECK(verify_witness_on(inst.obs, w));
    CHECK(grf(predict_entry(*alt, 1, 0), alt->thresholds) !=
          grf(predict_entry(inst.model, 1, 0), inst.model.thresholds));
  }
}

namespace {

// Rank-two instance whose hidden entries have strictly more margin than the
// worst drift the observations allow. Rows 6 and 7 are the coordinate axes
// and stay fully observed, so they anchor every column's basis; the other
// rows mix them half-and-half. Anchor scores sit centered in the two narrow
// outer intervals (slack 1 each way), while every hidden cell scores zero in
// the wide middle interval (margin 2), leaving a full unit of slack between
// the reachable drift (1) and the margin.
struct CenteredInstance {
  FactorModel model;
  OrdinalMatrix y;
  ObservationSet obs;
  std::vector<std::pair<std::size_t, std::size_t>> hidden;

  CenteredInstance() {
    model.u = RealMatrix(8, 2);
    model.v = RealMatrix(8, 2);
    const double us[8][2] = {{0.5, 0.5},  {0.5, 0.5},  {0.5, 0.5},  {0.5, -0.5},
                             {0.5, -0.5}, {0.5, -0.5}, {1.0, 0.0},  {0.0, 1.0}};
    const double vs[8][2] = {{3, -3}, {-3, 3}, {3, -3}, {-3, 3},
                             {3, -3}, {-3, 3}, {3, 3},  {-3, 3}};
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        model.u(i, c) = us[i][c];
        model.v(i, c) = vs[i][c];
      }
    model.thresholds = {-4.0, -2.0, 2.0, 4.0};
    y = grf(predict_real(model), model.thresholds);
    hidden = {{0, 0}, {1, 1}, {2, 2}, {0, 3}, {1, 4}, {2, 5}};
    obs = ObservationSet{8, 8, 4, {}};
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        const bool hide = std::find(hidden.begin(), hidden.end(),
                                    std::make_pair(i, j)) != hidden.end();
        if (!hide) obs.entries.push_back({i, j, y(i, j), SplitTag::train});
      }
  }
};

}  // namespace

TEST_CASE("centered scores meet the slack condition everywhere", "[analysis]") {
  const CenteredInstance inst;
  const UniquenessReport rep = uniqueness_check(inst.y, inst.obs, inst.model, 0.5);

  REQUIRE(rep.entries.size() == inst.hidden.size());
  for (const auto& e : rep.entries) {
    CHECK_THAT(e.coeff_abs_sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    CHECK_THAT(e.epsilon_bar, Catch::Matchers::WithinAbs(2.0, 1e-12));
    CHECK_THAT(e.sufficient_bound, Catch::Matchers::WithinAbs(1.0, 1e-9));
    CHECK(e.sufficient_ok);
  }
  CHECK(rep.all_sufficient());

  SECTION("independent refits land on the same completion") {
    TrainConfig cfg;
    cfg.loss = LossKind::round;
    cfg.rank = 2;
    cfg.learning_rate = 0.1;
    cfg.max_epochs = 2000;
    cfg.patience = 2000;
    // The exact hinge stops at the first zero-loss point, which can leave
    // scores parked on interval boundaries; the smoothed hinge keeps pulling
    // them toward the interior, so every restart settles on the same levels.
    cfg.hinge_smoothing = 0.25;
    cfg.initial_thresholds = inst.model.thresholds;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      cfg.seed = seed;
      const TrainReport rep2 = train(inst.obs, cfg);
      const LinkKind link = LinkKind::make_grf(rep2.model.thresholds);
      REQUIRE(rmse_on(rep2.model, link, inst.obs.entries) == 0.0);
      for (const auto& [i, j] : inst.hidden)
        CHECK(grf(predict_entry(rep2.model, i, j), rep2.model.thresholds) == inst.y(i, j));
    }
  }
}

TEST_CASE("columns without enough observations are flagged", "[analysis]") {
  CenteredInstance inst;
  // Empty out column 7 entirely.
  std::erase_if(inst.obs.entries, [](const Observation& e) { return e.col == 7; });
  const UniquenessReport rep = uniqueness_check(inst.y, inst.obs, inst.model, 0.5);
  REQUIRE(rep.unverifiable_columns.size() == 1);
  CHECK(rep.unverifiable_columns[0] == 7);
  CHECK_FALSE(rep.all_sufficient());
}

TEST_CASE("uniqueness checks reject inconsistent inputs", "[analysis]") {
  PlantedViolation inst;
  SECTION("observed level disagreeing with the matrix") {
    inst.obs.entries[0].value = 0;
    CHECK_THROWS_AS(uniqueness_check(inst.y, inst.obs, inst.model, 0.5),
                    std::invalid_argument);
  }
  SECTION("epsilon outside its range") {
    CHECK_THROWS_AS(uniqueness_check(inst.y, inst.obs, inst.model, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(uniqueness_check(inst.y, inst.obs, inst.model, 1.5),
                    std::invalid_argument);
  }
  SECTION("counterexample target must be unobserved") {
    CHECK_THROWS_AS(uniqueness_counterexample(inst.y, inst.obs, inst.model, 0, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("scaled sign witnesses saturate the smooth link", "[analysis]") {
  std::mt19937_64 rng(606);
  int done = 0;
  while (done < 20) {
    const RealMatrix u = testutil::gaussian_matrix(6, 2, rng);
    const RealMatrix v = testutil::gaussian_matrix(6, 2, rng);
    RealMatrix x = predict_real({u, v, {}});
    double margin = std::numeric_limits<double>::infinity();
    for (double e : x.data) margin = std::min(margin, std::abs(e));
    if (margin < 0.05) continue;  // want scores clear of the sign boundary

    const std::vector<double> zero{0.0};
    const OrdinalMatrix y = grf(x, zero);
    const double eta = 1e3;
    for (std::size_t c = 0; c < x.data.size(); ++c) {
      const double s = multi_sigmoid(eta * x.data[c], zero, 1.0);
      CHECK(std::abs(s - static_cast<double>(y.data[c])) <= 1e-2);
    }
    ++done;
  }
}
