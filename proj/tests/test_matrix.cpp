#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "helpers.hpp"
#include "roundrank/link.hpp"
#include "roundrank/matrix.hpp"

using namespace roundrank;

TEST_CASE("matrix containers index row-major", "[matrix]") {
  RealMatrix x(2, 3, 0.0);
  x(0, 0) = 1.0;
  x(1, 2) = 7.0;
  CHECK(x.data[0] == 1.0);
  CHECK(x.data[5] == 7.0);

  const RealMatrix t = x.transposed();
  REQUIRE(t.n_rows == 3);
  REQUIRE(t.n_cols == 2);
  CHECK(t(0, 0) == 1.0);
  CHECK(t(2, 1) == 7.0);

  OrdinalMatrix y(3, 2, 4, 2);
  CHECK(y(2, 1) == 2);
  y(0, 1) = 4;
  CHECK(y.data[1] == 4);
}

TEST_CASE("ordinal validation rejects out-of-range levels", "[matrix]") {
  OrdinalMatrix y(2, 2, 3, 1);
  validate_ordinal(y, "test");
  y(1, 1) = 4;
  CHECK_THROWS_AS(validate_ordinal(y, "test"), std::invalid_argument);
  y(1, 1) = -1;
  CHECK_THROWS_AS(validate_ordinal(y, "test"), std::invalid_argument);
}

TEST_CASE("threshold validation wants a strictly ascending list", "[matrix]") {
  const std::vector<double> good{-1.0, 0.5, 2.0};
  validate_thresholds(good, "test");
  const std::vector<double> flat{0.5, 0.5};
  CHECK_THROWS_AS(validate_thresholds(flat, "test"), std::invalid_argument);
  const std::vector<double> empty;
  CHECK_THROWS_AS(validate_thresholds(empty, "test"), std::invalid_argument);
}

TEST_CASE("predict matches an explicit dot product", "[matrix]") {
  std::mt19937_64 rng(11);
  const auto u = testutil::gaussian_matrix(4, 3, rng);
  const auto v = testutil::gaussian_matrix(5, 3, rng);
  FactorModel m{u, v, {0.0}};
  const RealMatrix x = predict_real(m);
  REQUIRE(x.n_rows == 4);
  REQUIRE(x.n_cols == 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 3; ++c) dot += u(i, c) * v(j, c);
      CHECK_THAT(predict_entry(m, i, j), Catch::Matchers::WithinAbs(dot, 1e-12));
      CHECK(x(i, j) == predict_entry(m, i, j));
    }
}

TEST_CASE("level intervals cover the line and close on the left", "[matrix]") {
  const std::vector<double> taus{-1.0, 0.5, 2.0};

  SECTION("interior levels span adjacent thresholds") {
    auto [lo, hi] = grf_interval(1, taus, 10.0);
    CHECK(lo == -1.0);
    CHECK(hi == 0.5);
  }
  SECTION("edge levels extend by the pad") {
    auto [lo0, hi0] = grf_interval(0, taus, 4.0);
    CHECK(lo0 == -5.0);
    CHECK(hi0 == -1.0);
    auto [lo3, hi3] = grf_interval(3, taus, 4.0);
    CHECK(lo3 == 2.0);
    CHECK(hi3 == 6.0);
  }
  SECTION("default pad scales with the threshold spread") {
    CHECK(default_boundary_pad(taus) == 10.0 * (2.0 - (-1.0) + 1.0));
  }
  SECTION("the round map sends interval interiors and tops back to the level") {
    for (Level v = 0; v <= 3; ++v) {
      auto [lo, hi] = grf_interval(v, taus, 4.0);
      CHECK(grf(0.5 * (lo + hi), taus) == v);
      CHECK(grf(hi, taus) == v);  // ties resolve downward
      // For every level above the bottom, lo is a real threshold and belongs
      // to the level below; level 0's lo is just the pad.
      if (v > 0) CHECK(grf(lo, taus) == v - 1);
    }
  }
}

TEST_CASE("interval matrix agrees with the per-level rule", "[matrix]") {
  std::mt19937_64 rng(3);
  OrdinalMatrix y(6, 7, 3);
  for (Level& v : y.data) v = static_cast<Level>(rng() % 4);
  const std::vector<double> taus{0.5, 1.5, 2.5};
  const IntervalMatrix iv = interval_matrix(y, taus, 5.0);
  for (std::size_t i = 0; i < y.n_rows; ++i)
    for (std::size_t j = 0; j < y.n_cols; ++j) {
      auto [lo, hi] = grf_interval(y(i, j), taus, 5.0);
      CHECK(iv.lower(i, j) == lo);
      CHECK(iv.upper(i, j) == hi);
      CHECK(lo < hi);
    }
  CHECK_THROWS_AS(interval_matrix(y, std::vector<double>{0.5}, 5.0), std::invalid_argument);
}

TEST_CASE("observation validation flags duplicates and bad indices", "[matrix]") {
  ObservationSet obs{2, 2, 1, {{0, 0, 1, SplitTag::train}, {1, 1, 0, SplitTag::train}}};
  validate_observations(obs, "test");

  SECTION("duplicate cell") {
    obs.entries.push_back({0, 0, 1, SplitTag::validation});
    CHECK_THROWS_AS(validate_observations(obs, "test"), std::invalid_argument);
  }
  SECTION("row out of range") {
    obs.entries.push_back({2, 0, 1, SplitTag::train});
    CHECK_THROWS_AS(validate_observations(obs, "test"), std::invalid_argument);
  }
  SECTION("level out of range") {
    obs.entries.push_back({1, 0, 2, SplitTag::train});
    CHECK_THROWS_AS(validate_observations(obs, "test"), std::invalid_argument);
  }
}

TEST_CASE("observe_all lists every cell with its level", "[matrix]") {
  OrdinalMatrix y(3, 4, 2);
  for (std::size_t c = 0; c < y.data.size(); ++c) y.data[c] = static_cast<Level>(c % 3);
  const ObservationSet obs = observe_all(y);
  REQUIRE(obs.entries.size() == 12);
  CHECK(obs.count(SplitTag::train) == 12);
  for (const auto& e : obs.entries) CHECK(e.value == y(e.row, e.col));
}

TEST_CASE("random masks hit the target count and cover rows and columns", "[matrix]") {
  OrdinalMatrix y(12, 9, 1);
  for (std::size_t c = 0; c < y.data.size(); ++c) y.data[c] = static_cast<Level>(c % 2);

  const ObservationSet obs = apply_mask(y, 0.5, 42);
  CHECK(obs.entries.size() == 54);

  std::set<std::size_t> rows, cols;
  for (const auto& e : obs.entries) {
    rows.insert(e.row);
    cols.insert(e.col);
    CHECK(e.value == y(e.row, e.col));
  }
  CHECK(rows.size() == 12);
  CHECK(cols.size() == 9);

  SECTION("same seed reproduces the mask, another seed moves it") {
    const ObservationSet again = apply_mask(y, 0.5, 42);
    REQUIRE(again.entries.size() == obs.entries.size());
    bool same = true;
    for (std::size_t k = 0; k < obs.entries.size(); ++k)
      same = same && obs.entries[k].row == again.entries[k].row &&
             obs.entries[k].col == again.entries[k].col;
    CHECK(same);

    const ObservationSet other = apply_mask(y, 0.5, 43);
    bool identical = other.entries.size() == obs.entries.size();
    for (std::size_t k = 0; identical && k < obs.entries.size(); ++k)
      identical = obs.entries[k].row == other.entries[k].row &&
                  obs.entries[k].col == other.entries[k].col;
    CHECK_FALSE(identical);
  }
  SECTION("full fraction returns every entry") {
    CHECK(apply_mask(y, 1.0, 0).entries.size() == y.data.size());
  }
  SECTION("fraction bounds") {
    CHECK_THROWS_AS(apply_mask(y, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(apply_mask(y, 1.5, 0), std::invalid_argument);
  }
}

namespace {

std::set<std::size_t> cells_of(const ObservationSet& obs, SplitTag tag) {
  std::set<std::size_t> out;
  for (const auto& e : obs.entries)
    if (e.tag == tag) out.insert(e.row * obs.n_cols + e.col);
  return out;
}

}  // namespace

TEST_CASE("completion masks keep one holdout per seed across fractions", "[matrix]") {
  OrdinalMatrix y(10, 10, 1);
  for (std::size_t c = 0; c < y.data.size(); ++c) y.data[c] = static_cast<Level>((c / 10) % 2);

  const ObservationSet a = completion_mask(y, 0.3, 0.2, 7);
  const ObservationSet b = completion_mask(y, 0.6, 0.2, 7);

  const auto val_a = cells_of(a, SplitTag::validation);
  const auto val_b = cells_of(b, SplitTag::validation);
  CHECK(val_a.size() == 20);
  CHECK(val_a == val_b);  // the held-out set depends only on the seed

  const auto train_a = cells_of(a, SplitTag::train);
  const auto train_b = cells_of(b, SplitTag::train);
  CHECK(train_a.size() == 30);
  CHECK(train_b.size() == 60);
  CHECK(std::includes(train_b.begin(), train_b.end(), train_a.begin(), train_a.end()));

  for (std::size_t cell : train_a) CHECK(val_a.count(cell) == 0);

  SECTION("fractions must fit inside the matrix") {
    CHECK_THROWS_AS(completion_mask(y, 0.9, 0.2, 0), std::invalid_argument);
    CHECK_THROWS_AS(completion_mask(y, 0.0, 0.2, 0), std::invalid_argument);
  }
}
