#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "roundrank/svd.hpp"

using namespace roundrank;

namespace {

RealMatrix multiply_usv(const SvdResult& s) {
  return rank_k_truncation(s, s.singular_values.size());
}

double max_gram_deviation(const RealMatrix& q) {
  // Largest |Q^T Q - I| entry; zero for orthonormal columns.
  double worst = 0.0;
  for (std::size_t a = 0; a < q.n_cols; ++a)
    for (std::size_t b = 0; b < q.n_cols; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < q.n_rows; ++i) dot += q(i, a) * q(i, b);
      worst = std::max(worst, std::abs(dot - (a == b ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace

TEST_CASE("identity matrix decomposes into unit singular values", "[svd]") {
  const std::size_t n = 10;
  RealMatrix eye(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;

  const SvdResult s = svd(eye);
  REQUIRE(s.singular_values.size() == n);
  for (double sv : s.singular_values) CHECK_THAT(sv, Catch::Matchers::WithinAbs(1.0, 1e-12));

  for (std::size_t k = 0; k <= n; ++k)
    CHECK_THAT(best_rank_k_error(s, k),
               Catch::Matchers::WithinAbs(double(n - k), 1e-9));
}

TEST_CASE("random matrices reconstruct from their factors", "[svd]") {
  std::mt19937_64 rng(101);
  const std::pair<std::size_t, std::size_t> shapes[] = {
      {6, 6}, {9, 4}, {4, 9}, {12, 3}, {2, 11}, {1, 5}, {7, 1}};

  for (auto [n, m] : shapes) {
    for (int rep = 0; rep < 6; ++rep) {
      const RealMatrix a = testutil::gaussian_matrix(n, m, rng);
      const SvdResult s = svd(a);

      REQUIRE(s.singular_values.size() == std::min(n, m));
      REQUIRE(s.left_vectors.n_rows == n);
      REQUIRE(s.right_vectors.n_rows == m);

      for (std::size_t i = 0; i + 1 < s.singular_values.size(); ++i)
        CHECK(s.singular_values[i] >= s.singular_values[i + 1]);
      CHECK(s.singular_values.back() >= 0.0);

      CHECK(max_gram_deviation(s.left_vectors) < 1e-8);
      CHECK(max_gram_deviation(s.right_vectors) < 1e-8);

      const RealMatrix back = multiply_usv(s);
      double err = 0.0;
      for (std::size_t c = 0; c < a.data.size(); ++c)
        err = std::max(err, std::abs(back.data[c] - a.data[c]));
      CHECK(err < 1e-9 * std::max(1.0, testutil::frob_norm(a)));

      // Total spectral energy accounts for the full Frobenius norm.
      double energy = 0.0;
      for (double sv : s.singular_values) energy += sv * sv;
      const double frob2 = testutil::frob_norm(a) * testutil::frob_norm(a);
      CHECK_THAT(energy, Catch::Matchers::WithinRel(frob2, 1e-10));
    }
  }
}

TEST_CASE("rank-deficient inputs expose their rank", "[svd]") {
  std::mt19937_64 rng(55);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t r = 1 + rep % 3;
    const RealMatrix a = testutil::low_rank_matrix(8, 6, r, rng);
    const SvdResult s = svd(a);
    for (std::size_t i = r; i < s.singular_values.size(); ++i)
      CHECK(s.singular_values[i] < 1e-9 * std::max(1.0, s.singular_values[0]));
    CHECK(best_rank_k_error(s, r) < 1e-16 * testutil::frob_norm(a) * testutil::frob_norm(a) + 1e-18);
  }
}

TEST_CASE("zero matrix has an all-zero spectrum", "[svd]") {
  const RealMatrix z(5, 3, 0.0);
  const SvdResult s = svd(z);
  for (double sv : s.singular_values) CHECK(sv == 0.0);
  CHECK(best_rank_k_error(s, 0) == 0.0);
  CHECK(max_gram_deviation(s.left_vectors) < 1e-12);
  CHECK(max_gram_deviation(s.right_vectors) < 1e-12);
}

TEST_CASE("truncation error beats random rank-k candidates", "[svd]") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 8; ++rep) {
    const RealMatrix a = testutil::gaussian_matrix(7, 9, rng);
    const SvdResult s = svd(a);
    for (std::size_t k : {1u, 2u, 4u}) {
      const double best = best_rank_k_error(s, k);

      // The k-truncation itself attains the reported error.
      const RealMatrix trunc = rank_k_truncation(s, k);
      double attained = 0.0;
      for (std::size_t c = 0; c < a.data.size(); ++c) {
        const double d = a.data[c] - trunc.data[c];
        attained += d * d;
      }
      CHECK_THAT(attained, Catch::Matchers::WithinAbs(best, 1e-8));

      // No random competitor of the same rank does better.
      for (int cand = 0; cand < 12; ++cand) {
        const RealMatrix rival = testutil::low_rank_matrix(7, 9, k, rng);
        double err = 0.0;
        for (std::size_t c = 0; c < a.data.size(); ++c) {
          const double d = a.data[c] - rival.data[c];
          err += d * d;
        }
        CHECK(err >= best - 1e-9);
      }
    }
  }
}

TEST_CASE("approximation curve of an ordinal identity is linear", "[svd]") {
  OrdinalMatrix y(10, 10, 1, 0);
  for (std::size_t i = 0; i < 10; ++i) y(i, i) = 1;

  const auto curve = approx_rank_curve(y, 10);
  REQUIRE(curve.size() == 11);
  for (const auto& [k, err] : curve)
    CHECK_THAT(err, Catch::Matchers::WithinAbs(10.0 - k, 1e-9));

  SECTION("curves never increase with k") {
    std::mt19937_64 rng(9);
    OrdinalMatrix r(6, 8, 2);
    for (Level& v : r.data) v = static_cast<Level>(rng() % 3);
    const auto c = approx_rank_curve(r, 8);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].second <= c[i - 1].second + 1e-12);
  }
}
