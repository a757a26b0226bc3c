#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dclone/analysis.hpp"
#include "dclone/error.hpp"
#include "dclone/random.hpp"
#include "oracles.hpp"

using namespace dclone;
using dclone::testing::logdet_oracle;
using dclone::testing::naive_redundancy;

namespace {

using Dense = std::vector<std::vector<double>>;

RowMatrix from_rows(const Dense& rows) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

RowMatrix random_matrix(Rng& rng, int n, int d) {
  RowMatrix m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
RowMatrix random_orthogonal(Rng& rng, int d) {
  RowMatrix q = random_matrix(rng, d, d);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0;
      for (int i = 0; i < d; ++i) dot += q(i, j) * q(i, k);
      for (int i = 0; i < d; ++i) q(i, j) -= dot * q(i, k);
    }
    double norm = 0;
    for (int i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (int i = 0; i < d; ++i) q(i, j) /= norm;
  }
  return q;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("row normalization") {
  RowMatrix x = from_rows({{3, 4}, {1, 0}, {0, 0}});
  CHECK(l2_normalize_rows(x) == 1);
  CHECK(x(0, 0) == doctest::Approx(0.6));
  CHECK(x(0, 1) == doctest::Approx(0.8));
  CHECK(x(1, 0) == 1.0);
  CHECK(x(1, 1) == 0.0);
  CHECK(x(2, 0) == 0.0);
  CHECK(x(2, 1) == 0.0);
}

TEST_CASE("sparsity ratio") {
  RowMatrix onehot = RowMatrix::Zero(6, 2048);
  for (int i = 0; i < 6; ++i) onehot(i, i * 7) = 1.0;
  CHECK(sparsity_ratio(onehot) == 2047.0 / 2048.0);
  RowMatrix dense = RowMatrix::Constant(3, 16, 0.25);
  CHECK(sparsity_ratio(dense) == 0.0);

  Rng rng(13);
  RowMatrix m = random_matrix(rng, 5, 8);
  std::vector<int> idx(40);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 39; i > 0; --i) std::swap(idx[i], idx[rng.below(static_cast<std::uint64_t>(i + 1))]);
  for (int t = 0; t < 13; ++t) m(idx[t] / 8, idx[t] % 8) = 0.0;
  int count = 0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 8; ++j) count += std::abs(m(i, j)) < 1e-5 ? 1 : 0;
  }
  CHECK(count == 13);
  CHECK(sparsity_ratio(m) == 13.0 / 40.0);

  double prev = 0.0;
  for (double thr : {0.0, 1e-5, 0.1, 0.5, 1.0, 2.0, 10.0}) {
    const double s = sparsity_ratio(m, thr);
    CHECK(s >= prev);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    prev = s;
  }
  CHECK(code_of([] { sparsity_ratio(RowMatrix(0, 4)); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("intra-class distance") {
  const std::vector<std::int32_t> one{0, 0};
  CHECK(intra_class_distance(from_rows({{1, 0}, {1, 0}}), one) == 0.0);
  CHECK(intra_class_distance(from_rows({{1, 0}, {0, 1}}), one) == doctest::Approx(std::sqrt(2.0)));
  const std::vector<std::int32_t> three{0, 0, 0};
  CHECK(intra_class_distance(from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), three) ==
        doctest::Approx(std::sqrt(2.0)));
  // Singleton classes are skipped; macro average over the rest.
  const std::vector<std::int32_t> mixed{0, 0, 1, 2, 2};
  const auto x = from_rows({{1, 0}, {1, 0}, {0, 1}, {1, 0}, {-1, 0}});
  CHECK(intra_class_distance(x, mixed) == doctest::Approx((0.0 + 2.0) / 2));
  CHECK(code_of([] {
          const std::vector<std::int32_t> l{0, 1};
          intra_class_distance(from_rows({{1, 0}, {0, 1}}), l);
        }) == ErrorCode::kInvalidArgument);

  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng.below(30));
    const int d = 1 + static_cast<int>(rng.below(9));
    RowMatrix m = random_matrix(rng, n, d);
    l2_normalize_rows(m);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(3));
    labels[0] = labels[1] = 0;
    // Brute force: per-class mean over unordered pairs, then mean over classes.
    double sum = 0;
    int classes = 0;
    for (int c = 0; c < 3; ++c) {
      double cs = 0;
      int pairs = 0;
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if (labels[i] != c || labels[j] != c) continue;
          cs += (m.row(i) - m.row(j)).norm();
          ++pairs;
        }
      }
      if (pairs > 0) {
        sum += cs / pairs;
        ++classes;
      }
    }
    const double v = intra_class_distance(m, labels);
    CHECK(v == doctest::Approx(sum / classes).epsilon(1e-12));
    CHECK(v >= 0.0);
    CHECK(v <= 2.0 + 1e-12);
  }
}

TEST_CASE("feature redundancy examples") {
  CHECK(feature_redundancy(from_rows({{1, 1}, {2, 2}, {5, 5}})) == doctest::Approx(1.0));
  CHECK(feature_redundancy(from_rows({{1, -1}, {2, -2}, {5, -5}})) == doctest::Approx(1.0));
  CHECK(feature_redundancy(from_rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}})) == doctest::Approx(0.5));
  // A constant column correlates with nothing but itself.
  CHECK(feature_redundancy(from_rows({{1, 3}, {2, 3}, {4, 3}})) == doctest::Approx(0.5));
  CHECK(code_of([] { feature_redundancy(from_rows({{1, 2}})); }) == ErrorCode::kInvalidArgument);
  // Affine images of one column.
  Rng rng(2);
  RowMatrix aff(20, 4);
  for (int i = 0; i < 20; ++i) {
    const double u = rng.normal();
    aff(i, 0) = u;
    aff(i, 1) = 3 * u + 1;
    aff(i, 2) = -0.5 * u;
    aff(i, 3) = 7 - u;
  }
  CHECK(feature_redundancy(aff) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("feature redundancy matches a naive Pearson loop") {
  Rng rng(21);
  for (int t = 0; t < 500; ++t) {
    const int n = 2 + static_cast<int>(rng.below(7));
    const int d = 1 + static_cast<int>(rng.below(8));
    RowMatrix m = random_matrix(rng, n, d);
    if (rng.bernoulli(0.2)) m.col(static_cast<Eigen::Index>(rng.below(d))).setConstant(0.3);
    if (rng.bernoulli(0.3)) l2_normalize_rows(m);
    const double r = feature_redundancy(m);
    CHECK(std::abs(r - naive_redundancy(m)) <= 1e-12);
    CHECK(r >= 1.0 / d - 1e-15);
    CHECK(r <= 1.0 + 1e-15);
  }
}

TEST_CASE("coding length examples") {
  CHECK(coding_length(RowMatrix::Zero(3, 5)) == 0.0);
  CHECK(coding_length(RowMatrix::Zero(5, 3)) == 0.0);
  CHECK(coding_length(RowMatrix::Identity(2, 2)) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(coding_length(RowMatrix::Identity(2, 2), 0.5, 2.0) == doctest::Approx(std::log2(3.0)).epsilon(1e-14));
  CHECK(coding_length(RowMatrix(0, 4)) == 0.0);
}

TEST_CASE("coding length matches a direct log-det to 1e-9") {
  Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng.below(8));
    const int d = 1 + static_cast<int>(rng.below(8));
    RowMatrix m = random_matrix(rng, n, d);
    if (rng.bernoulli(0.25) && n > 1) m.row(n - 1) = m.row(0) * 2.0;  // rank deficient
    const double eps2 = rng.bernoulli(0.5) ? 0.5 : rng.uniform(0.1, 2.0);
    const double coef = d / (n * eps2);
    CHECK(std::abs(coding_length(m, eps2) - 0.5 * logdet_oracle(m, coef)) <= 1e-9);
  }
}

TEST_CASE("coding length invariances") {
  Rng rng(41);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng.below(8));
    const int d = 1 + static_cast<int>(rng.below(8));
    const RowMatrix m = random_matrix(rng, n, d);
    const double base = coding_length(m);

    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    RowMatrix p(n, d);
    for (int i = 0; i < n; ++i) p.row(i) = m.row(perm[i]);
    CHECK(std::abs(coding_length(p) - base) <= 1e-10);

    const RowMatrix q = random_orthogonal(rng, d);
    const RowMatrix rotated = m * q;
    CHECK(std::abs(coding_length(rotated) - base) <= 1e-9);
  }
}

TEST_CASE("appending a row outside the row space raises log det at a fixed coefficient") {
  Rng rng(51);
  for (int t = 0; t < 200; ++t) {
    const int d = 2 + static_cast<int>(rng.below(7));
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - 1)));
    const RowMatrix m = random_matrix(rng, n, d);
    RowMatrix grown(n + 1, d);
    grown.topRows(n) = m;
    grown.row(n) = random_matrix(rng, 1, d);  // generic, so outside an n < d row space
    // Hold d/(N*eps2) fixed by scaling eps2 with N.
    const double eps2 = 0.5;
    const double eps2_grown = eps2 * n / (n + 1.0);
    CHECK(coding_length(grown, eps2_grown) > coding_length(m, eps2));
  }
}

TEST_CASE("with the N-dependent coefficient, appending a row can lower R") {
  const double one = coding_length(from_rows({{10, 0}}));
  const double two = coding_length(from_rows({{10, 0}, {0, 0.01}}));
  CHECK(one == doctest::Approx(0.5 * std::log(401.0)));
  CHECK(two == doctest::Approx(0.5 * (std::log(201.0) + std::log(1.0002))));
  CHECK(two < one);
}

TEST_CASE("analyze normalizes rows and reports parameters") {
  FeatureMatrix f;
  f.n = 4;
  f.d = 2;
  f.x = {3, 4, 0, 0, 0, 2, 5, 0};
  f.labels = {0, 0, 1, 1};
  AnalysisParams p;
  p.dataset_group = "grp";
  const auto r = analyze(f, parse_metric_list("sparsity,intra,redundancy,coding"), p);
  CHECK(r.zero_rows == 1);
  CHECK(*r.sparsity == doctest::Approx(4.0 / 8.0));
  CHECK(*r.intra_class_l2 == doctest::Approx((1.0 + std::sqrt(2.0)) / 2));
  RowMatrix normed = from_rows({{0.6, 0.8}, {0, 0}, {0, 1}, {1, 0}});
  CHECK(*r.redundancy == doctest::Approx(naive_redundancy(normed)).epsilon(1e-12));
  CHECK(*r.coding_length == doctest::Approx(0.5 * logdet_oracle(normed, 2.0 / (4 * 0.5))).epsilon(1e-12));
  const auto j = to_json(r);
  CHECK(j["kind"] == "metrics");
  CHECK(j["dataset_group"] == "grp");
  CHECK(j["params"]["threshold"] == 1e-5);
  CHECK(j["params"]["eps2"] == 0.5);
  CHECK(j["zero_rows"] == 1);

  const auto only = analyze(f, {Metric::kSparsity});
  CHECK(only.sparsity.has_value());
  CHECK_FALSE(only.coding_length.has_value());
  CHECK(code_of([] { parse_metric_list("sparsity,entropy"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { parse_metric_list(""); }) == ErrorCode::kInvalidArgument);
}
