#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "dclone/evaluator.hpp"

namespace dclone {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix to_matrix(const FeatureMatrix& m);

// Scales each nonzero row to unit norm; returns how many rows were all zero.
std::size_t l2_normalize_rows(RowMatrix& x);

// Fraction of entries with |x| < threshold.
double sparsity_ratio(const RowMatrix& x, double threshold = 1e-5);

// Mean pairwise l2 distance within each class (classes with < 2 rows are
// skipped), averaged over classes.
double intra_class_distance(const RowMatrix& x, std::span<const std::int32_t> labels);

// (1/d^2) * sum over all (i, j), diagonal included, of |pearson(col i, col j)|.
// Constant columns correlate 0 with everything but themselves.
double feature_redundancy(const RowMatrix& x);

// 0.5 * sum log(1 + d/(N*eps2) * lambda_i(X^T X)), in nats unless log_base is
// given.
double coding_length(const RowMatrix& x, double eps2 = 0.5, std::optional<double> log_base = {});

enum class Metric { kSparsity, kIntra, kRedundancy, kCoding };
Metric parse_metric(std::string_view name);
std::set<Metric> parse_metric_list(std::string_view csv);

struct AnalysisParams {
  double threshold = 1e-5;
  double eps2 = 0.5;
  std::optional<double> log_base;
  std::string dataset_group;
};

struct MetricsReport {
  std::optional<double> sparsity;
  std::optional<double> intra_class_l2;
  std::optional<double> redundancy;
  std::optional<double> coding_length;
  std::size_t zero_rows = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  AnalysisParams params;
};

// Every metric runs on l2-normalized rows.
MetricsReport analyze(const FeatureMatrix& features, const std::set<Metric>& metrics,
                      const AnalysisParams& params = {});
nlohmann::ordered_json to_json(const MetricsReport& report);

}  // namespace dclone
