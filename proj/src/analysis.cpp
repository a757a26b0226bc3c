#include "dclone/analysis.hpp"

#include <cmath>
#include <map>

#include <Eigen/Eigenvalues>

#include "dclone/error.hpp"
#include "dclone/io.hpp"
#include "dclone/kernels.hpp"

namespace dclone {

using nlohmann::ordered_json;

RowMatrix to_matrix(const FeatureMatrix& m) {
  RowMatrix x(static_cast<Eigen::Index>(m.n), static_cast<Eigen::Index>(m.d));
  for (std::size_t i = 0; i < m.x.size(); ++i) x.data()[i] = m.x[i];
  return x;
}

std::size_t l2_normalize_rows(RowMatrix& x) {
  std::size_t zero = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::span<double> row(x.row(i).data(), static_cast<std::size_t>(x.cols()));
    const double nrm = std::sqrt(kernels::dot(std::span<const double>(row), std::span<const double>(row)));
    if (nrm == 0.0) {
      ++zero;
      continue;
    }
    for (double& v : row) v /= nrm;
  }
  return zero;
}

double sparsity_ratio(const RowMatrix& x, double threshold) {
  if (x.size() == 0) fail(ErrorCode::kInvalidArgument, "sparsity of an empty matrix");
  std::size_t small = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < threshold) ++small;
  }
  return static_cast<double>(small) / static_cast<double>(x.size());
}

double intra_class_distance(const RowMatrix& x, std::span<const std::int32_t> labels) {
  require(labels.size() == static_cast<std::size_t>(x.rows()), "intra-class: label count mismatch");
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<Eigen::Index>(i));
  const auto d = static_cast<std::size_t>(x.cols());
  double total = 0.0;
  std::size_t classes = 0;
  for (const auto& [c, rows] : by_class) {
    if (rows.size() < 2) continue;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        sum += std::sqrt(kernels::l2_squared({x.row(rows[a]).data(), d}, {x.row(rows[b]).data(), d}));
        ++pairs;
      }
    }
    total += sum / static_cast<double>(pairs);
    ++classes;
  }
  if (classes == 0) fail(ErrorCode::kInvalidArgument, "intra-class distance needs a class with two samples");
  return total / static_cast<double>(classes);
}

double feature_redundancy(const RowMatrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (n < 2) fail(ErrorCode::kInvalidArgument, "redundancy needs at least two samples");
  require(d > 0, "redundancy of a zero-width matrix");
  // Centered columns, stored contiguously.
  std::vector<double> cols(n * d);
  std::vector<double> norms(d, 0.0);
  std::vector<char> constant(d, 1);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    mean /= static_cast<double>(n);
    const double first = x(0, static_cast<Eigen::Index>(j));
    double* c = cols.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != first) constant[j] = 0;
      c[i] = v - mean;
    }
    if (!constant[j]) norms[j] = std::sqrt(kernels::dot(std::span<const double>(c, n), std::span<const double>(c, n)));
  }
  double sum = static_cast<double>(d);
  for (std::size_t a = 0; a < d; ++a) {
    if (constant[a]) continue;
    for (std::size_t b = a + 1; b < d; ++b) {
      if (constant[b]) continue;
      const double cov = kernels::dot(std::span<const double>(cols.data() + a * n, n),
                             std::span<const double>(cols.data() + b * n, n));
      sum += 2.0 * std::min(1.0, std::abs(cov) / (norms[a] * norms[b]));
    }
  }
  return sum / (static_cast<double>(d) * static_cast<double>(d));
}

double coding_length(const RowMatrix& x, double eps2, std::optional<double> log_base) {
  require(eps2 > 0.0, "coding length: eps2 must be positive");
  if (!x.allFinite()) fail(ErrorCode::kInvalidArgument, "coding length of a non-finite matrix");
  const auto n = x.rows();
  const auto d = x.cols();
  if (n == 0 || d == 0) return 0.0;
  const double coef = static_cast<double>(d) / (static_cast<double>(n) * eps2);
  // X^T X and X X^T share their nonzero eigenvalues; use the smaller one.
  Eigen::MatrixXd gram = d <= n ? Eigen::MatrixXd(x.transpose() * x) : Eigen::MatrixXd(x * x.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(ErrorCode::kInvalidArgument, "coding length: eigen solver failed");
  double r = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    r += std::log1p(coef * std::max(0.0, es.eigenvalues()(i)));
  }
  r *= 0.5;
  if (log_base) r /= std::log(*log_base);
  return r;
}

Metric parse_metric(std::string_view name) {
  if (name == "sparsity") return Metric::kSparsity;
  if (name == "intra") return Metric::kIntra;
  if (name == "redundancy") return Metric::kRedundancy;
  if (name == "coding") return Metric::kCoding;
  fail(ErrorCode::kInvalidArgument,
       "unknown metric '" + std::string(name) + "' (expected sparsity, intra, redundancy, coding)");
}

std::set<Metric> parse_metric_list(std::string_view csv) {
  std::set<Metric> out;
  for (const auto& part : split(csv, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.insert(parse_metric(t));
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "no metrics requested");
  return out;
}

MetricsReport analyze(const FeatureMatrix& features, const std::set<Metric>& metrics,
                      const AnalysisParams& params) {
  features.validate();
  RowMatrix x = to_matrix(features);
  MetricsReport r;
  r.params = params;
  r.n = features.n;
  r.d = features.d;
  r.zero_rows = l2_normalize_rows(x);
  if (metrics.contains(Metric::kSparsity)) r.sparsity = sparsity_ratio(x, params.threshold);
  if (metrics.contains(Metric::kIntra)) r.intra_class_l2 = intra_class_distance(x, features.labels);
  if (metrics.contains(Metric::kRedundancy)) r.redundancy = feature_redundancy(x);
  if (metrics.contains(Metric::kCoding)) r.coding_length = coding_length(x, params.eps2, params.log_base);
  return r;
}

ordered_json to_json(const MetricsReport& r) {
  ordered_json j;
  j["kind"] = "metrics";
  j["dataset_group"] = r.params.dataset_group;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("sparsity", r.sparsity);
  put("intra_class_l2", r.intra_class_l2);
  put("redundancy", r.redundancy);
  put("coding_length", r.coding_length);
  j["n"] = r.n;
  j["d"] = r.d;
  j["zero_rows"] = r.zero_rows;
  j["params"] = {{"threshold", r.params.threshold},
                 {"eps2", r.params.eps2},
                 {"log_base", r.params.log_base ? ordered_json(*r.params.log_base) : ordered_json("e")}};
  return j;
}

}  // namespace dclone
