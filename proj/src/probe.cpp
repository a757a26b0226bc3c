#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "dclone/error.hpp"
#include "dclone/evaluator.hpp"
#include "dclone/random.hpp"

namespace dclone {

using nlohmann::ordered_json;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int ProbeModel::predict(const float* x) const {
  const auto s = scores(x);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

std::vector<double> ProbeModel::scores(const float* x) const {
  std::vector<double> s(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const double* wc = w.data() + static_cast<std::size_t>(c) * d;
    double acc = b[static_cast<std::size_t>(c)];
    for (int j = 0; j < d; ++j) acc += wc[j] * x[j];
    s[static_cast<std::size_t>(c)] = acc;
  }
  return s;
}

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

RowMatrixD gather(const FeatureMatrix& data, std::span<const std::size_t> rows) {
  RowMatrixD x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(data.d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const float* src = data.row(rows[i]);
    for (std::size_t j = 0; j < data.d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = src[j];
  }
  return x;
}

// Softmax probabilities minus one-hot targets, in place; returns summed CE.
double softmax_residual(RowMatrixD& z, std::span<const int> y) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double m = row.maxCoeff();
    row.array() -= m;
    row = row.array().exp().matrix();
    const double s = row.sum();
    const int yi = y[static_cast<std::size_t>(i)];
    loss -= std::log(row(yi) / s);
    row /= s;
    row(yi) -= 1.0;
  }
  return loss;
}

struct LogregObjective {
  const RowMatrixD& x;
  std::vector<int> y;
  int k;
  double lambda;

  // theta = [W row-major (k x d), b (k)]
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    const auto d = x.cols();
    const auto m = static_cast<double>(x.rows());
    Eigen::Map<const RowMatrixD> w(theta.data(), k, d);
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + k * d, k);
    RowMatrixD z = x * w.transpose();
    z.rowwise() += b.transpose();
    const double loss = softmax_residual(z, y) / m;
    grad.resize(theta.size());
    Eigen::Map<RowMatrixD> gw(grad.data(), k, d);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + k * d, k);
    gw = (z.transpose() * x) / m + lambda * w;
    gb = z.colwise().sum().transpose() / m;
    return loss + 0.5 * lambda * w.squaredNorm();
  }
};

ProbeModel to_model(const Eigen::VectorXd& theta, int d, int k) {
  ProbeModel pm;
  pm.d = d;
  pm.k = k;
  pm.w.assign(theta.data(), theta.data() + static_cast<std::size_t>(k) * d);
  pm.b.assign(theta.data() + static_cast<std::size_t>(k) * d, theta.data() + theta.size());
  return pm;
}

std::vector<int> labels_of(const FeatureMatrix& data, std::span<const std::size_t> rows, int k) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto r : rows) {
    const int l = data.labels[r];
    require(l >= 0 && l < k, "probe: label outside the class range");
    y.push_back(l);
  }
  return y;
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace

ProbeModel fit_logreg_lbfgs(const FeatureMatrix& data, std::span<const std::size_t> rows_in,
                            int num_classes, double lambda, const LbfgsOptions& o) {
  const auto rows = rows_in.empty() ? all_rows(data.n) : std::vector<std::size_t>(rows_in.begin(), rows_in.end());
  require(!rows.empty(), "probe: no training rows");
  require(lambda >= 0.0, "probe: regularization must be non-negative");
  const RowMatrixD x = gather(data, rows);
  const LogregObjective f{x, labels_of(data, rows, num_classes), num_classes, lambda};
  const auto dim = static_cast<Eigen::Index>(num_classes) * (static_cast<Eigen::Index>(data.d) + 1);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd g;
  double fx = f(theta, g);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mem;  // (s, y)
  Eigen::VectorXd g_new;
  for (int it = 0; it < o.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < o.gradient_tolerance) break;
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
      const auto& [s, y] = mem[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    double gamma = 1.0;
    if (!mem.empty()) gamma = mem.back().first.dot(mem.back().second) / mem.back().second.squaredNorm();
    Eigen::VectorXd dir = gamma * q;
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const auto& [s, y] = mem[i];
      const double beta = y.dot(dir) / y.dot(s);
      dir += s * (alpha[i] - beta);
    }
    dir = -dir;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      mem.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double t = mem.empty() ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-12)) : 1.0;
    Eigen::VectorXd trial;
    double f_new = fx;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      trial = theta + t * dir;
      f_new = f(trial, g_new);
      if (f_new <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    Eigen::VectorXd s = trial - theta;
    Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    theta = std::move(trial);
    g = g_new;
    const double decrease = fx - f_new;
    fx = f_new;
    if (sy > 1e-12) {
      mem.emplace_back(std::move(s), std::move(yv));
      if (static_cast<int>(mem.size()) > o.history) mem.pop_front();
    }
    if (decrease <= 1e-13 * std::max(1.0, std::abs(fx))) break;
  }
  return to_model(theta, static_cast<int>(data.d), num_classes);
}

ProbeModel fit_logreg_sgd(const FeatureMatrix& data, std::span<const std::size_t> rows_in,
                          int num_classes, const SgdProbeOptions& o) {
  auto rows = rows_in.empty() ? all_rows(data.n) : std::vector<std::size_t>(rows_in.begin(), rows_in.end());
  require(!rows.empty(), "probe: no training rows");
  const auto d = static_cast<Eigen::Index>(data.d);
  const Eigen::Index k = num_classes;
  RowMatrixD w = RowMatrixD::Zero(k, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
  RowMatrixD vw = RowMatrixD::Zero(k, d);
  Eigen::VectorXd vb = Eigen::VectorXd::Zero(k);
  Rng rng(mix64(o.seed ^ 0x736764ULL));
  const auto bs = static_cast<std::size_t>(std::max(1, o.batch_size));
  const std::size_t spe = (rows.size() + bs - 1) / bs;
  const auto total = static_cast<double>(spe * static_cast<std::size_t>(std::max(1, o.epochs)));
  std::size_t step = 0;
  for (int e = 0; e < o.epochs; ++e) {
    rng.shuffle(std::span<std::size_t>(rows));
    for (std::size_t start = 0; start < rows.size(); start += bs, ++step) {
      const std::span<const std::size_t> batch(rows.data() + start, std::min(bs, rows.size() - start));
      const RowMatrixD x = gather(data, batch);
      const auto y = labels_of(data, batch, num_classes);
      RowMatrixD z = x * w.transpose();
      z.rowwise() += b.transpose();
      softmax_residual(z, y);
      const double m = static_cast<double>(batch.size());
      const RowMatrixD gw = (z.transpose() * x) / m + o.weight_decay * w;
      const Eigen::VectorXd gb = z.colwise().sum().transpose() / m;
      const double lr = 0.5 * o.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total));
      vw = o.momentum * vw + gw;
      vb = o.momentum * vb + gb;
      w -= lr * vw;
      b -= lr * vb;
    }
  }
  Eigen::VectorXd theta(k * d + k);
  std::copy(w.data(), w.data() + k * d, theta.data());
  std::copy(b.data(), b.data() + k, theta.data() + k * d);
  return to_model(theta, static_cast<int>(d), num_classes);
}

double probe_accuracy(const ProbeModel& model, const FeatureMatrix& data, std::span<const std::size_t> rows) {
  const auto idx = rows.empty() ? all_rows(data.n) : std::vector<std::size_t>(rows.begin(), rows.end());
  if (idx.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto r : idx) {
    if (model.predict(data.row(r)) == data.labels[r]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(idx.size());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const std::int32_t> labels, double val_fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> tr;
  std::vector<std::size_t> va;
  for (auto& [c, idx] : by_class) {
    Rng rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(c) + 1)));
    rng.shuffle(std::span<std::size_t>(idx));
    auto nv = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) nv = std::clamp<std::size_t>(nv, 1, idx.size() - 1);
    else nv = 0;
    va.insert(va.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
    tr.insert(tr.end(), idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
  }
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  return {tr, va};
}

ordered_json to_json(const ProbeResult& r) {
  ordered_json j;
  j["kind"] = "probe";
  j["accuracy"] = r.accuracy;
  j["solver"] = r.solver;
  j["best_hparams"] = r.best_hparams;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["n_trials"] = r.trials.size();
  ordered_json trials = ordered_json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"index", t.index}, {"hparams", t.hparams}, {"val_accuracy", t.val_accuracy}});
  }
  j["trials"] = trials;
  return j;
}

ProbeResult linear_probe(const FeatureMatrix& train, const FeatureMatrix& test, const ProbeOptions& o) {
  train.validate();
  test.validate();
  if (train.d != test.d) fail(ErrorCode::kInvalidArgument, "probe: train and test feature widths differ");
  if (train.n == 0) fail(ErrorCode::kInvalidArgument, "probe: empty training set");
  const std::set<int> distinct(train.labels.begin(), train.labels.end());
  if (distinct.size() < 2) fail(ErrorCode::kSingleClass, "probe: training set has a single class");
  if (o.n_trials < 1) fail(ErrorCode::kInvalidArgument, "probe: n_trials must be >= 1");
  if (o.n_trials < 25) spdlog::warn("probe: {} tuning trials (protocol uses at least 25)", o.n_trials);
  const int k = std::max(train.num_classes(), test.num_classes());

  ProbeResult r;
  r.solver = train.n > o.sgd_threshold ? "sgd" : "lbfgs";
  auto [tr, va] = stratified_split(train.labels, o.val_fraction, o.seed);
  if (va.empty()) {
    spdlog::warn("probe: too few samples for a validation split; tuning on the training rows");
    va = tr;
  }

  auto fit = [&](const std::map<std::string, double>& hp, std::span<const std::size_t> rows) {
    if (r.solver == "lbfgs") return fit_logreg_lbfgs(train, rows, k, hp.at("regularization"), o.lbfgs);
    SgdProbeOptions so = o.sgd;
    so.lr = hp.at("lr");
    so.weight_decay = hp.at("weight_decay");
    so.seed = o.seed;
    return fit_logreg_sgd(train, rows, k, so);
  };

  int best = -1;
  for (int t = 0; t < o.n_trials; ++t) {
    Rng rng(mix64(o.seed ^ mix64(0x7472ULL + static_cast<std::uint64_t>(t))));
    ProbeTrial trial;
    trial.index = t;
    if (r.solver == "lbfgs") {
      trial.hparams["regularization"] = log_uniform(rng, o.reg_min, o.reg_max);
    } else {
      trial.hparams["lr"] = log_uniform(rng, o.lr_min, o.lr_max);
      trial.hparams["weight_decay"] = log_uniform(rng, o.wd_min, o.wd_max);
    }
    trial.val_accuracy = probe_accuracy(fit(trial.hparams, tr), train, va);
    spdlog::debug("probe trial {} val_accuracy {:.4f}", t, trial.val_accuracy);
    if (best < 0 || trial.val_accuracy > r.trials[static_cast<std::size_t>(best)].val_accuracy) best = t;
    r.trials.push_back(std::move(trial));
  }
  r.best_hparams = r.trials[static_cast<std::size_t>(best)].hparams;
  r.best_val_accuracy = r.trials[static_cast<std::size_t>(best)].val_accuracy;
  const auto model = fit(r.best_hparams, all_rows(train.n));
  r.accuracy = probe_accuracy(model, test);
  return r;
}

}  // namespace dclone
