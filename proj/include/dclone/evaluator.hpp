#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dclone/store.hpp"
#include "dclone/trainer.hpp"

namespace dclone {

struct ClassMask {
  std::vector<int> allowed;  // sorted, unique

  ClassMask() = default;
  ClassMask(std::vector<int> classes, int num_classes);
  bool contains(int c) const;
  static ClassMask all(int num_classes);
};

// One entry per line: a wnid (resolved through `classes`) or a class index.
ClassMask read_class_mask(const std::filesystem::path& path, const std::vector<std::string>& classes);

// logits is [n][num_classes] row-major. A sample counts as top-k correct when
// fewer than k candidates outrank its true class; candidate j outranks y when
// z_j > z_y, or z_j == z_y and j < y. With a mask, only masked samples are
// allowed (others are a kMaskMismatch error); mask_logits additionally limits
// the candidates to masked classes.
std::map<int, double> topk_accuracy(std::span<const float> logits, int num_classes,
                                    std::span<const int> labels, std::span<const int> ks,
                                    const ClassMask* mask = nullptr, bool mask_logits = true);

struct EvalReport {
  std::map<int, double> accuracy;
  std::size_t num_samples = 0;
  std::string dataset;
  std::string model;
  std::optional<std::vector<int>> mask;
  bool mask_logits = true;
  int resolution = 0;
};

nlohmann::ordered_json to_json(const EvalReport& report);

struct EvalOptions {
  std::vector<int> ks{1, 5};
  const ClassMask* mask = nullptr;
  bool mask_logits = true;
  int resolution = 0;  // 0 = checkpoint eval size
  int batch_size = 64;
};

// Dataset labels are mapped onto the checkpoint's classes by name.
EvalReport evaluate_topk(Checkpoint& checkpoint, const DatasetView& dataset,
                         const EvalOptions& options = {});

struct FeatureMatrix {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> x;  // n*d row-major
  std::vector<std::int32_t> labels;
  bool normalized = false;
  nlohmann::json meta = nlohmann::json::object();

  const float* row(std::size_t i) const { return x.data() + i * d; }
  int num_classes() const;  // max label + 1
  void validate() const;
};

// "FEATMAT1", u32 LE header length, JSON header {n, d, dtype, normalized,
// meta}, n*d f32 LE, n i32 LE.
std::vector<std::uint8_t> encode_feature_matrix(const FeatureMatrix& m);
FeatureMatrix decode_feature_matrix(std::span<const std::uint8_t> bytes);
void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

struct ExtractOptions {
  int resolution = 224;
  int batch_size = 32;
  unsigned workers = 1;
};

// Undecodable images are skipped; their paths land in meta["skipped"].
FeatureMatrix extract_features(const Checkpoint& checkpoint, const DatasetView& dataset,
                               const ExtractOptions& options = {});

// Multinomial logistic regression.
struct ProbeModel {
  int d = 0;
  int k = 0;
  std::vector<double> w;  // k*d
  std::vector<double> b;  // k

  int predict(const float* x) const;
  std::vector<double> scores(const float* x) const;
};

// Objective: mean cross-entropy + lambda/2 * ||W||^2 (bias unpenalized).
struct LbfgsOptions {
  int max_iterations = 500;
  int history = 10;
  double gradient_tolerance = 1e-6;
};

ProbeModel fit_logreg_lbfgs(const FeatureMatrix& data, std::span<const std::size_t> rows,
                            int num_classes, double lambda, const LbfgsOptions& options = {});

struct SgdProbeOptions {
  double lr = 0.1;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 256;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

ProbeModel fit_logreg_sgd(const FeatureMatrix& data, std::span<const std::size_t> rows,
                          int num_classes, const SgdProbeOptions& options);

double probe_accuracy(const ProbeModel& model, const FeatureMatrix& data,
                      std::span<const std::size_t> rows = {});

// Stratified split; returns (train rows, validation rows).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const std::int32_t> labels, double val_fraction, std::uint64_t seed);

struct ProbeOptions {
  int n_trials = 25;
  double reg_min = 1e-6;
  double reg_max = 1e2;
  double lr_min = 1e-4;
  double lr_max = 1.0;
  double wd_min = 1e-6;
  double wd_max = 1e-2;
  // Above this many training rows the stochastic solver is used.
  std::size_t sgd_threshold = 100000;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  LbfgsOptions lbfgs;
  SgdProbeOptions sgd;
};

struct ProbeTrial {
  int index = 0;
  std::map<std::string, double> hparams;
  double val_accuracy = 0.0;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::string solver;
  std::map<std::string, double> best_hparams;
  double best_val_accuracy = 0.0;
  std::vector<ProbeTrial> trials;
};

nlohmann::ordered_json to_json(const ProbeResult& result);

ProbeResult linear_probe(const FeatureMatrix& train, const FeatureMatrix& test,
                         const ProbeOptions& options = {});

}  // namespace dclone
