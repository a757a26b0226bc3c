#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dclone/image.hpp"
#include "dclone/nn.hpp"
#include "dclone/random.hpp"
#include "dclone/store.hpp"

namespace dclone {

struct MultiCropConfig {
  int num_global = 1;
  int num_local = 8;
  int global_size = 32;
  int local_size = 16;
};

// DINO augmentation recipe. Blur sigmas are given for 224-pixel crops and
// scaled to the actual crop size.
struct AugmentConfig {
  double global_scale_min = 0.4;
  double global_scale_max = 1.0;
  double local_scale_min = 0.05;
  double local_scale_max = 0.4;
  double flip_p = 0.5;
  double jitter_p = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.2;
  double hue = 0.1;
  double grayscale_p = 0.2;
  double blur_p_first_global = 1.0;
  double blur_p_other_global = 0.1;
  double blur_p_local = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double solarize_p = 0.2;  // second global crop only
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
};

struct EncoderConfig {
  std::string arch = "tiny_cnn";
  std::vector<int> widths{16, 32, 64};
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double momentum = 0.9;
  // Defaults to 0.1 * batch_size / 256 when unset.
  std::optional<double> base_lr;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.10;
  MultiCropConfig multicrop;
  AugmentConfig augment;
  EncoderConfig encoder;
  std::uint64_t seed = 0;
  // Images are decoded once and kept with this shorter side; 0 picks
  // 5/4 of the global crop size.
  int load_size = 0;
  // Resolution used when scoring whole images (resize shorter side, center crop); 0 = global_size.
  int eval_size = 0;
  bool mixed_precision = false;
  bool sync_batchnorm = false;

  double effective_base_lr() const { return base_lr.value_or(0.1 * batch_size / 256.0); }
  int effective_load_size() const {
    return load_size > 0 ? load_size : (multicrop.global_size * 5 + 3) / 4;
  }
  int effective_eval_size() const { return eval_size > 0 ? eval_size : multicrop.global_size; }
};

void validate(const TrainConfig& config);
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
// YAML or JSON; unknown keys are rejected.
TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config_yaml(const std::string& text);

// Number of warmup steps, ceil(warmup_fraction * total_steps).
std::int64_t warmup_steps(std::int64_t total_steps, double warmup_fraction);

// Linear warmup to base_lr over the first W steps, then cosine decay to 0 at
// total_steps: step < W -> base*(step+1)/W, else
// 0.5*base*(1 + cos(pi*(step-W)/(total-W))).
double lr_at(std::int64_t step, std::int64_t total_steps, double base_lr, double warmup_fraction);

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size);

struct CropBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const CropBox&) const = default;
};

// torchvision RandomResizedCrop box sampling (10 tries, then a center crop
// with the aspect ratio clamped into range).
CropBox sample_resized_crop(int width, int height, double scale_min, double scale_max, Rng& rng,
                            double ratio_min = 3.0 / 4.0, double ratio_max = 4.0 / 3.0);

// Global crops first, then local crops; each normalized with mean/stddev.
std::vector<Planar> multicrop_views(const Planar& image, const MultiCropConfig& crops,
                                    const AugmentConfig& augment, Rng& rng);

// Deterministic preprocessing for scoring: shorter side to `size` (bicubic),
// center crop, normalize.
Planar eval_view(const Planar& image, int size, const AugmentConfig& augment);
void normalize_in_place(Planar& image, const AugmentConfig& augment);

// Encoder + linear classifier.
class Model {
 public:
  Model() = default;
  Model(const EncoderConfig& encoder, int num_classes);

  void init(std::uint64_t seed);
  // Inference mode unless training is set (batch statistics in batch norm).
  nn::Tensor features(const nn::Tensor& batch, bool training = false) {
    return encoder_.forward(batch, training);
  }
  nn::Tensor logits(const nn::Tensor& batch, bool training = false) {
    return head_.forward(encoder_.forward(batch, training));
  }

  // Forward + backward of mean-CE scaled by `scale`; accumulates gradients.
  double accumulate_gradients(const nn::Tensor& batch, std::span<const int> labels, double scale);

  std::vector<nn::Param*> params();
  // Non-trained state (batch norm running statistics).
  std::vector<nn::Param*> buffers() { return encoder_.buffers(); }
  // params() then buffers(); everything a checkpoint stores.
  std::vector<nn::Param*> state();
  int num_classes() const { return num_classes_; }
  int feature_dim() const { return encoder_.feature_dim(); }
  const EncoderConfig& encoder_config() const { return encoder_config_; }

 private:
  EncoderConfig encoder_config_;
  int num_classes_ = 0;
  nn::ConvEncoder encoder_;
  nn::Linear head_;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;  // lr of each epoch's first step
  std::vector<double> step_lr;
  std::int64_t total_steps = 0;
};

struct Checkpoint {
  TrainConfig config;
  std::vector<std::string> classes;
  std::string catalog_name;
  TrainHistory history;
  Model model;

  int num_classes() const { return model.num_classes(); }
};

struct TrainCallbacks {
  std::function<void(int epoch, double loss, double lr)> on_epoch;
};

// Stacks equally sized planar images into an [n][3][h][w] batch.
nn::Tensor stack(const std::vector<const Planar*>& images);

// Loads and caches every dataset image at config.effective_load_size().
std::vector<Planar> preload_images(const DatasetView& dataset, int short_side);

Checkpoint train(const DatasetView& dataset, const TrainConfig& config,
                 const TrainCallbacks& callbacks = {});

// One SGD step on a fixed batch; returns the loss before the update.
double train_step(Model& model, const nn::Tensor& batch, std::span<const int> labels,
                  const nn::SgdOptions& options);

// Writes `checkpoint.bin` (weights) and `checkpoint.json` (metadata) to dir.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
// Accepts the directory or either of its two files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dclone
