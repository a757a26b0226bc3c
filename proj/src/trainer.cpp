#include "dclone/trainer.hpp"

#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "dclone/error.hpp"

namespace dclone {

Model::Model(const EncoderConfig& encoder, int num_classes)
    : encoder_config_(encoder),
      num_classes_(num_classes),
      encoder_(encoder.widths),
      head_("head", encoder.widths.empty() ? 0 : encoder.widths.back(), num_classes) {
  if (encoder.arch != "tiny_cnn") {
    fail(ErrorCode::kUnsupported, "encoder_arch '" + encoder.arch + "' is not available");
  }
  require(num_classes >= 1, "model needs at least one class");
}

void Model::init(std::uint64_t seed) {
  Rng rng(mix64(seed ^ 0x6d6f64656cULL));
  encoder_.init(rng);
  head_.init(rng, 0.01f);
}

double Model::accumulate_gradients(const nn::Tensor& batch, std::span<const int> labels,
                                   double scale) {
  const nn::Tensor feats = encoder_.forward(batch, true);
  const nn::Tensor logits = head_.forward(feats);
  nn::Tensor grad;
  const double loss = nn::softmax_cross_entropy(logits, labels, scale, grad);
  const nn::Tensor grad_feats = head_.backward(grad);
  encoder_.backward(grad_feats);
  return loss;
}

std::vector<nn::Param*> Model::state() {
  auto s = params();
  for (auto* b : buffers()) s.push_back(b);
  return s;
}

std::vector<nn::Param*> Model::params() {
  auto p = encoder_.params();
  for (auto* q : head_.params()) p.push_back(q);
  return p;
}

nn::Tensor stack(const std::vector<const Planar*>& images) {
  require(!images.empty(), "stack: no images");
  const Planar& first = *images.front();
  nn::Tensor t(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Planar& p = *images[i];
    require(p.channels == first.channels && p.height == first.height && p.width == first.width,
            "stack: images differ in size");
    std::copy(p.data.begin(), p.data.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

std::vector<Planar> preload_images(const DatasetView& dataset, int short_side) {
  std::vector<Planar> out;
  out.reserve(dataset.size());
  for (const auto& item : dataset.items()) {
    Planar p = to_planar(load_image(item.path));
    if (short_side > 0 && std::min(p.width, p.height) != short_side) {
      p = resize_shorter_side(p, short_side, Filter::kBilinear);
    }
    out.push_back(std::move(p));
  }
  return out;
}

double train_step(Model& model, const nn::Tensor& batch, std::span<const int> labels,
                  const nn::SgdOptions& options) {
  auto params = model.params();
  nn::zero_grad(params);
  const double loss = model.accumulate_gradients(batch, labels, 1.0 / static_cast<double>(batch.n));
  if (!std::isfinite(loss)) fail(ErrorCode::kNanLoss, "loss is not finite");
  nn::sgd_step(params, options);
  return loss;
}

namespace {

std::uint64_t view_seed(std::uint64_t seed, int epoch, std::size_t index) {
  return mix64(mix64(seed) ^ ((static_cast<std::uint64_t>(epoch) << 32) + index));
}

}  // namespace

Checkpoint train(const DatasetView& dataset, const TrainConfig& config,
                 const TrainCallbacks& callbacks) {
  validate(config);
  if (dataset.empty()) fail(ErrorCode::kInvalidArgument, "training set is empty");
  const int num_classes = static_cast<int>(dataset.num_classes());
  {
    std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
    for (const auto& item : dataset.items()) ++seen[static_cast<std::size_t>(item.label)];
    for (int c = 0; c < num_classes; ++c) {
      if (seen[static_cast<std::size_t>(c)] == 0) {
        spdlog::warn("class {} has no training images", dataset.class_names()[static_cast<std::size_t>(c)]);
      }
    }
  }
  if (config.mixed_precision) spdlog::info("mixed_precision has no effect on the CPU trainer");
  if (config.sync_batchnorm) spdlog::info("sync_batchnorm has no effect: the encoder has no batch norm");

  const std::vector<Planar> images = preload_images(dataset, config.effective_load_size());

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.classes = dataset.class_names();
  ckpt.model = Model(config.encoder, num_classes);
  ckpt.model.init(config.seed);
  Model& model = ckpt.model;
  auto params = model.params();

  const std::size_t n = images.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::int64_t spe = steps_per_epoch(n, config.batch_size);
  const std::int64_t total = spe * config.epochs;
  const double base_lr = config.effective_base_lr();
  const int num_views = config.multicrop.num_global + config.multicrop.num_local;
  TrainHistory& hist = ckpt.history;
  hist.total_steps = total;

  std::vector<std::size_t> order(n);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(mix64(config.seed ^ mix64(0x5348554646ULL + static_cast<std::uint64_t>(epoch))));
    order_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t end = std::min(n, start + batch);
      const std::size_t b = end - start;
      std::vector<std::vector<Planar>> views(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        Rng rng(view_seed(config.seed, epoch, idx));
        views[i] = multicrop_views(images[idx], config.multicrop, config.augment, rng);
      }
      std::vector<const Planar*> globals;
      std::vector<const Planar*> locals;
      std::vector<int> global_labels;
      std::vector<int> local_labels;
      for (int v = 0; v < num_views; ++v) {
        for (std::size_t i = 0; i < b; ++i) {
          const int label = dataset.items()[order[start + i]].label;
          if (v < config.multicrop.num_global) {
            globals.push_back(&views[i][static_cast<std::size_t>(v)]);
            global_labels.push_back(label);
          } else {
            locals.push_back(&views[i][static_cast<std::size_t>(v)]);
            local_labels.push_back(label);
          }
        }
      }
      const double scale = 1.0 / static_cast<double>(b * static_cast<std::size_t>(num_views));
      nn::zero_grad(params);
      double loss = model.accumulate_gradients(stack(globals), global_labels, scale);
      if (!locals.empty()) loss += model.accumulate_gradients(stack(locals), local_labels, scale);
      if (!std::isfinite(loss)) {
        fail(ErrorCode::kNanLoss, "loss became non-finite at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(step));
      }
      const double lr = lr_at(step, total, base_lr, config.warmup_fraction);
      nn::sgd_step(params, {lr, config.momentum, config.weight_decay});
      hist.step_lr.push_back(lr);
      if (start == 0) hist.epoch_lr.push_back(lr);
      epoch_loss += loss * static_cast<double>(b);
    }
    epoch_loss /= static_cast<double>(n);
    hist.epoch_loss.push_back(epoch_loss);
    spdlog::info("epoch {}/{} loss {:.4f} lr {:.5f}", epoch + 1, config.epochs, epoch_loss,
                 hist.epoch_lr.back());
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, epoch_loss, hist.epoch_lr.back());
  }
  return ckpt;
}

}  // namespace dclone
