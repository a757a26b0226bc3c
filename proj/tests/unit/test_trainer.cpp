#include <doctest.h>

#include <cmath>

#include "dclone/catalog.hpp"
#include "dclone/error.hpp"
#include "dclone/generation.hpp"
#include "dclone/io.hpp"
#include "dclone/kernels.hpp"
#include "dclone/trainer.hpp"
#include "support.hpp"

using namespace dclone;
using dclone::testing::TempDir;
using dclone::testing::data_dir;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

nn::Tensor random_batch(Rng& rng, int n, int size) {
  nn::Tensor t(n, 3, size, size);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

DatasetView tiny_store(const fs::path& root, int per_class, std::uint64_t seed = 4) {
  const auto cat = load_catalog(data_dir() / "wordnet_meta.json", {"n02086910", "n03947888", "n07747607"}, "tiny");
  GenParams gp;
  gp.width = 48;
  gp.height = 40;
  const auto plan = build_plan(cat, {PromptTemplate::kName}, uniform_counts(cat, per_class), nullptr, seed, gp);
  MockBackend mock;
  auto store = DatasetStore::create(root, manifest_header_for(plan, &cat));
  run_plan(plan, mock, store, {});
  return DatasetView::from_store(root);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.base_lr = 0.05;
  c.encoder.widths = {4, 8};
  c.multicrop.global_size = 16;
  c.multicrop.local_size = 8;
  c.multicrop.num_local = 2;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("config defaults follow the training recipe") {
  const TrainConfig c;
  CHECK(c.epochs == 100);
  CHECK(c.batch_size == 256);
  CHECK(c.momentum == 0.9);
  CHECK(c.warmup_fraction == 0.1);
  CHECK(c.multicrop.num_global == 1);
  CHECK(c.multicrop.num_local == 8);
  CHECK(c.effective_base_lr() == doctest::Approx(0.1));
}

TEST_CASE("YAML config parsing is strict") {
  const auto c = parse_train_config_yaml(
      "epochs: 7\nbatch_size: 64\nbase_lr: 0.02\nmulticrop:\n  num_local: 2\n  local_size: 12\n"
      "augment:\n  hue: 0.0\nencoder:\n  widths: [8, 16]\n");
  CHECK(c.epochs == 7);
  CHECK(c.batch_size == 64);
  CHECK(*c.base_lr == 0.02);
  CHECK(c.multicrop.num_local == 2);
  CHECK(c.multicrop.local_size == 12);
  CHECK(c.augment.hue == 0.0);
  CHECK(c.encoder.widths == std::vector<int>{8, 16});
  CHECK(parse_train_config_yaml("").epochs == 100);
  CHECK(code_of([] { parse_train_config_yaml("epoch: 3\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse_train_config_yaml("augment:\n  colour: 1\n"); }) == ErrorCode::kParse);
  CHECK(code_of([] { parse_train_config_yaml("encoder_arch: resnet50\n"); }) == ErrorCode::kUnsupported);
  CHECK(code_of([] { parse_train_config_yaml("warmup_fraction: 0\n"); }) == ErrorCode::kInvalidArgument);
  // JSON is a YAML subset, and the JSON dump parses back to the same values.
  const auto again = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(again) == to_json(c));
}

TEST_CASE("lr schedule closed form") {
  const std::int64_t total = 1000;
  const double base = 0.4;
  const std::int64_t w = warmup_steps(total, 0.1);
  CHECK(w == 100);
  CHECK(lr_at(w - 1, total, base, 0.1) == base);
  CHECK(lr_at(0, total, base, 0.1) == doctest::Approx(base / 100));
  CHECK(std::abs(lr_at(total, total, base, 0.1)) <= 1e-12);
  CHECK(std::abs(lr_at(w + (total - w) / 2, total, base, 0.1) - 0.5 * base) <= 1e-12);
  double prev = 0.0;
  for (std::int64_t s = 0; s <= total; ++s) {
    const double lr = lr_at(s, total, base, 0.1);
    if (s < w) CHECK(lr > prev);
    if (s > w) CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS(lr_at(total + 1, total, base, 0.1));
}

TEST_CASE("equal-iteration rule: 10x data with 1/10 epochs keeps total steps") {
  for (std::size_t n : {1000u, 1280u, 997u}) {
    for (int batch : {32, 256}) {
      const auto small = steps_per_epoch(n, batch) * 100;
      const auto big = steps_per_epoch(10 * n, batch) * 10;
      CHECK(std::llabs(small - big) <= 100);
      if ((n % static_cast<std::size_t>(batch)) == 0) CHECK(small == big);
    }
  }
}

TEST_CASE("random resized crop boxes stay inside the image") {
  Rng rng(5);
  for (int t = 0; t < 2000; ++t) {
    const int w = 1 + static_cast<int>(rng.below(300));
    const int h = 1 + static_cast<int>(rng.below(300));
    const auto box = sample_resized_crop(w, h, 0.05, 0.4, rng);
    CHECK(box.w >= 1);
    CHECK(box.h >= 1);
    CHECK(box.x >= 0);
    CHECK(box.y >= 0);
    CHECK(box.x + box.w <= w);
    CHECK(box.y + box.h <= h);
  }
  // Successful draws respect the area range (up to rounding).
  int within = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto box = sample_resized_crop(200, 200, 0.4, 1.0, rng);
    const double frac = static_cast<double>(box.w) * box.h / 40000.0;
    if (frac >= 0.38 && frac <= 1.0) ++within;
  }
  CHECK(within == 1000);
}

TEST_CASE("multicrop yields 1 global and 8 local views of the configured sizes") {
  Rng rng(1);
  Planar img(3, 60, 80);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  const MultiCropConfig mc;
  const auto views = multicrop_views(img, mc, AugmentConfig{}, rng);
  REQUIRE(views.size() == 9);
  CHECK(views[0].width == mc.global_size);
  CHECK(views[0].height == mc.global_size);
  for (std::size_t i = 1; i < 9; ++i) {
    CHECK(views[i].width == mc.local_size);
    CHECK(views[i].height == mc.local_size);
    CHECK(views[i].channels == 3);
  }
  // Tiny sources are upscaled rather than rejected.
  Planar tiny(3, 5, 7);
  CHECK(multicrop_views(tiny, mc, AugmentConfig{}, rng).size() == 9);
  MultiCropConfig two;
  two.num_global = 2;
  two.num_local = 0;
  CHECK(multicrop_views(img, two, AugmentConfig{}, rng).size() == 2);
}

TEST_CASE("eval view geometry: shorter side then center crop") {
  AugmentConfig a;
  a.mean = {0, 0, 0};
  a.stddev = {1, 1, 1};
  Planar wide(3, 16, 32);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) wide.at(c, y, x) = static_cast<float>(x) / 31.0f;
    }
  }
  const auto v = eval_view(wide, 16, a);
  CHECK(v.width == 16);
  CHECK(v.height == 16);
  // Shorter side already 16: the crop is the central columns 8..23.
  for (int x = 0; x < 16; ++x) CHECK(v.at(0, 3, x) == doctest::Approx((x + 8) / 31.0f));
}

TEST_CASE("model gradients match finite differences") {
  EncoderConfig enc;
  enc.widths = {3, 4};
  Model model(enc, 3);
  model.init(17);
  Rng rng(2);
  const auto batch = random_batch(rng, 2, 6);
  const std::vector<int> labels{0, 2};
  auto params = model.params();
  nn::zero_grad(params);
  model.accumulate_gradients(batch, labels, 0.5);
  const double eps = 1e-2;
  nn::Tensor dummy;
  for (auto* p : params) {
    CAPTURE(p->name);
    for (std::size_t i = 0; i < p->size(); i += std::max<std::size_t>(1, p->size() / 7)) {
      const float saved = p->value[i];
      p->value[i] = saved + static_cast<float>(eps);
      const double up = nn::softmax_cross_entropy(model.logits(batch, true), labels, 0.5, dummy);
      p->value[i] = saved - static_cast<float>(eps);
      const double down = nn::softmax_cross_entropy(model.logits(batch, true), labels, 0.5, dummy);
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      CHECK(p->grad[i] == doctest::Approx(numeric).epsilon(2e-2).scale(1e-2));
    }
  }
}

TEST_CASE("train_step lowers the loss on a fixed batch") {
  EncoderConfig enc;
  enc.widths = {8, 16};
  Model model(enc, 4);
  model.init(1);
  Rng rng(3);
  const auto batch = random_batch(rng, 8, 8);
  const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
  const double first = train_step(model, batch, labels, {0.05, 0.9, 0.0});
  double last = first;
  for (int i = 0; i < 60; ++i) last = train_step(model, batch, labels, {0.05, 0.9, 0.0});
  CHECK(last < 0.5 * first);
}

TEST_CASE("training is deterministic and checkpoints round-trip exactly") {
  TempDir tmp("train");
  const auto data = tiny_store(tmp / "store", 4);
  const auto cfg = tiny_config();
  Checkpoint a = train(data, cfg);
  Checkpoint b = train(data, cfg);
  const auto pa = a.model.params();
  const auto pb = b.model.params();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  CHECK(a.history.total_steps == steps_per_epoch(12, 4) * 2);
  CHECK(a.history.step_lr.size() == static_cast<std::size_t>(a.history.total_steps));
  CHECK(a.history.epoch_loss.size() == 2);
  CHECK(a.classes == data.class_names());

  save_checkpoint(a, tmp / "ckpt");
  Checkpoint back = load_checkpoint(tmp / "ckpt");
  CHECK(back.classes == a.classes);
  CHECK(back.history.epoch_loss == a.history.epoch_loss);
  CHECK(to_json(back.config) == to_json(a.config));
  const auto sa = a.model.state();
  const auto sc = back.model.state();
  REQUIRE(sa.size() == sc.size());
  CHECK(sa.size() > pa.size());
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sa[i]->value == sc[i]->value);
  CHECK(load_checkpoint(tmp / "ckpt" / "checkpoint.bin").num_classes() == 3);

  auto bytes = read_file_bytes(tmp / "ckpt" / "checkpoint.bin");
  bytes[0] = 'X';
  write_file_atomic(tmp / "ckpt" / "checkpoint.bin", bytes);
  CHECK(code_of([&] { load_checkpoint(tmp / "ckpt"); }) == ErrorCode::kParse);
}

TEST_CASE("a diverging run stops with a NaN-loss error") {
  TempDir tmp("nan");
  const auto data = tiny_store(tmp / "store", 2);
  auto cfg = tiny_config();
  cfg.base_lr = 1e30;
  cfg.epochs = 3;
  CHECK(code_of([&] { train(data, cfg); }) == ErrorCode::kNanLoss);
}

TEST_CASE("batch norm: batch statistics in training, running estimates otherwise") {
  Rng rng(12);
  nn::Tensor x(4, 2, 3, 3);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = static_cast<float>(rng.normal(i % 18 < 9 ? 5.0 : -2.0, 3.0));
  }
  nn::BatchNorm2d bn("bn", 2);
  const auto y = bn.forward(x, true);
  for (int c = 0; c < 2; ++c) {
    double sum = 0, sq = 0, raw = 0;
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 9; ++k) {
        sum += y.sample(i)[c * 9 + k];
        sq += y.sample(i)[c * 9 + k] * y.sample(i)[c * 9 + k];
        raw += x.sample(i)[c * 9 + k];
      }
    }
    CHECK(sum / 36 == doctest::Approx(0.0).scale(1.0).epsilon(1e-5));
    CHECK(sq / 36 == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(bn.buffers()[0]->value[c] == doctest::Approx(0.1 * raw / 36).epsilon(1e-5));
  }
  nn::BatchNorm2d fresh("bn", 2);
  const auto z = fresh.forward(x, false);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(z.data[i] == doctest::Approx(x.data[i] / std::sqrt(1.0 + 1e-5)).epsilon(1e-6));
  }
}

TEST_CASE("every kernel variant trains to the same model within float tolerance") {
  const auto isas = kernels::supported_isas();
  const auto original = kernels::active().isa;
  EncoderConfig enc;
  enc.widths = {6, 12};
  Rng rng(4);
  const auto batch = random_batch(rng, 8, 10);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
  std::vector<std::vector<float>> weights;
  std::vector<double> losses;
  for (auto isa : isas) {
    kernels::set_active(isa);
    Model m(enc, 3);
    m.init(5);
    double loss = 0;
    for (int i = 0; i < 20; ++i) loss = train_step(m, batch, labels, {0.05, 0.9, 1e-4});
    losses.push_back(loss);
    std::vector<float> flat;
    for (auto* p : m.state()) flat.insert(flat.end(), p->value.begin(), p->value.end());
    weights.push_back(std::move(flat));
  }
  kernels::set_active(original);
  for (std::size_t v = 1; v < isas.size(); ++v) {
    CAPTURE(kernels::isa_name(isas[v]));
    CHECK(losses[v] == doctest::Approx(losses[0]).epsilon(1e-3));
    double worst = 0;
    for (std::size_t i = 0; i < weights[0].size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(weights[v][i] - weights[0][i])));
    }
    CHECK(worst < 1e-3);
  }
}
