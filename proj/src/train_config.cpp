#include <yaml-cpp/yaml.h>

#include <cmath>
#include <numbers>
#include <set>

#include "dclone/error.hpp"
#include "dclone/io.hpp"
#include "dclone/trainer.hpp"

namespace dclone {

using nlohmann::json;
using nlohmann::ordered_json;

void validate(const TrainConfig& c) {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kInvalidArgument, "train config: " + msg); };
  if (c.epochs <= 0) bad("epochs must be positive");
  if (c.batch_size <= 0) bad("batch_size must be positive");
  if (!(c.warmup_fraction > 0.0 && c.warmup_fraction < 1.0)) bad("warmup_fraction must be in (0, 1)");
  if (c.momentum < 0.0 || c.momentum >= 1.0) bad("momentum must be in [0, 1)");
  if (c.weight_decay < 0.0) bad("weight_decay must be non-negative");
  if (c.base_lr && !(*c.base_lr >= 0.0)) bad("base_lr must be non-negative");
  if (c.multicrop.num_global < 1) bad("multicrop.num_global must be >= 1");
  if (c.multicrop.num_local < 0) bad("multicrop.num_local must be >= 0");
  if (c.multicrop.global_size <= 0 || c.multicrop.local_size <= 0) bad("crop sizes must be positive");
  if (c.encoder.arch != "tiny_cnn") {
    fail(ErrorCode::kUnsupported,
         "encoder_arch '" + c.encoder.arch + "' is not built into this toolkit (available: tiny_cnn)");
  }
  if (c.encoder.widths.empty()) bad("encoder.widths must be non-empty");
  const auto& a = c.augment;
  if (a.global_scale_min <= 0 || a.global_scale_min > a.global_scale_max || a.global_scale_max > 1.0) {
    bad("augment global scale range invalid");
  }
  if (a.local_scale_min <= 0 || a.local_scale_min > a.local_scale_max || a.local_scale_max > 1.0) {
    bad("augment local scale range invalid");
  }
  if (a.hue < 0.0 || a.hue > 0.5) bad("augment.hue must be in [0, 0.5]");
  for (float s : a.stddev) {
    if (!(s > 0.0f)) bad("augment.stddev must be positive");
  }
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::kParse, "train config: " + where + " must be a mapping");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) fail(ErrorCode::kParse, "train config: unknown key '" + where + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& child : node) arr.push_back(yaml_to_json(child));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const std::string s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted
      if (s == "true" || s == "True") return true;
      if (s == "false" || s == "False") return false;
      if (s == "null" || s == "~") return nullptr;
      try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
      } catch (const std::exception&) {
      }
      try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
      } catch (const std::exception&) {
      }
      return s;
    }
  }
  return nullptr;
}

}  // namespace

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["momentum"] = c.momentum;
  j["base_lr"] = c.effective_base_lr();
  j["weight_decay"] = c.weight_decay;
  j["warmup_fraction"] = c.warmup_fraction;
  j["schedule"] = "linear_warmup_cosine";
  j["seed"] = c.seed;
  j["load_size"] = c.effective_load_size();
  j["eval_size"] = c.effective_eval_size();
  j["mixed_precision"] = c.mixed_precision;
  j["sync_batchnorm"] = c.sync_batchnorm;
  j["encoder"] = {{"arch", c.encoder.arch}, {"widths", c.encoder.widths}};
  j["multicrop"] = {{"num_global", c.multicrop.num_global},
                    {"num_local", c.multicrop.num_local},
                    {"global_size", c.multicrop.global_size},
                    {"local_size", c.multicrop.local_size}};
  const auto& a = c.augment;
  ordered_json aug;
  aug["global_scale_min"] = a.global_scale_min;
  aug["global_scale_max"] = a.global_scale_max;
  aug["local_scale_min"] = a.local_scale_min;
  aug["local_scale_max"] = a.local_scale_max;
  aug["flip_p"] = a.flip_p;
  aug["jitter_p"] = a.jitter_p;
  aug["brightness"] = a.brightness;
  aug["contrast"] = a.contrast;
  aug["saturation"] = a.saturation;
  aug["hue"] = a.hue;
  aug["grayscale_p"] = a.grayscale_p;
  aug["blur_p_first_global"] = a.blur_p_first_global;
  aug["blur_p_other_global"] = a.blur_p_other_global;
  aug["blur_p_local"] = a.blur_p_local;
  aug["blur_sigma_min"] = a.blur_sigma_min;
  aug["blur_sigma_max"] = a.blur_sigma_max;
  aug["solarize_p"] = a.solarize_p;
  aug["mean"] = a.mean;
  aug["stddev"] = a.stddev;
  j["augment"] = aug;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  check_keys(j,
             {"epochs", "batch_size", "momentum", "base_lr", "weight_decay", "warmup_fraction",
              "schedule", "seed", "load_size", "eval_size", "mixed_precision", "sync_batchnorm",
              "encoder", "encoder_arch", "multicrop", "augment"},
             "");
  TrainConfig c;
  try {
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "momentum", c.momentum);
    if (j.contains("base_lr") && !j.at("base_lr").is_null()) c.base_lr = j.at("base_lr").get<double>();
    read(j, "weight_decay", c.weight_decay);
    read(j, "warmup_fraction", c.warmup_fraction);
    if (j.contains("schedule") && j.at("schedule").get<std::string>() != "linear_warmup_cosine") {
      fail(ErrorCode::kUnsupported, "train config: only schedule 'linear_warmup_cosine' exists");
    }
    read(j, "seed", c.seed);
    read(j, "load_size", c.load_size);
    read(j, "eval_size", c.eval_size);
    read(j, "mixed_precision", c.mixed_precision);
    read(j, "sync_batchnorm", c.sync_batchnorm);
    read(j, "encoder_arch", c.encoder.arch);
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      check_keys(e, {"arch", "widths"}, "encoder.");
      read(e, "arch", c.encoder.arch);
      read(e, "widths", c.encoder.widths);
    }
    if (j.contains("multicrop")) {
      const auto& m = j.at("multicrop");
      check_keys(m, {"num_global", "num_local", "global_size", "local_size"}, "multicrop.");
      read(m, "num_global", c.multicrop.num_global);
      read(m, "num_local", c.multicrop.num_local);
      read(m, "global_size", c.multicrop.global_size);
      read(m, "local_size", c.multicrop.local_size);
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      check_keys(a,
                 {"global_scale_min", "global_scale_max", "local_scale_min", "local_scale_max",
                  "flip_p", "jitter_p", "brightness", "contrast", "saturation", "hue",
                  "grayscale_p", "blur_p_first_global", "blur_p_other_global", "blur_p_local",
                  "blur_sigma_min", "blur_sigma_max", "solarize_p", "mean", "stddev"},
                 "augment.");
      auto& o = c.augment;
      read(a, "global_scale_min", o.global_scale_min);
      read(a, "global_scale_max", o.global_scale_max);
      read(a, "local_scale_min", o.local_scale_min);
      read(a, "local_scale_max", o.local_scale_max);
      read(a, "flip_p", o.flip_p);
      read(a, "jitter_p", o.jitter_p);
      read(a, "brightness", o.brightness);
      read(a, "contrast", o.contrast);
      read(a, "saturation", o.saturation);
      read(a, "hue", o.hue);
      read(a, "grayscale_p", o.grayscale_p);
      read(a, "blur_p_first_global", o.blur_p_first_global);
      read(a, "blur_p_other_global", o.blur_p_other_global);
      read(a, "blur_p_local", o.blur_p_local);
      read(a, "blur_sigma_min", o.blur_sigma_min);
      read(a, "blur_sigma_max", o.blur_sigma_max);
      read(a, "solarize_p", o.solarize_p);
      read(a, "mean", o.mean);
      read(a, "stddev", o.stddev);
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kParse, std::string("train config: ") + ex.what());
  }
  validate(c);
  return c;
}

TrainConfig parse_train_config_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& ex) {
    fail(ErrorCode::kParse, std::string("train config: ") + ex.what());
  }
  if (root.IsNull()) return train_config_from_json(json::object());
  return train_config_from_json(yaml_to_json(root));
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config_yaml(read_file_text(path));
}

std::int64_t warmup_steps(std::int64_t total_steps, double warmup_fraction) {
  return static_cast<std::int64_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
}

double lr_at(std::int64_t step, std::int64_t total_steps, double base_lr, double warmup_fraction) {
  require(total_steps > 0, "lr_at: total_steps must be positive");
  require(step >= 0 && step <= total_steps, "lr_at: step outside [0, total_steps]");
  const std::int64_t w = warmup_steps(total_steps, warmup_fraction);
  require(w >= 1, "lr_at: warmup must span at least one step");
  if (step < w) return base_lr * static_cast<double>(step + 1) / static_cast<double>(w);
  if (total_steps == w) return 0.0;
  const double progress = static_cast<double>(step - w) / static_cast<double>(total_steps - w);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size) {
  require(batch_size > 0, "batch_size must be positive");
  return static_cast<std::int64_t>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                                   static_cast<std::size_t>(batch_size));
}

}  // namespace dclone
