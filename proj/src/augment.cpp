#include <algorithm>
#include <array>
#include <cmath>

#include <spdlog/spdlog.h>

#include "dclone/error.hpp"
#include "dclone/trainer.hpp"

namespace dclone {

namespace {

constexpr float kLumaR = 0.299f;
constexpr float kLumaG = 0.587f;
constexpr float kLumaB = 0.114f;

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

void blend_with(Planar& img, const std::vector<float>& other_gray, float factor) {
  const std::size_t plane = img.plane_size();
  for (int c = 0; c < 3; ++c) {
    float* p = img.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      p[i] = clamp01(factor * p[i] + (1.0f - factor) * other_gray[i]);
    }
  }
}

std::vector<float> luma(const Planar& img) {
  const std::size_t plane = img.plane_size();
  std::vector<float> g(plane);
  const float* r = img.data.data();
  const float* gr = r + plane;
  const float* b = gr + plane;
  for (std::size_t i = 0; i < plane; ++i) g[i] = kLumaR * r[i] + kLumaG * gr[i] + kLumaB * b[i];
  return g;
}

void adjust_brightness(Planar& img, float f) {
  for (float& v : img.data) v = clamp01(v * f);
}

void adjust_contrast(Planar& img, float f) {
  const auto g = luma(img);
  double sum = 0.0;
  for (float v : g) sum += v;
  const auto mean = static_cast<float>(sum / static_cast<double>(std::max<std::size_t>(g.size(), 1)));
  for (float& v : img.data) v = clamp01(f * v + (1.0f - f) * mean);
}

void adjust_saturation(Planar& img, float f) { blend_with(img, luma(img), f); }

void adjust_hue(Planar& img, float shift) {
  const std::size_t plane = img.plane_size();
  float* rp = img.data.data();
  float* gp = rp + plane;
  float* bp = gp + plane;
  for (std::size_t i = 0; i < plane; ++i) {
    const float r = rp[i], g = gp[i], b = bp[i];
    const float mx = std::max({r, g, b});
    const float mn = std::min({r, g, b});
    const float d = mx - mn;
    float h = 0.0f;
    if (d > 0.0f) {
      if (mx == r) {
        h = std::fmod((g - b) / d, 6.0f);
      } else if (mx == g) {
        h = (b - r) / d + 2.0f;
      } else {
        h = (r - g) / d + 4.0f;
      }
      h /= 6.0f;
    }
    h += shift;
    h -= std::floor(h);
    const float s = mx > 0.0f ? d / mx : 0.0f;
    const float v = mx;
    const float h6 = h * 6.0f;
    const int sector = static_cast<int>(h6) % 6;
    const float frac = h6 - std::floor(h6);
    const float p = v * (1.0f - s);
    const float q = v * (1.0f - s * frac);
    const float t = v * (1.0f - s * (1.0f - frac));
    switch (sector) {
      case 0: rp[i] = v; gp[i] = t; bp[i] = p; break;
      case 1: rp[i] = q; gp[i] = v; bp[i] = p; break;
      case 2: rp[i] = p; gp[i] = v; bp[i] = t; break;
      case 3: rp[i] = p; gp[i] = q; bp[i] = v; break;
      case 4: rp[i] = t; gp[i] = p; bp[i] = v; break;
      default: rp[i] = v; gp[i] = p; bp[i] = q; break;
    }
  }
}

void to_grayscale(Planar& img) {
  const auto g = luma(img);
  const std::size_t plane = img.plane_size();
  for (int c = 0; c < 3; ++c) std::copy(g.begin(), g.end(), img.data.begin() + c * plane);
}

void hflip(Planar& img) {
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      float* row = &img.at(c, y, 0);
      std::reverse(row, row + img.width);
    }
  }
}

// Separable Gaussian, edge pixels replicated.
void gaussian_blur(Planar& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    total += v;
  }
  for (float& v : k) v = static_cast<float>(v / total);

  const int w = img.width;
  const int h = img.height;
  std::vector<float> tmp(img.plane_size());
  for (int c = 0; c < img.channels; ++c) {
    float* p = img.data.data() + c * img.plane_size();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * p[y * w + xx];
        }
        tmp[static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy) * w + x];
        }
        p[y * w + x] = acc;
      }
    }
  }
}

void solarize(Planar& img) {
  for (float& v : img.data) {
    if (v >= 0.5f) v = 1.0f - v;
  }
}

void color_jitter(Planar& img, const AugmentConfig& a, Rng& rng) {
  const auto b = static_cast<float>(rng.uniform(std::max(0.0, 1.0 - a.brightness), 1.0 + a.brightness));
  const auto c = static_cast<float>(rng.uniform(std::max(0.0, 1.0 - a.contrast), 1.0 + a.contrast));
  const auto s = static_cast<float>(rng.uniform(std::max(0.0, 1.0 - a.saturation), 1.0 + a.saturation));
  const auto hshift = static_cast<float>(rng.uniform(-a.hue, a.hue));
  std::array<int, 4> order{0, 1, 2, 3};
  rng.shuffle(std::span<int>(order));
  for (int op : order) {
    switch (op) {
      case 0: adjust_brightness(img, b); break;
      case 1: adjust_contrast(img, c); break;
      case 2: adjust_saturation(img, s); break;
      default: if (a.hue > 0.0) adjust_hue(img, hshift); break;
    }
  }
}

struct ViewRecipe {
  int size;
  double scale_min;
  double scale_max;
  double blur_p;
  double solarize_p;
};

Planar make_view(const Planar& image, const ViewRecipe& r, const AugmentConfig& a, Rng& rng) {
  const CropBox box = sample_resized_crop(image.width, image.height, r.scale_min, r.scale_max, rng);
  Planar v = resized_crop(image, box.x, box.y, box.w, box.h, r.size, r.size, Filter::kBicubic);
  if (rng.bernoulli(a.flip_p)) hflip(v);
  if (rng.bernoulli(a.jitter_p)) color_jitter(v, a, rng);
  if (rng.bernoulli(a.grayscale_p)) to_grayscale(v);
  if (rng.bernoulli(r.blur_p)) {
    const double sigma = rng.uniform(a.blur_sigma_min, a.blur_sigma_max) * r.size / 224.0;
    gaussian_blur(v, sigma);
  }
  if (r.solarize_p > 0.0 && rng.bernoulli(r.solarize_p)) solarize(v);
  normalize_in_place(v, a);
  return v;
}

}  // namespace

CropBox sample_resized_crop(int width, int height, double scale_min, double scale_max, Rng& rng,
                            double ratio_min, double ratio_max) {
  require(width > 0 && height > 0, "crop source must be non-empty");
  const double area = static_cast<double>(width) * height;
  const double log_lo = std::log(ratio_min);
  const double log_hi = std::log(ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(scale_min, scale_max);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (w > 0 && w <= width && h > 0 && h <= height) {
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(height - h + 1)));
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(width - w + 1)));
      return {x, y, w, h};
    }
  }
  const double in_ratio = static_cast<double>(width) / height;
  int w = width;
  int h = height;
  if (in_ratio < ratio_min) {
    h = static_cast<int>(std::lround(w / ratio_min));
  } else if (in_ratio > ratio_max) {
    w = static_cast<int>(std::lround(h * ratio_max));
  }
  return {(width - w) / 2, (height - h) / 2, w, h};
}

void normalize_in_place(Planar& image, const AugmentConfig& a) {
  require(image.channels == 3, "normalize expects 3 channels");
  const std::size_t plane = image.plane_size();
  for (int c = 0; c < 3; ++c) {
    const float m = a.mean[static_cast<std::size_t>(c)];
    const float inv = 1.0f / a.stddev[static_cast<std::size_t>(c)];
    float* p = image.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) * inv;
  }
}

std::vector<Planar> multicrop_views(const Planar& image, const MultiCropConfig& crops,
                                    const AugmentConfig& a, Rng& rng) {
  require(image.channels == 3, "multicrop expects an RGB image");
  const Planar* src = &image;
  Planar upscaled;
  const int short_side = std::min(image.width, image.height);
  if (short_side < crops.global_size) {
    spdlog::debug("upscaling {}x{} image to shorter side {} before cropping", image.width,
                  image.height, crops.global_size);
    upscaled = resize_shorter_side(image, crops.global_size, Filter::kBicubic);
    src = &upscaled;
  }
  std::vector<Planar> views;
  views.reserve(static_cast<std::size_t>(crops.num_global + crops.num_local));
  for (int g = 0; g < crops.num_global; ++g) {
    const ViewRecipe r{crops.global_size, a.global_scale_min, a.global_scale_max,
                       g == 0 ? a.blur_p_first_global : a.blur_p_other_global,
                       g == 1 ? a.solarize_p : 0.0};
    views.push_back(make_view(*src, r, a, rng));
  }
  for (int l = 0; l < crops.num_local; ++l) {
    const ViewRecipe r{crops.local_size, a.local_scale_min, a.local_scale_max, a.blur_p_local, 0.0};
    views.push_back(make_view(*src, r, a, rng));
  }
  return views;
}

Planar eval_view(const Planar& image, int size, const AugmentConfig& a) {
  Planar v = center_crop(resize_shorter_side(image, size, Filter::kBicubic), size);
  normalize_in_place(v, a);
  return v;
}

}  // namespace dclone
