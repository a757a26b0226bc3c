#include <algorithm>
#include <chrono>
#include <cmath>

#include "dclone/generation.hpp"
#include "dclone/hash.hpp"
#include "dclone/io.hpp"
#include "dclone/random.hpp"

namespace dclone {

namespace {

constexpr std::string_view kMultiDifferent = "a photo of multiple different ";
constexpr std::string_view kMulti = "a photo of multiple ";
constexpr std::string_view kInside = " inside ";

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  auto to8 = [m](double u) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(u + m, 0.0, 1.0) * 255.0));
  };
  return {to8(r), to8(g), to8(b)};
}

bool inside_shape(int shape, double dx, double dy, double r) {
  switch (shape) {
    case 0:
      return dx * dx + dy * dy <= r * r;
    case 1:
      return std::abs(dx) <= r * 0.85 && std::abs(dy) <= r * 0.85;
    case 2:
      return std::abs(dx) + std::abs(dy) <= r * 1.2;
    default: {
      // Upward triangle inscribed in the circle of radius r.
      const double top = -r;
      const double bottom = r * 0.5;
      if (dy < top || dy > bottom) return false;
      const double half_width = (dy - top) / (bottom - top) * r * 0.866 * 1.15;
      return std::abs(dx) <= half_width;
    }
  }
}

}  // namespace

MockTokens mock_tokens(const std::string& prompt) {
  std::string_view p = prompt;
  MockTokens t;
  if (const auto pos = p.rfind(kInside); pos != std::string_view::npos) {
    t.background_token = std::string(p.substr(pos + kInside.size()));
    p = p.substr(0, pos);
  }
  if (p.starts_with(kMultiDifferent)) {
    p.remove_prefix(kMultiDifferent.size());
  } else if (p.starts_with(kMulti)) {
    p.remove_prefix(kMulti.size());
  }
  t.class_token = trim(p.substr(0, p.find(',')));
  return t;
}

MockStyle mock_style(const std::string& prompt) {
  const auto tokens = mock_tokens(prompt);
  const auto ch = sha256(tokens.class_token);
  const auto bh = sha256(tokens.background_token);
  MockStyle s;
  s.hue_degrees = ((ch[0] << 8) | ch[1]) / 65536.0 * 360.0;
  s.saturation = 0.55 + 0.45 * ch[2] / 255.0;
  s.value = 0.6 + 0.4 * ch[3] / 255.0;
  s.shape = ch[4] % 4;
  s.accent_hue_degrees = ((ch[5] << 8) | ch[6]) / 65536.0 * 360.0;
  s.foreground = hsv_to_rgb(s.hue_degrees, s.saturation, s.value);
  s.accent = hsv_to_rgb(s.accent_hue_degrees, 0.9, 0.95);
  s.background = {bh[0], bh[1], bh[2]};
  return s;
}

ImageResult mock_generate(const std::string& prompt, std::uint64_t seed, const GenParams& params) {
  const auto start = std::chrono::steady_clock::now();
  const MockStyle style = mock_style(prompt);
  Rng rng(seed ^ low64_le(sha256(prompt)));

  const int w = params.width;
  const int h = params.height;
  const double base_r = 0.25 * std::min(w, h);
  const double cx = w / 2.0 + rng.uniform(-0.08, 0.08) * w;
  const double cy = h / 2.0 + rng.uniform(-0.08, 0.08) * h;
  const double r = base_r * rng.uniform(0.88, 1.12);

  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const auto& c = inside_shape(style.shape, dx, dy, 0.45 * r) ? style.accent
                      : inside_shape(style.shape, dx, dy, r)       ? style.foreground
                                                                   : style.background;
      std::copy(c.begin(), c.end(), img.pixel(x, y));
    }
  }

  // Darker background speckles so that every seed yields a distinct image.
  const int speckles = 16;
  const int side = std::max(1, std::min(w, h) / 128);
  for (int i = 0; i < speckles; ++i) {
    const int sx = static_cast<int>(rng.below(static_cast<std::uint64_t>(w)));
    const int sy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h)));
    for (int y = sy; y < std::min(h, sy + side); ++y) {
      for (int x = sx; x < std::min(w, sx + side); ++x) {
        std::uint8_t* p = img.pixel(x, y);
        if (std::equal(style.background.begin(), style.background.end(), p)) {
          for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(p[c] * 7 / 8);
        }
      }
    }
  }

  ImageResult out;
  out.png = encode_png(img);
  out.image = std::move(img);
  out.meta.backend_id = "mock";
  out.meta.safety_flagged = false;
  out.meta.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace dclone
