#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace dclone {

// 8-bit interleaved RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* pixel(int x, int y) {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

enum class ImageFormat { kPng, kJpeg };

ImageFormat parse_image_format(std::string_view name);
std::string_view image_format_extension(ImageFormat format);

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);
std::vector<std::uint8_t> encode_image(const Image& image, ImageFormat format, int quality = 95);

// PNG or JPEG by signature; any channel layout is converted to RGB.
Image decode_image(std::span<const std::uint8_t> bytes);
Image load_image(const std::filesystem::path& path);
bool is_png(std::span<const std::uint8_t> bytes);

// Planar float image, channel-major [c][y][x], values nominally in [0, 1].
struct Planar {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Planar() = default;
  Planar(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
};

Planar to_planar(const Image& image);
Image to_image(const Planar& planar);

enum class Filter { kBilinear, kBicubic };

// Separable resampling with support widened when downscaling (antialiased),
// the same scheme PIL uses for its BILINEAR and BICUBIC filters.
Planar resize(const Planar& src, int out_width, int out_height, Filter filter);

// Resamples the box [x0, x0+w) x [y0, y0+h) of src to out size.
Planar resized_crop(const Planar& src, int x0, int y0, int w, int h, int out_width,
                    int out_height, Filter filter);

Planar resize_shorter_side(const Planar& src, int size, Filter filter);
Planar center_crop(const Planar& src, int size);

}  // namespace dclone
