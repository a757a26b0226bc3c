#include "dclone/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <string>

#include "dclone/error.hpp"
#include "dclone/io.hpp"

namespace dclone {

ImageFormat parse_image_format(std::string_view name) {
  if (name == "png") return ImageFormat::kPng;
  if (name == "jpeg" || name == "jpg") return ImageFormat::kJpeg;
  fail(ErrorCode::kInvalidArgument, "unknown image format '" + std::string(name) + "'");
}

std::string_view image_format_extension(ImageFormat format) {
  return format == ImageFormat::kPng ? ".png" : ".jpg";
}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

namespace {

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    fail(ErrorCode::kParse, std::string("PNG decode failed: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    fail(ErrorCode::kParse, "PNG decode failed: " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  Image out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorCode::kParse, std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixel(0, static_cast<int>(cinfo.output_scanline));
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.rgb.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    fail(ErrorCode::kIo, std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, std::clamp(quality, 1, 100), TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(image.pixel(0, static_cast<int>(cinfo.next_scanline)));
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

std::vector<std::uint8_t> encode_image(const Image& image, ImageFormat format, int quality) {
  return format == ImageFormat::kPng ? encode_png(image) : encode_jpeg(image, quality);
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  fail(ErrorCode::kParse, "unrecognized image encoding");
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_image(bytes);
}

Planar to_planar(const Image& image) {
  Planar out(3, image.height, image.width);
  const std::size_t plane = out.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.data[c * plane + i] = static_cast<float>(image.rgb[i * 3 + c]) / 255.0f;
    }
  }
  return out;
}

Image to_image(const Planar& planar) {
  Image out(planar.width, planar.height);
  const std::size_t plane = planar.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = planar.channels == 1 ? planar.data[i] : planar.data[c * plane + i];
      out.rgb[i * 3 + c] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
  }
  return out;
}

namespace {

double bilinear_kernel(double x) {
  x = std::abs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

double bicubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  std::vector<int> first;
  std::vector<int> count;
  std::vector<double> weights;  // out_size * max_taps
  int max_taps = 0;
};

Taps compute_taps(int in_size, double box0, double box_len, int out_size, Filter filter) {
  const double support_base = filter == Filter::kBicubic ? 2.0 : 1.0;
  const double scale = box_len / out_size;
  const double filterscale = std::max(scale, 1.0);
  const double support = support_base * filterscale;
  Taps taps;
  taps.max_taps = static_cast<int>(std::ceil(support)) * 2 + 1;
  taps.first.resize(out_size);
  taps.count.resize(out_size);
  taps.weights.assign(static_cast<std::size_t>(out_size) * taps.max_taps, 0.0);
  for (int o = 0; o < out_size; ++o) {
    const double center = box0 + (o + 0.5) * scale;
    int lo = static_cast<int>(center - support + 0.5);
    lo = std::max(lo, 0);
    int hi = std::min(static_cast<int>(center + support + 0.5), in_size);
    hi = std::min(hi, lo + taps.max_taps);
    double total = 0.0;
    double* w = taps.weights.data() + static_cast<std::size_t>(o) * taps.max_taps;
    for (int x = lo; x < hi; ++x) {
      const double arg = (x - center + 0.5) / filterscale;
      const double v = filter == Filter::kBicubic ? bicubic_kernel(arg) : bilinear_kernel(arg);
      w[x - lo] = v;
      total += v;
    }
    if (total != 0.0) {
      for (int x = lo; x < hi; ++x) w[x - lo] /= total;
    } else if (hi > lo) {
      w[0] = 1.0;
    } else {
      lo = std::clamp(static_cast<int>(center), 0, in_size - 1);
      hi = lo + 1;
      w[0] = 1.0;
    }
    taps.first[o] = lo;
    taps.count[o] = hi - lo;
  }
  return taps;
}

}  // namespace

Planar resized_crop(const Planar& src, int x0, int y0, int w, int h, int out_width,
                    int out_height, Filter filter) {
  require(out_width > 0 && out_height > 0, "resize target must be positive");
  require(w > 0 && h > 0, "crop box must be non-empty");
  const Taps tx = compute_taps(src.width, x0, w, out_width, filter);
  const Taps ty = compute_taps(src.height, y0, h, out_height, filter);

  // Horizontal pass over only the source rows the vertical pass touches.
  int row_lo = src.height;
  int row_hi = 0;
  for (int o = 0; o < out_height; ++o) {
    row_lo = std::min(row_lo, ty.first[o]);
    row_hi = std::max(row_hi, ty.first[o] + ty.count[o]);
  }
  const int rows = std::max(row_hi - row_lo, 0);
  std::vector<double> tmp(static_cast<std::size_t>(src.channels) * rows * out_width);
  for (int c = 0; c < src.channels; ++c) {
    for (int r = 0; r < rows; ++r) {
      const float* in = &src.data[(static_cast<std::size_t>(c) * src.height + row_lo + r) * src.width];
      double* out = &tmp[(static_cast<std::size_t>(c) * rows + r) * out_width];
      for (int o = 0; o < out_width; ++o) {
        const double* wt = tx.weights.data() + static_cast<std::size_t>(o) * tx.max_taps;
        double acc = 0.0;
        for (int t = 0; t < tx.count[o]; ++t) acc += wt[t] * in[tx.first[o] + t];
        out[o] = acc;
      }
    }
  }
  Planar dst(src.channels, out_height, out_width);
  for (int c = 0; c < src.channels; ++c) {
    for (int o = 0; o < out_height; ++o) {
      const double* wt = ty.weights.data() + static_cast<std::size_t>(o) * ty.max_taps;
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (int t = 0; t < ty.count[o]; ++t) {
          acc += wt[t] * tmp[(static_cast<std::size_t>(c) * rows + ty.first[o] - row_lo + t) * out_width + x];
        }
        dst.at(c, o, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return dst;
}

Planar resize(const Planar& src, int out_width, int out_height, Filter filter) {
  if (out_width == src.width && out_height == src.height) return src;
  return resized_crop(src, 0, 0, src.width, src.height, out_width, out_height, filter);
}

Planar resize_shorter_side(const Planar& src, int size, Filter filter) {
  require(size > 0, "resize size must be positive");
  int w = src.width;
  int h = src.height;
  if (w <= h) {
    h = static_cast<int>(std::lround(static_cast<double>(size) * h / w));
    w = size;
  } else {
    w = static_cast<int>(std::lround(static_cast<double>(size) * w / h));
    h = size;
  }
  return resize(src, w, h, filter);
}

Planar center_crop(const Planar& src, int size) {
  require(src.width >= size && src.height >= size, "center crop larger than image");
  const int x0 = static_cast<int>(std::lround((src.width - size) / 2.0));
  const int y0 = static_cast<int>(std::lround((src.height - size) / 2.0));
  Planar out(src.channels, size, size);
  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < size; ++y) {
      std::copy_n(&src.data[(static_cast<std::size_t>(c) * src.height + y0 + y) * src.width + x0],
                  size, &out.data[(static_cast<std::size_t>(c) * size + y) * size]);
    }
  }
  return out;
}

}  // namespace dclone
