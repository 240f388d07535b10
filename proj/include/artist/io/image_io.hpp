#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "artist/io/container.hpp"
#include "artist/latent_codec.hpp"

namespace artist::io {

inline std::uint8_t quantize(double v) {
  return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Interleaved 8-bit RGB rows of a [3, H, W] image.
inline std::vector<std::uint8_t> to_rgb8(const Image& image) {
  ARTIST_CHECK(image.rank() == 3 && image.dim(0) == 3, ErrorCode::shape_mismatch,
               "image must be [3, H, W], got " + shape_str(image.shape()));
  const std::size_t H = image.dim(1), W = image.dim(2);
  std::vector<std::uint8_t> rgb(3 * H * W);
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t q = 0; q < W; ++q)
      for (std::size_t c = 0; c < 3; ++c) rgb[(r * W + q) * 3 + c] = quantize(image[(c * H + r) * W + q]);
  return rgb;
}

inline Image from_rgb8(const std::uint8_t* rgb, std::size_t H, std::size_t W) {
  Image image({3, H, W});
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t q = 0; q < W; ++q)
      for (std::size_t c = 0; c < 3; ++c) image[(c * H + r) * W + q] = rgb[(r * W + q) * 3 + c] / 255.0;
  return image;
}

/// Binary PPM (P6, maxval 255). Also the canonical byte form used for image hashing.
inline std::string encode_ppm(const Image& image) {
  const auto rgb = to_rgb8(image);
  std::string out = "P6\n" + std::to_string(image.dim(2)) + " " + std::to_string(image.dim(1)) + "\n255\n";
  out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
  return out;
}

inline Image decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  ARTIST_CHECK(token() == "P6", ErrorCode::io, "not a binary PPM");
  std::size_t W = 0, H = 0, maxval = 0;
  try {
    W = std::stoul(token());
    H = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::io, "malformed PPM header");
  }
  ARTIST_CHECK(maxval == 255 && W > 0 && H > 0, ErrorCode::io, "only 8-bit PPM images are supported");
  ++pos;
  ARTIST_CHECK(bytes.size() >= pos + 3 * W * H, ErrorCode::io, "truncated PPM data");
  return from_rgb8(reinterpret_cast<const std::uint8_t*>(bytes.data() + pos), H, W);
}

inline std::string encode_png(const Image& image) {
  const auto rgb = to_rgb8(image);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(image.dim(2));
  img.height = png_uint_32(image.dim(1));
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  ARTIST_CHECK(png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr) != 0, ErrorCode::io,
               std::string("PNG encoding failed: ") + img.message);
  std::string out(size, '\0');
  ARTIST_CHECK(png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr) != 0, ErrorCode::io,
               std::string("PNG encoding failed: ") + img.message);
  out.resize(size);
  return out;
}

inline Image decode_png(const std::string& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  ARTIST_CHECK(png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) != 0, ErrorCode::io,
               std::string("cannot read PNG: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    throw Error(ErrorCode::io, std::string("cannot decode PNG: ") + img.message);
  }
  return from_rgb8(rgb.data(), img.height, img.width);
}

inline Image read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0)
    return decode_png(bytes);
  return decode_ppm(bytes);
}

inline void write_image(const std::filesystem::path& path, const Image& image) {
  const std::string ext = path.extension().string();
  write_file(path, ext == ".png" ? encode_png(image) : encode_ppm(image));
}

}  // namespace artist::io
