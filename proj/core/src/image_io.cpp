#include "stereo/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <png.h>

namespace stereo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

uint8_t to_byte(float v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0f), 0l, 255l));
}

}  // namespace

void write_png(const std::string& path, const Image& im) {
  if (im.channels != 1 && im.channels != 3)
    throw IoError("write_png: expected 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(im.width),
               static_cast<png_uint_32>(im.height), 8,
               im.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(im.width) * im.channels);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c)
        row[static_cast<size_t>(x) * im.channels + c] = to_byte(im.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: unsupported channel count in " + path);
  }
  Image im(channels, height, width);
  std::vector<uint8_t> row(static_cast<size_t>(width) * channels);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        im.at(c, y, x) = static_cast<float>(row[static_cast<size_t>(x) * channels + c]) / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

void write_pfm(const std::string& path, const Image& disparity) {
  if (disparity.channels != 1) throw IoError("write_pfm: expected a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "Pf\n" << disparity.width << " " << disparity.height << "\n" << "-1.0\n";
  // Rows bottom-up per the format.
  for (int y = disparity.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(&disparity.pix[static_cast<size_t>(y) * disparity.width]),
              static_cast<std::streamsize>(sizeof(float) * disparity.width));
  if (!out) throw IoError("pfm write failed: " + path);
}

Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string tag;
  in >> tag;
  if (tag != "Pf") throw IoError("read_pfm: not a grayscale PFM: " + path);
  int width = 0, height = 0;
  double scale = 0.0;
  in >> width >> height >> scale;
  if (!in || width <= 0 || height <= 0 || scale == 0.0)
    throw IoError("read_pfm: bad header: " + path);
  in.get();  // single whitespace after the scale line
  Image im(1, height, width);
  for (int y = height - 1; y >= 0; --y)
    in.read(reinterpret_cast<char*>(&im.pix[static_cast<size_t>(y) * width]),
            static_cast<std::streamsize>(sizeof(float) * width));
  if (!in) throw IoError("read_pfm: truncated payload: " + path);
  if (scale > 0) {
    // Big-endian payload; swap.
    for (auto& v : im.pix) {
      uint32_t u;
      std::memcpy(&u, &v, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&v, &u, 4);
    }
  }
  return im;
}

Image colorize_disparity(const Image& disparity, float vmin, float vmax) {
  if (disparity.channels != 1) throw IoError("colorize_disparity: expected one channel");
  const float span = std::max(vmax - vmin, 1e-6f);
  Image out(3, disparity.height, disparity.width);
  for (int y = 0; y < disparity.height; ++y)
    for (int x = 0; x < disparity.width; ++x) {
      const float t = std::clamp((disparity.at(0, y, x) - vmin) / span, 0.0f, 1.0f);
      // Compact jet-style ramp: blue -> cyan -> yellow -> red.
      out.at(0, y, x) = std::clamp(1.5f - std::abs(4.0f * t - 3.0f), 0.0f, 1.0f);
      out.at(1, y, x) = std::clamp(1.5f - std::abs(4.0f * t - 2.0f), 0.0f, 1.0f);
      out.at(2, y, x) = std::clamp(1.5f - std::abs(4.0f * t - 1.0f), 0.0f, 1.0f);
    }
  return out;
}

}  // namespace stereo
