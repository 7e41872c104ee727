// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <fmt/format.h>

#include "physfuse/error.hpp"

namespace physfuse {
namespace {

namespace fs = std::filesystem;

constexpr std::array<unsigned char, 8> kPngSignature = {0x89, 'P', 'N', 'G',
                                                        '\r', '\n', 0x1a, '\n'};

std::vector<unsigned char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png_path(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

// --- PGM -------------------------------------------------------------------

class PgmHeaderReader {
 public:
  PgmHeaderReader(const std::vector<unsigned char>& bytes, const fs::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw IoError(fmt::format("'{}': truncated PGM header", path_.string()));
    if (!std::isdigit(bytes_[pos_])) {
      throw FormatError(fmt::format("'{}': malformed PGM header", path_.string()));
    }
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(fmt::format("'{}': PGM dimension too large", path_.string()));
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size()) throw IoError(fmt::format("'{}': truncated PGM header", path_.string()));
    if (!std::isspace(bytes_[pos_])) {
      throw FormatError(fmt::format("'{}': malformed PGM header", path_.string()));
    }
    return pos_ + 1;
  }

  void skip(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

ImageTensor decode_pgm(const std::vector<unsigned char>& bytes, const fs::path& path) {
  PgmHeaderReader reader(bytes, path);
  reader.skip(2);
  const auto width = reader.next_int();
  const auto height = reader.next_int();
  const auto maxval = reader.next_int();
  if (maxval != 255) {
    throw FormatError(fmt::format("'{}': PGM maxval {} unsupported (need 255)", path.string(), maxval));
  }
  if (width == 0 || height == 0) throw FormatError(fmt::format("'{}': empty PGM", path.string()));
  const auto offset = reader.raster_offset();
  const auto n = width * height;
  if (bytes.size() < offset + n) {
    throw IoError(fmt::format("'{}': truncated PGM raster ({} of {} bytes)", path.string(),
                              bytes.size() - std::min(bytes.size(), offset), n));
  }
  ImageTensor img(height, width, 1);
  auto v = img.values();
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(bytes[offset + i]) / 255.0;
  return img;
}

void write_pgm(const std::vector<std::uint8_t>& bytes, std::size_t height, std::size_t width,
               const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot create '{}'", path.string()));
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

// --- PNG -------------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngMessage {
  std::string text;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
  if (m != nullptr) m->text = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

ImageTensor decode_png(const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError(fmt::format("cannot open '{}'", path.string()));

  PngMessage message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn,
                                           png_warning_fn);
  if (png == nullptr) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }

  // Everything the longjmp path must see lives above setjmp and is not
  // modified between setjmp and a potential longjmp except through memory.
  std::vector<png_byte> raster;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  volatile bool format_ok = true;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(fmt::format("'{}': {}", path.string(),
                              message.text.empty() ? "corrupt PNG" : message.text));
  }

  png_init_io(png, file.get());
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  const bool supported_color = color_type == PNG_COLOR_TYPE_GRAY ||
                               color_type == PNG_COLOR_TYPE_GRAY_ALPHA ||
                               color_type == PNG_COLOR_TYPE_RGB ||
                               color_type == PNG_COLOR_TYPE_RGB_ALPHA;
  if (bit_depth != 8 || !supported_color) {
    format_ok = false;
  } else {
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const auto rowbytes = png_get_rowbytes(png, info);
    raster.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = raster.data() + r * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  if (!format_ok) {
    throw FormatError(fmt::format("'{}': unsupported PNG (bit depth {}, colour type {})",
                                  path.string(), bit_depth, color_type));
  }

  const bool rgb = color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA;
  const std::size_t stride = rgb ? 3 : 1;
  const std::size_t h = height;
  const std::size_t w = width;
  ImageTensor out(h, w, rgb ? 3 : 1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < stride; ++c) {
        out.at(c, r, x) = static_cast<double>(rows[r][x * stride + c]) / 255.0;
      }
    }
  }
  return rgb ? luminance(out) : out;
}

void write_png(const std::vector<std::uint8_t>& bytes, std::size_t height, std::size_t width,
               const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(fmt::format("cannot write '{}': {}", path.string(), msg));
  }
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError(fmt::format("'{}' is not a readable file", path.string()));
  const auto bytes = read_all(path);
  if (bytes.size() >= kPngSignature.size() &&
      std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
    return decode_png(path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  if (bytes.size() < 2) throw IoError(fmt::format("'{}': truncated file", path.string()));
  throw FormatError(fmt::format("'{}': not a P5 PGM or PNG file", path.string()));
}

std::vector<std::uint8_t> quantize(const ImageTensor& img) {
  std::vector<std::uint8_t> bytes(img.size());
  auto v = img.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
      throw RangeError(fmt::format("pixel {} has value {} outside [0,1]", i, v[i]));
    }
    bytes[i] = static_cast<std::uint8_t>(std::lround(v[i] * 255.0));
  }
  return bytes;
}

void save_image(const ImageTensor& img, const fs::path& path) {
  if (img.channels() != 1) throw ShapeError("save_image: only single-channel images are written");
  const auto bytes = quantize(img);
  if (is_png_path(path)) {
    write_png(bytes, img.height(), img.width(), path);
  } else {
    write_pgm(bytes, img.height(), img.width(), path);
  }
}

}  // namespace physfuse
