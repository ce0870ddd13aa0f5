#include "vaudit/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vaudit/error.hpp"

namespace vaudit {

namespace {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) {
    png_error(png, "truncated png stream");
  }
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_callback(png_structp) {}

struct ErrorSlot {
  char message[256] = {0};
};

[[noreturn]] void error_callback(png_structp png, png_const_charp message) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::strncpy(slot->message, message, sizeof(slot->message) - 1);
  png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

std::uint8_t to_u8(float v) {
  const double k = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(k < 0 ? 0 : (k > 255 ? 255 : k));
}

/// Writes rows produced by `row_at` with the given header parameters.
template <typename RowFn>
std::vector<std::uint8_t> write_png(std::size_t width, std::size_t height,
                                    int bit_depth, int color_type, RowFn row_at) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> row;
  ErrorSlot slot;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &slot,
                                            error_callback, warning_callback);
  if (!png) throw Error(ErrorCode::kIo, "png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::kIo, "png: cannot allocate info");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, std::string("png: ") + slot.message);
  }
  {
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < height; ++y) {
      row_at(y, row);
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

struct Decoded {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> samples;
};

Decoded decode_u8(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::kMalformedImage, "png: bad signature");
  }
  ErrorSlot slot;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &slot,
                                           error_callback, warning_callback);
  if (!png) throw Error(ErrorCode::kIo, "png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::kIo, "png: cannot allocate info");
  }
  ReadCursor cursor{bytes, 0};
  Decoded result;
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kMalformedImage, std::string("png: ") + slot.message);
  }
  {
    png_set_read_fn(png, &cursor, read_callback);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
      png_set_tRNS_to_alpha(png);
      png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    result.width = png_get_image_width(png, info);
    result.height = png_get_image_height(png, info);
    result.channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (result.channels != 1 && result.channels != 3) {
      bad_layout = true;
    } else {
      result.samples.resize(rowbytes * result.height);
      for (std::size_t y = 0; y < result.height; ++y) {
        png_read_row(png, result.samples.data() + y * rowbytes, nullptr);
      }
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (bad_layout) {
    throw Error(ErrorCode::kMalformedImage, "png: unsupported channel layout");
  }
  return result;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  const std::size_t c = img.channels();
  auto data = img.data();
  return write_png(img.width(), img.height(), 8,
                   c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                   [&](std::size_t y, std::vector<std::uint8_t>& row) {
                     const std::size_t n = img.width() * c;
                     row.resize(n);
                     for (std::size_t i = 0; i < n; ++i) row[i] = to_u8(data[y * n + i]);
                   });
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  Decoded d = decode_u8(bytes);
  std::vector<float> data(d.samples.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(d.samples[i]) / 255.0f;
  }
  try {
    return Image(d.width, d.height, d.channels, std::move(data));
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformedImage, e.what());
  }
}

void save_png(const Image& img, const std::filesystem::path& path) {
  write_file(path, encode_png(img));
}

Image load_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

std::vector<std::uint8_t> encode_mask_png(const BitRaster& bits) {
  return write_png(bits.width(), bits.height(), 1, PNG_COLOR_TYPE_GRAY,
                   [&](std::size_t y, std::vector<std::uint8_t>& row) {
                     row.assign((bits.width() + 7) / 8, 0);
                     for (std::size_t x = 0; x < bits.width(); ++x) {
                       if (bits.get(x, y)) row[x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
                     }
                   });
}

void save_mask_png(const BitRaster& bits, const std::filesystem::path& path) {
  write_file(path, encode_mask_png(bits));
}

Mask load_mask_png(const std::filesystem::path& path) {
  Decoded d = decode_u8(read_file(path));
  if (d.channels != 1) throw Error(ErrorCode::kMalformedImage, "mask png must be gray");
  std::vector<std::uint8_t> bits(d.width * d.height);
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = d.samples[i] >= 128 ? 1 : 0;
  return Mask(d.width, d.height, std::move(bits));
}

}  // namespace vaudit
