#include "accut/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "accut/common.hpp"

namespace accut::png_io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void write_gray(const std::filesystem::path& path, int height, int width,
                int bit_depth, const std::vector<png_bytep>& rows) {
  auto f = open_file(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // buffers are host little-endian
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
  }
};

}  // namespace

void write_gray16(const std::filesystem::path& path, const Gray16& img) {
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(
        const_cast<std::uint16_t*>(img.pixels.data() + std::size_t(y) * img.width));
  }
  write_gray(path, img.height, img.width, 16, rows);
}

void write_gray8(const std::filesystem::path& path, const Gray8& img) {
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width);
  }
  write_gray(path, img.height, img.width, 8, rows);
}

namespace {

void begin_read(PngReader& r, std::FILE* f, const std::filesystem::path& path) {
  png_byte header[8];
  if (std::fread(header, 1, 8, f) != 8 || png_sig_cmp(header, 0, 8)) {
    throw DataError("not a png file: " + path.string());
  }
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path.string());
  png_init_io(r.png, f);
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
}

}  // namespace

Gray16 read_gray16(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  PngReader r;
  begin_read(r, f.get(), path);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path.string());
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 16) {
    throw DataError("expected 16-bit grayscale png: " + path.string());
  }
  png_set_swap(r.png);
  Gray16 img;
  img.height = int(png_get_image_height(r.png, r.info));
  img.width = int(png_get_image_width(r.png, r.info));
  img.pixels.resize(std::size_t(img.height) * img.width);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width);
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

Gray8 read_gray8(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  PngReader r;
  begin_read(r, f.get(), path);
  if (setjmp(png_jmpbuf(r.png))) throw DataError("png read failed: " + path.string());
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
      png_get_bit_depth(r.png, r.info) != 8) {
    throw DataError("expected 8-bit grayscale png: " + path.string());
  }
  Gray8 img;
  img.height = int(png_get_image_height(r.png, r.info));
  img.width = int(png_get_image_width(r.png, r.info));
  img.pixels.resize(std::size_t(img.height) * img.width);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + std::size_t(y) * img.width;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

}  // namespace accut::png_io
