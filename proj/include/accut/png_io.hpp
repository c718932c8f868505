#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace accut::png_io {

// Row-major grayscale buffers. Images are 16-bit, masks 8-bit.
struct Gray16 {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> pixels;
};

struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
};

void write_gray16(const std::filesystem::path& path, const Gray16& img);
void write_gray8(const std::filesystem::path& path, const Gray8& img);

Gray16 read_gray16(const std::filesystem::path& path);
Gray8 read_gray8(const std::filesystem::path& path);

}  // namespace accut::png_io
