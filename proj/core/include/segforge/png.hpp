#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace segforge {

/// 8-bit interleaved raster as stored on disk.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray), 3 (RGB)
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Reads an 8-bit PNG. Palette images are expanded to RGB and alpha is dropped,
/// so the result has 1 or 3 channels. Throws DataError naming the path for
/// unreadable files and for bit depths other than 8.
Image8 read_png(const std::filesystem::path& path);

/// Writes an 8-bit gray or RGB PNG. The byte stream depends only on the pixels.
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace segforge
