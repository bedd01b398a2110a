#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mtvssl {

// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;
};

// PNG codec backed by libpng. Reading converts to the requested channel count.
Image8 read_png(const std::filesystem::path& path, std::size_t channels);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace mtvssl
