#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lnet/tensor.hpp"

namespace lnet::io {

/// Interleaved 8- or 16-bit raster as stored in a PNG file.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

void write_png(const std::filesystem::path& path, const Raster& raster);
/// Reads gray/RGB PNGs; palette and alpha variants are converted. Throws IoError.
Raster read_png(const std::filesystem::path& path);

/// (1,h,w,c) tensor in [0,1] -> raster with rounding to the given depth.
Raster to_raster(const Tensor& t, int bit_depth = 8);
/// Raster -> (1,h,w,c) tensor normalized by the maximum sample value.
Tensor to_tensor(const Raster& r);

}  // namespace lnet::io
