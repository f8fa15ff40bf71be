#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "lnet/image_io.hpp"
#include "lnet/types.hpp"

namespace lnet::cli {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed display colour per lesion, canonical order.
inline constexpr std::array<Rgb, kNumLesions> kLesionColors{{{255, 64, 64},
                                                             {170, 40, 255},
                                                             {255, 230, 0},
                                                             {0, 230, 255},
                                                             {255, 140, 0},
                                                             {255, 0, 200},
                                                             {0, 255, 90},
                                                             {70, 110, 255}}};

/// Draws `text` in a 5-pixel-high bitmap font at (x, y), clipped to the raster.
/// Returns the x position after the last glyph.
int draw_text(io::Raster& raster, int x, int y, std::string_view text, const Rgb& color);

/// Image with masked pixels tinted by lesion colour, mask contours drawn in
/// full colour and a legend in the top-left corner. Output has the image's size.
/// `image` is (1,h,w,3), `masks` (1,h,w,m) binary.
io::Raster render_overlay(const Tensor& image, const Tensor& masks);

}  // namespace lnet::cli
