#include "lnet/cli/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lnet/errors.hpp"

namespace lnet::cli {

namespace {

struct Glyph {
  char ch;
  std::array<std::string_view, 5> rows;
};

// Only the characters of the lesion vocabulary are needed.
constexpr std::array<Glyph, 16> kFont{{
    {'M', {"X...X", "XX.XX", "X.X.X", "X...X", "X...X"}},
    {'A', {".X.", "X.X", "XXX", "X.X", "X.X"}},
    {'i', {"X", ".", "X", "X", "X"}},
    {'H', {"X.X", "X.X", "XXX", "X.X", "X.X"}},
    {'E', {"XXX", "X..", "XX.", "X..", "XXX"}},
    {'a', {"...", ".XX", "X.X", "X.X", ".XX"}},
    {'x', {"...", "...", "X.X", ".X.", "X.X"}},
    {'C', {".XX", "X..", "X..", "X..", ".XX"}},
    {'W', {"X...X", "X...X", "X.X.X", "XX.XX", "X...X"}},
    {'S', {".XX", "X..", ".X.", "..X", "XX."}},
    {'v', {"...", "...", "X.X", "X.X", ".X."}},
    {'V', {"X.X", "X.X", "X.X", "X.X", ".X."}},
    {'p', {"...", "XX.", "X.X", "XX.", "X.."}},
    {'N', {"X..X", "XX.X", "X.XX", "X..X", "X..X"}},
    {'F', {"XXX", "X..", "XX.", "X..", "X.."}},
    {'P', {"XX.", "X.X", "XX.", "X..", "X.."}},
}};

void put(io::Raster& r, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= r.width || y >= r.height) return;
  const std::size_t at = (static_cast<std::size_t>(y) * r.width + x) * 3;
  for (int k = 0; k < 3; ++k) r.samples[at + k] = c[k];
}

}  // namespace

int draw_text(io::Raster& raster, int x, int y, std::string_view text, const Rgb& color) {
  for (char ch : text) {
    const auto it = std::find_if(kFont.begin(), kFont.end(), [ch](const Glyph& g) { return g.ch == ch; });
    if (it == kFont.end()) {
      x += 4;
      continue;
    }
    const int width = static_cast<int>(it->rows[0].size());
    for (int row = 0; row < 5; ++row) {
      for (int col = 0; col < width; ++col) {
        if (it->rows[row][col] == 'X') put(raster, x + col, y + row, color);
      }
    }
    x += width + 1;
  }
  return x;
}

io::Raster render_overlay(const Tensor& image, const Tensor& masks) {
  if (image.n() != 1 || image.c() != 3) throw ShapeError("overlay needs a single RGB image");
  if (masks.n() != 1 || masks.h() != image.h() || masks.w() != image.w()) {
    throw ShapeError("overlay masks do not match the image");
  }
  io::Raster out = io::to_raster(image, 8);
  const int h = image.h(), w = image.w(), m = std::min(masks.c(), kNumLesions);
  auto on = [&](int y, int x, int j) { return masks(0, y, x, j) >= 0.5; };

  for (int j = 0; j < m; ++j) {
    const Rgb& c = kLesionColors[j];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!on(y, x, j)) continue;
        const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 || !on(y - 1, x, j) || !on(y + 1, x, j) ||
                          !on(y, x - 1, j) || !on(y, x + 1, j);
        const std::size_t at = (static_cast<std::size_t>(y) * w + x) * 3;
        for (int k = 0; k < 3; ++k) {
          const double tinted = 0.5 * out.samples[at + k] + 0.5 * c[k];
          out.samples[at + k] = edge ? c[k] : static_cast<std::uint16_t>(std::lround(tinted));
        }
      }
    }
  }

  // Legend: one swatch and name per lesion on a dark panel.
  constexpr int kRow = 7;
  const int panel_h = 2 + m * kRow, panel_w = 32;
  for (int y = 0; y < panel_h; ++y) {
    for (int x = 0; x < panel_w; ++x) put(out, x, y, {0, 0, 0});
  }
  for (int j = 0; j < m; ++j) {
    const int y0 = 2 + j * kRow;
    for (int dy = 0; dy < 5; ++dy) {
      for (int dx = 0; dx < 5; ++dx) put(out, 2 + dx, y0 + dy, kLesionColors[j]);
    }
    draw_text(out, 10, y0, lesion_name(j), {255, 255, 255});
  }
  return out;
}

}  // namespace lnet::cli
