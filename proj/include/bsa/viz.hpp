#pragma once

#include <array>
#include <string>
#include <vector>

#include "bsa/volume.hpp"

namespace bsa {

// Diverging blue-white-red map over [-range, +range] years, clamped.
// -range -> (0,0,255), 0 -> (255,255,255), +range -> (255,0,0).
std::array<uint8_t, 3> diverging_color(double value, double range);

struct RgbImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;  // rgb rows, top to bottom

  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0) {}
  uint8_t* at(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
  const uint8_t* at(int x, int y) const { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
};

void write_ppm(const RgbImage& image, const std::string& path);

// One slice of the label volume colored by per-structure values (years);
// background black. Axis is 0/1/2 for x/y/z.
RgbImage render_structure_slice(const LabelVolume& labels, const std::vector<double>& values,
                                int axis, int index, double range = 15.0);

}  // namespace bsa
