#include "bsa/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace bsa {

std::array<uint8_t, 3> diverging_color(double value, double range) {
  const double t = std::clamp(value / range, -1.0, 1.0);
  auto channel = [](double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  };
  if (t <= 0.0) {
    // blue to white
    const double w = 1.0 + t;
    return {channel(255.0 * w), channel(255.0 * w), 255};
  }
  // white to red
  const double w = 1.0 - t;
  return {255, channel(255.0 * w), channel(255.0 * w)};
}

void write_ppm(const RgbImage& image, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size()));
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

RgbImage render_structure_slice(const LabelVolume& labels, const std::vector<double>& values,
                                int axis, int index, double range) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("render_structure_slice: bad axis");
  const auto dims = labels.dims();
  if (index < 0 || index >= dims[axis])
    throw std::invalid_argument("render_structure_slice: slice index out of range");
  if (static_cast<int>(values.size()) != labels.num_structures)
    throw std::invalid_argument("render_structure_slice: value count != structures");

  // the two in-plane axes, in (width, height) order
  const int ax_w = axis == 0 ? 1 : 0;
  const int ax_h = axis == 2 ? 1 : 2;

  RgbImage image(dims[ax_w], dims[ax_h]);
  for (int h = 0; h < dims[ax_h]; ++h)
    for (int w = 0; w < dims[ax_w]; ++w) {
      int coord[3];
      coord[axis] = index;
      coord[ax_w] = w;
      coord[ax_h] = h;
      const uint16_t label = labels.at(coord[0], coord[1], coord[2]);
      if (label == 0) continue;  // background stays black
      const auto rgb = diverging_color(values[label - 1], range);
      uint8_t* px = image.at(w, h);
      px[0] = rgb[0];
      px[1] = rgb[1];
      px[2] = rgb[2];
    }
  return image;
}

}  // namespace bsa
