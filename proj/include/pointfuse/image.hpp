#pragma once

#include <string>
#include <vector>

namespace pointfuse {

// Interleaved rgb in [0,1], row-major: pixels[(v*width + u)*3 + c].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  static RgbImage filled(int width, int height, double r, double g, double b);
  double at(int u, int v, int c) const {
    return pixels[(static_cast<size_t>(v) * width + u) * 3 + c];
  }
  double& at(int u, int v, int c) {
    return pixels[(static_cast<size_t>(v) * width + u) * 3 + c];
  }
};

// Binary PPM (P6), 8 bits per channel. Load clamps nothing: bytes map to
// [0,1] by /255; save rounds half up after clamping to [0,1].
RgbImage load_ppm(const std::string& path);
void save_ppm(const RgbImage& image, const std::string& path);

}  // namespace pointfuse
