#pragma once

#include <string>
#include <vector>

#include "pointfuse/depth.hpp"
#include "pointfuse/geometry.hpp"
#include "pointfuse/image.hpp"

namespace pointfuse {

// One point per kept pixel: position in the sensor frame, the pixel's color,
// and the source pixel coordinates.
struct PseudoPoint {
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0, g = 0.0, b = 0.0;
  double u = 0.0, v = 0.0;
};

struct PseudoPointCloud {
  std::vector<PseudoPoint> points;
  int source_width = 0;
  int source_height = 0;
};

// Unprojects every stride-th pixel of the dense depth map (row-major walk:
// u fastest). xyz = unproject_pixel at the integer pixel center convention
// used by projection; rgb copied from the image.
PseudoPointCloud build_pseudo_cloud(const RgbImage& image, const DenseDepthMap& dense,
                                    const Calibration& calib, int stride = 1);

// Binary cloud container: header (magic "PFPC", u32 point count, u32 fields
// per point) then count*fields little-endian f32, row-major.
// Raw clouds use 3 fields (xyz) or 4 (xyz + intensity); pseudo clouds use 8.
void save_cloud(const RawPointCloud& cloud, const std::string& path);
void save_cloud(const PseudoPointCloud& cloud, const std::string& path);
RawPointCloud load_raw_cloud(const std::string& path);
PseudoPointCloud load_pseudo_cloud(const std::string& path);

// Debug import: one point per line, comma- or whitespace-separated,
// 3 columns (xyz) or 4 (xyz + intensity). '#' starts a comment.
RawPointCloud load_raw_cloud_csv(const std::string& path);

}  // namespace pointfuse
