#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pointfuse {

// Pinhole model between the sensor frame and pixel-depth space:
// p_cam = R*p + t, (u,v) = perspective division of K*p_cam, d = p_cam.z.
struct Calibration {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int width = 0;
  int height = 0;

  // Throws std::invalid_argument unless R is orthonormal (1e-9, det +1),
  // K is upper-triangular with positive focal lengths and K(2,2) == 1,
  // and the image size is positive.
  void validate() const;
};

struct RawPointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> intensity;  // empty, or one value in [0,1] per point
};

struct PixelDepthSample {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
};

struct ProjectedPoint {
  int point_index = -1;
  PixelDepthSample px;
};

// Depth grid with explicit empty cells, stored row-major as depth[v*width + u].
struct SparseDepthMap {
  static constexpr double kEmpty = -1.0;

  int width = 0;
  int height = 0;
  std::vector<double> depth;
  int valid_count = 0;

  static SparseDepthMap empty_map(int width, int height);
  double at(int u, int v) const { return depth[static_cast<size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<size_t>(v) * width + u]; }
  bool is_empty(int u, int v) const { return at(u, v) == kEmpty; }
};

// Projects every cloud point; keeps those with camera depth > 0 landing inside
// [0,W)x[0,H). Real-valued (u,v) are preserved for round-trip accuracy.
std::vector<ProjectedPoint> project_points(const RawPointCloud& cloud, const Calibration& calib);

// Z-buffers samples into integer cells (floor of u,v); nearest depth wins.
// Throws on non-finite coordinates or d <= 0.
SparseDepthMap rasterize_depth(const std::vector<PixelDepthSample>& samples, int width,
                               int height);

// p = R^T (K^{-1} * (u*d, v*d, d) - t). Throws std::domain_error when d <= 0.
Eigen::Vector3d unproject_pixel(double u, double v, double d, const Calibration& calib);

// Plain-text format: lines `K: 9 floats`, `R: 9 floats`, `t: 3 floats`,
// `size: W H`, whitespace separated, '#' starts a comment.
Calibration load_calibration(const std::string& path);
void save_calibration(const Calibration& calib, const std::string& path);

// KITTI-style lines P2 (3x4), R0_rect (3x3), Tr_velo_to_cam (3x4), folded as
// K = P2[:,0:3], R = R0_rect * Tr[:,0:3], t = R0_rect * Tr[:,3] + K^{-1} * P2[:,3].
// KITTI files carry no image size, so the caller supplies it.
Calibration load_kitti_calibration(const std::string& path, int width, int height);

}  // namespace pointfuse
