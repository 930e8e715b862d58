#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace pointfuse {

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

// Oriented 3D box: center (m), size (l,w,h in m), yaw about +z (rad), score.
struct RoI {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  double score = 0.0;

  // Closed containment test in the yaw-rotated frame.
  bool contains(const Eigen::Vector3d& p) const;
  double diagonal() const { return size.norm(); }
};

// 7-vector box residual: (dx, dy, dz) additive on center, (dl, dw, dh)
// log-ratios on size, dyaw additive (wrapped).
Eigen::Matrix<double, 7, 1> encode_residual(const RoI& from, const RoI& to);
RoI apply_residual(const RoI& roi, const Eigen::Matrix<double, 7, 1>& r);

// Line-oriented text: `cx cy cz l w h yaw score`, one box per line,
// '#' comments allowed.
std::vector<RoI> load_boxes(const std::string& path);
void save_boxes(const std::vector<RoI>& boxes, const std::string& path);

}  // namespace pointfuse
