#pragma once

#include <cstdint>
#include <vector>

#include "pointfuse/boxes.hpp"
#include "pointfuse/cloud.hpp"
#include "pointfuse/depth.hpp"
#include "pointfuse/geometry.hpp"
#include "pointfuse/image.hpp"

namespace pointfuse {

enum class LidarPattern {
  kPixel,    // rays through every lidar_stride-th image pixel (sensors share
             // an origin, so projected depths match the depth map exactly)
  kAngular,  // azimuth x elevation grid, independent of the camera raster
};

struct SceneConfig {
  int num_boxes = 1;
  double sensor_height = 1.6;   // ground plane sits at z = -sensor_height
  double wall_distance = 50.0;  // back wall plane x = wall_distance

  int image_width = 96;
  int image_height = 64;
  double fx = 80.0, fy = 80.0;
  double cx = 48.0, cy = 32.0;

  LidarPattern lidar_pattern = LidarPattern::kPixel;
  int lidar_stride = 2;  // pixel pattern: every stride-th pixel per axis
  double az_min_deg = -30.0, az_max_deg = 30.0;
  int az_steps = 96;
  double elev_min_deg = -20.0, elev_max_deg = 4.0;
  int elev_steps = 24;

  Eigen::Vector3d box_size{4.0, 1.8, 1.6};
  double box_x_min = 8.0, box_x_max = 35.0;
  double box_y_frac = 0.4;   // |center y| <= frac * center x (inside the view)
  double box_yaw_max = 0.6;  // radians

  double noise_sigma = 0.0;  // gaussian range noise on lidar returns
  double dropout = 0.0;      // per-ray drop probability
};

struct SyntheticScene {
  std::vector<RoI> boxes;
  RawPointCloud raw_cloud;
  RgbImage image;
  DenseDepthMap gt_depth;
  Calibration calib;
  uint64_t seed = 0;
};

// Camera intrinsics/extrinsics implied by the config: the camera shares the
// sensor origin and looks down +x (x_cam = -y, y_cam = -z, z_cam = x).
Calibration scene_calibration(const SceneConfig& cfg);

// Casts camera rays for the image + ground-truth depth (every pixel hits a
// box, the ground, or the back wall), then samples lidar returns by the
// configured pattern. Boxes are drawn non-overlapping from the seeded
// generator; bounded retries, then std::runtime_error.
SyntheticScene generate_scene(const SceneConfig& cfg, uint64_t seed);

// Distance from p to the nearest scene surface (boxes, ground, wall).
double distance_to_surface(const Eigen::Vector3d& p, const SceneConfig& cfg,
                           const std::vector<RoI>& boxes);

}  // namespace pointfuse
