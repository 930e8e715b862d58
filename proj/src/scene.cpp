#include "pointfuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "pointfuse/random.hpp"

namespace pointfuse {

namespace {

constexpr double kRayEps = 1e-9;
constexpr int kSurfaceNone = -3;
constexpr int kSurfaceWall = -2;
constexpr int kSurfaceGround = -1;

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int surface = kSurfaceNone;  // box index, or kSurfaceGround / kSurfaceWall
};

// Slab test against an oriented box, origin at the sensor.
bool ray_box(const Eigen::Vector3d& dir, const RoI& box, double& t_hit) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector3d rel = -box.center;
  const Eigen::Vector3d o(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
  const Eigen::Vector3d d(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());

  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double half = 0.5 * box.size(a);
    if (std::abs(d(a)) < 1e-12) {
      if (std::abs(o(a)) > half) return false;
      continue;
    }
    double t0 = (-half - o(a)) / d(a);
    double t1 = (half - o(a)) / d(a);
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return false;
  }
  if (t_far < kRayEps) return false;
  t_hit = t_near > kRayEps ? t_near : t_far;
  return true;
}

Hit cast_ray(const Eigen::Vector3d& dir, const SceneConfig& cfg, const std::vector<RoI>& boxes) {
  Hit hit;
  for (size_t b = 0; b < boxes.size(); ++b) {
    double t;
    if (ray_box(dir, boxes[b], t) && t < hit.t) {
      hit.t = t;
      hit.surface = static_cast<int>(b);
    }
  }
  if (dir.z() < -1e-12) {
    const double t = -cfg.sensor_height / dir.z();
    if (t > kRayEps && t < hit.t) {
      hit.t = t;
      hit.surface = kSurfaceGround;
    }
  }
  if (dir.x() > 1e-12) {
    const double t = cfg.wall_distance / dir.x();
    if (t > kRayEps && t < hit.t) {
      hit.t = t;
      hit.surface = kSurfaceWall;
    }
  }
  return hit;
}

Eigen::Vector3d surface_color(int surface) {
  static const double palette[6][3] = {{0.85, 0.25, 0.2}, {0.2, 0.7, 0.3},  {0.2, 0.35, 0.85},
                                       {0.9, 0.8, 0.2},   {0.75, 0.3, 0.8}, {0.25, 0.8, 0.8}};
  if (surface == kSurfaceGround) return {0.25, 0.25, 0.28};
  if (surface == kSurfaceWall) return {0.55, 0.55, 0.6};
  const double* c = palette[surface % 6];
  return {c[0], c[1], c[2]};
}

bool footprints_overlap(const RoI& a, const RoI& b) {
  const double ra = 0.5 * std::hypot(a.size.x(), a.size.y());
  const double rb = 0.5 * std::hypot(b.size.x(), b.size.y());
  const Eigen::Vector2d d = a.center.head<2>() - b.center.head<2>();
  return d.norm() <= ra + rb;  // conservative circumscribed-circle test
}

std::vector<RoI> sample_boxes(const SceneConfig& cfg, Rng& rng) {
  std::vector<RoI> boxes;
  for (int b = 0; b < cfg.num_boxes; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      RoI box;
      const double x = rng.uniform(cfg.box_x_min, cfg.box_x_max);
      const double y_span = cfg.box_y_frac * x;
      box.center = {x, rng.uniform(-y_span, y_span), -cfg.sensor_height + 0.5 * cfg.box_size.z()};
      box.size = cfg.box_size;
      box.yaw = rng.uniform(-cfg.box_yaw_max, cfg.box_yaw_max);
      box.score = 1.0;
      placed = std::none_of(boxes.begin(), boxes.end(),
                            [&](const RoI& other) { return footprints_overlap(box, other); });
      if (placed) boxes.push_back(box);
    }
    if (!placed)
      throw std::runtime_error("generate_scene: could not place non-overlapping boxes");
  }
  return boxes;
}

}  // namespace

Calibration scene_calibration(const SceneConfig& cfg) {
  Calibration calib;
  calib.K << cfg.fx, 0.0, cfg.cx, 0.0, cfg.fy, cfg.cy, 0.0, 0.0, 1.0;
  calib.R << 0.0, -1.0, 0.0,  // x_cam = -y
      0.0, 0.0, -1.0,         // y_cam = -z
      1.0, 0.0, 0.0;          // z_cam (depth) = x
  calib.t = Eigen::Vector3d::Zero();
  calib.width = cfg.image_width;
  calib.height = cfg.image_height;
  calib.validate();
  return calib;
}

SyntheticScene generate_scene(const SceneConfig& cfg, uint64_t seed) {
  if (cfg.num_boxes < 0) throw std::invalid_argument("generate_scene: num_boxes must be >= 0");
  if (cfg.wall_distance <= cfg.box_x_max)
    throw std::invalid_argument("generate_scene: wall must sit behind the box range");
  if (cfg.lidar_stride < 1) throw std::invalid_argument("generate_scene: lidar_stride must be >= 1");

  SyntheticScene scene;
  scene.seed = seed;
  scene.calib = scene_calibration(cfg);
  Rng rng(seed);
  scene.boxes = sample_boxes(cfg, rng);

  const int W = cfg.image_width, H = cfg.image_height;
  scene.image = RgbImage::filled(W, H, 0.0, 0.0, 0.0);
  scene.gt_depth.width = W;
  scene.gt_depth.height = H;
  scene.gt_depth.depth.resize(static_cast<size_t>(W) * H);

  const Eigen::Matrix3d rt = scene.calib.R.transpose();
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      // z_cam component is 1, so the ray parameter equals the camera depth.
      const Eigen::Vector3d dir_cam((u - cfg.cx) / cfg.fx, (v - cfg.cy) / cfg.fy, 1.0);
      const Hit hit = cast_ray(rt * dir_cam, cfg, scene.boxes);
      if (hit.surface == kSurfaceNone)
        throw std::runtime_error("generate_scene: camera ray escaped the scene");
      scene.gt_depth.at(u, v) = hit.t;
      const Eigen::Vector3d color = surface_color(hit.surface);
      scene.image.at(u, v, 0) = color.x();
      scene.image.at(u, v, 1) = color.y();
      scene.image.at(u, v, 2) = color.z();
    }
  }

  Rng lidar_rng = rng.fork(1);
  if (cfg.lidar_pattern == LidarPattern::kPixel) {
    for (int v = 0; v < H; v += cfg.lidar_stride) {
      for (int u = 0; u < W; u += cfg.lidar_stride) {
        if (cfg.dropout > 0.0 && lidar_rng.uniform() < cfg.dropout) continue;
        double d = scene.gt_depth.at(u, v);
        if (cfg.noise_sigma > 0.0)
          d = std::max(0.1, d + cfg.noise_sigma * lidar_rng.normal());
        scene.raw_cloud.points.push_back(unproject_pixel(u, v, d, scene.calib));
      }
    }
  } else {
    const double deg = std::numbers::pi / 180.0;
    for (int e = 0; e < cfg.elev_steps; ++e) {
      const double elev =
          (cfg.elev_min_deg + (e + 0.5) * (cfg.elev_max_deg - cfg.elev_min_deg) / cfg.elev_steps) *
          deg;
      for (int a = 0; a < cfg.az_steps; ++a) {
        const double az =
            (cfg.az_min_deg + (a + 0.5) * (cfg.az_max_deg - cfg.az_min_deg) / cfg.az_steps) * deg;
        if (cfg.dropout > 0.0 && lidar_rng.uniform() < cfg.dropout) continue;
        const Eigen::Vector3d dir(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az),
                                  std::sin(elev));
        const Hit hit = cast_ray(dir, cfg, scene.boxes);
        if (hit.surface == kSurfaceNone) continue;
        double t = hit.t;
        if (cfg.noise_sigma > 0.0) t = std::max(0.1, t + cfg.noise_sigma * lidar_rng.normal());
        scene.raw_cloud.points.push_back(t * dir);
      }
    }
  }
  return scene;
}

double distance_to_surface(const Eigen::Vector3d& p, const SceneConfig& cfg,
                           const std::vector<RoI>& boxes) {
  double best = std::min(std::abs(p.z() + cfg.sensor_height), std::abs(cfg.wall_distance - p.x()));
  for (const auto& box : boxes) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Eigen::Vector3d rel = p - box.center;
    const Eigen::Vector3d local(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
    Eigen::Vector3d q;
    double max_q = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      q(a) = std::abs(local(a)) - 0.5 * box.size(a);
      max_q = std::max(max_q, q(a));
    }
    const double dist = max_q <= 0.0
                            ? -max_q  // inside: distance to the nearest face
                            : q.cwiseMax(0.0).norm();
    best = std::min(best, dist);
  }
  return best;
}

}  // namespace pointfuse
