#include "pointfuse/geometry.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pointfuse {

void Calibration::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("calibration: image size must be positive");
  const Eigen::Matrix3d rtr = R.transpose() * R - Eigen::Matrix3d::Identity();
  if (rtr.cwiseAbs().maxCoeff() >= 1e-9)
    throw std::invalid_argument("calibration: R is not orthonormal");
  if (std::abs(R.determinant() - 1.0) >= 1e-9)
    throw std::invalid_argument("calibration: R is not a proper rotation");
  if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0)
    throw std::invalid_argument("calibration: K must be upper-triangular");
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
    throw std::invalid_argument("calibration: focal lengths must be positive");
  if (K(2, 2) != 1.0) throw std::invalid_argument("calibration: K(2,2) must be 1");
}

std::vector<ProjectedPoint> project_points(const RawPointCloud& cloud, const Calibration& calib) {
  calib.validate();
  std::vector<ProjectedPoint> out;
  out.reserve(cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d cam = calib.R * cloud.points[i] + calib.t;
    const double d = cam.z();
    if (!(d > 0.0)) continue;
    const Eigen::Vector3d img = calib.K * cam;
    const double u = img.x() / d;
    const double v = img.y() / d;
    if (u < 0.0 || u >= calib.width || v < 0.0 || v >= calib.height) continue;
    out.push_back({static_cast<int>(i), {u, v, d}});
  }
  return out;
}

SparseDepthMap SparseDepthMap::empty_map(int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("depth map size must be positive");
  SparseDepthMap m;
  m.width = width;
  m.height = height;
  m.depth.assign(static_cast<size_t>(width) * height, kEmpty);
  return m;
}

SparseDepthMap rasterize_depth(const std::vector<PixelDepthSample>& samples, int width,
                               int height) {
  SparseDepthMap map = SparseDepthMap::empty_map(width, height);
  for (const auto& s : samples) {
    if (!std::isfinite(s.u) || !std::isfinite(s.v) || !std::isfinite(s.d))
      throw std::invalid_argument("rasterize_depth: non-finite sample");
    if (!(s.d > 0.0)) throw std::invalid_argument("rasterize_depth: sample depth must be > 0");
    const int u = static_cast<int>(std::floor(s.u));
    const int v = static_cast<int>(std::floor(s.v));
    if (u < 0 || u >= width || v < 0 || v >= height) continue;
    double& cell = map.at(u, v);
    if (cell == SparseDepthMap::kEmpty) {
      cell = s.d;
      ++map.valid_count;
    } else if (s.d < cell) {
      cell = s.d;
    }
  }
  return map;
}

Eigen::Vector3d unproject_pixel(double u, double v, double d, const Calibration& calib) {
  if (!(d > 0.0)) throw std::domain_error("unproject_pixel: depth must be > 0");
  const Eigen::Vector3d img(u * d, v * d, d);
  return calib.R.transpose() * (calib.K.inverse() * img - calib.t);
}

namespace {

// key: floats...  with '#' comments; returns key -> numbers.
std::map<std::string, std::vector<double>> parse_key_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file: " + path);
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (!key.empty() && key.back() == ':') key.pop_back();
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    rows[key] = std::move(vals);
  }
  return rows;
}

const std::vector<double>& require_row(const std::map<std::string, std::vector<double>>& rows,
                                       const std::string& key, size_t n,
                                       const std::string& path) {
  auto it = rows.find(key);
  if (it == rows.end())
    throw std::runtime_error("calibration file " + path + " lacks row '" + key + "'");
  if (it->second.size() != n)
    throw std::runtime_error("calibration row '" + key + "' in " + path + " needs " +
                             std::to_string(n) + " values");
  return it->second;
}

Eigen::Matrix3d mat3_row_major(const std::vector<double>& v) {
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[r * 3 + c];
  return m;
}

}  // namespace

Calibration load_calibration(const std::string& path) {
  const auto rows = parse_key_rows(path);
  Calibration calib;
  calib.K = mat3_row_major(require_row(rows, "K", 9, path));
  calib.R = mat3_row_major(require_row(rows, "R", 9, path));
  const auto& t = require_row(rows, "t", 3, path);
  calib.t = Eigen::Vector3d(t[0], t[1], t[2]);
  const auto& size = require_row(rows, "size", 2, path);
  calib.width = static_cast<int>(size[0]);
  calib.height = static_cast<int>(size[1]);
  calib.validate();
  return calib;
}

void save_calibration(const Calibration& calib, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write calibration file: " + path);
  out.precision(17);
  out << "K:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << " " << calib.K(r, c);
  out << "\nR:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << " " << calib.R(r, c);
  out << "\nt: " << calib.t.x() << " " << calib.t.y() << " " << calib.t.z();
  out << "\nsize: " << calib.width << " " << calib.height << "\n";
  if (!out) throw std::runtime_error("failed writing calibration file: " + path);
}

Calibration load_kitti_calibration(const std::string& path, int width, int height) {
  const auto rows = parse_key_rows(path);
  const auto& p2 = require_row(rows, "P2", 12, path);
  const auto& r0 = require_row(rows, "R0_rect", 9, path);
  const auto& tr = require_row(rows, "Tr_velo_to_cam", 12, path);

  Eigen::Matrix3d K;
  Eigen::Vector3d p2_col4;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) K(r, c) = p2[r * 4 + c];
    p2_col4(r) = p2[r * 4 + 3];
  }
  const Eigen::Matrix3d rect = mat3_row_major(r0);
  Eigen::Matrix3d tr_rot;
  Eigen::Vector3d tr_t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) tr_rot(r, c) = tr[r * 4 + c];
    tr_t(r) = tr[r * 4 + 3];
  }

  Calibration calib;
  calib.K = K;
  calib.R = rect * tr_rot;
  calib.t = rect * tr_t + K.inverse() * p2_col4;
  calib.width = width;
  calib.height = height;
  calib.validate();
  return calib;
}

}  // namespace pointfuse
