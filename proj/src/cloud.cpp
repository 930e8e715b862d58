#include "pointfuse/cloud.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pointfuse/io_util.hpp"

namespace pointfuse {

PseudoPointCloud build_pseudo_cloud(const RgbImage& image, const DenseDepthMap& dense,
                                    const Calibration& calib, int stride) {
  if (image.width != dense.width || image.height != dense.height)
    throw std::invalid_argument("build_pseudo_cloud: image and depth map sizes differ");
  if (stride < 1) throw std::invalid_argument("build_pseudo_cloud: stride must be >= 1");

  PseudoPointCloud cloud;
  cloud.source_width = image.width;
  cloud.source_height = image.height;
  cloud.points.reserve((static_cast<size_t>(image.width) / stride + 1) *
                       (static_cast<size_t>(image.height) / stride + 1));
  for (int v = 0; v < image.height; v += stride) {
    for (int u = 0; u < image.width; u += stride) {
      const double d = dense.at(u, v);
      const Eigen::Vector3d p = unproject_pixel(u, v, d, calib);
      PseudoPoint pt;
      pt.x = p.x();
      pt.y = p.y();
      pt.z = p.z();
      pt.r = image.at(u, v, 0);
      pt.g = image.at(u, v, 1);
      pt.b = image.at(u, v, 2);
      pt.u = u;
      pt.v = v;
      cloud.points.push_back(pt);
    }
  }
  return cloud;
}

namespace {

constexpr char kCloudMagic[4] = {'P', 'F', 'P', 'C'};

void write_cloud_header(std::ofstream& out, uint32_t count, uint32_t fields) {
  out.write(kCloudMagic, 4);
  write_u32(out, count);
  write_u32(out, fields);
}

uint32_t read_cloud_header(std::ifstream& in, const std::string& path, uint32_t& fields) {
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kCloudMagic))
    throw std::runtime_error("not a point cloud file: " + path);
  const uint32_t count = read_u32(in);
  fields = read_u32(in);
  return count;
}

}  // namespace

void save_cloud(const RawPointCloud& cloud, const std::string& path) {
  const bool with_intensity = !cloud.intensity.empty();
  if (with_intensity && cloud.intensity.size() != cloud.points.size())
    throw std::invalid_argument("save_cloud: intensity count differs from point count");
  std::ofstream out = open_out_binary(path);
  write_cloud_header(out, static_cast<uint32_t>(cloud.points.size()), with_intensity ? 4 : 3);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    write_f32(out, static_cast<float>(p.x()));
    write_f32(out, static_cast<float>(p.y()));
    write_f32(out, static_cast<float>(p.z()));
    if (with_intensity) write_f32(out, static_cast<float>(cloud.intensity[i]));
  }
  if (!out) throw std::runtime_error("failed writing point cloud: " + path);
}

void save_cloud(const PseudoPointCloud& cloud, const std::string& path) {
  std::ofstream out = open_out_binary(path);
  write_cloud_header(out, static_cast<uint32_t>(cloud.points.size()), 8);
  for (const auto& p : cloud.points) {
    for (double f : {p.x, p.y, p.z, p.r, p.g, p.b, p.u, p.v}) {
      write_f32(out, static_cast<float>(f));
    }
  }
  if (!out) throw std::runtime_error("failed writing point cloud: " + path);
}

RawPointCloud load_raw_cloud(const std::string& path) {
  std::ifstream in = open_in_binary(path);
  uint32_t fields = 0;
  const uint32_t count = read_cloud_header(in, path, fields);
  if (fields != 3 && fields != 4)
    throw std::runtime_error("raw cloud needs 3 or 4 fields per point: " + path);
  RawPointCloud cloud;
  cloud.points.reserve(count);
  if (fields == 4) cloud.intensity.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const double x = read_f32(in);
    const double y = read_f32(in);
    const double z = read_f32(in);
    cloud.points.emplace_back(x, y, z);
    if (fields == 4) cloud.intensity.push_back(read_f32(in));
  }
  if (!in) throw std::runtime_error("truncated point cloud: " + path);
  return cloud;
}

PseudoPointCloud load_pseudo_cloud(const std::string& path) {
  std::ifstream in = open_in_binary(path);
  uint32_t fields = 0;
  const uint32_t count = read_cloud_header(in, path, fields);
  if (fields != 8) throw std::runtime_error("pseudo cloud needs 8 fields per point: " + path);
  PseudoPointCloud cloud;
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    p.x = read_f32(in);
    p.y = read_f32(in);
    p.z = read_f32(in);
    p.r = read_f32(in);
    p.g = read_f32(in);
    p.b = read_f32(in);
    p.u = read_f32(in);
    p.v = read_f32(in);
  }
  if (!in) throw std::runtime_error("truncated point cloud: " + path);
  return cloud;
}

RawPointCloud load_raw_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV point cloud: " + path);
  RawPointCloud cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty()) continue;
    if (vals.size() != 3 && vals.size() != 4)
      throw std::runtime_error("CSV line " + std::to_string(line_no) + " in " + path +
                               " needs 3 or 4 columns");
    cloud.points.emplace_back(vals[0], vals[1], vals[2]);
    if (vals.size() == 4) cloud.intensity.push_back(vals[3]);
  }
  if (!cloud.intensity.empty() && cloud.intensity.size() != cloud.points.size())
    throw std::runtime_error("CSV mixes 3- and 4-column rows: " + path);
  return cloud;
}

}  // namespace pointfuse
