#include "pointfuse/boxes.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pointfuse {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a <= -M_PI) a += two_pi;
  if (a > M_PI) a -= two_pi;
  return a;
}

bool RoI::contains(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d d = p - center;
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double lx = c * d.x() + s * d.y();   // rotate by -yaw into the box frame
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= 0.5 * size.x() && std::abs(ly) <= 0.5 * size.y() &&
         std::abs(d.z()) <= 0.5 * size.z();
}

Eigen::Matrix<double, 7, 1> encode_residual(const RoI& from, const RoI& to) {
  Eigen::Matrix<double, 7, 1> r;
  r.head<3>() = to.center - from.center;
  for (int a = 0; a < 3; ++a) r(3 + a) = std::log(to.size(a) / from.size(a));
  r(6) = wrap_angle(to.yaw - from.yaw);
  return r;
}

RoI apply_residual(const RoI& roi, const Eigen::Matrix<double, 7, 1>& r) {
  RoI out = roi;
  out.center += r.head<3>();
  for (int a = 0; a < 3; ++a) out.size(a) = roi.size(a) * std::exp(r(3 + a));
  out.yaw = wrap_angle(roi.yaw + r(6));
  return out;
}

std::vector<RoI> load_boxes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open box file: " + path);
  std::vector<RoI> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    RoI b;
    if (!(ls >> b.center.x())) continue;  // blank line
    if (!(ls >> b.center.y() >> b.center.z() >> b.size.x() >> b.size.y() >> b.size.z() >>
          b.yaw >> b.score))
      throw std::runtime_error("box file " + path + " line " + std::to_string(line_no) +
                               ": need 8 values");
    boxes.push_back(b);
  }
  return boxes;
}

void save_boxes(const std::vector<RoI>& boxes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write box file: " + path);
  out.precision(17);
  for (const auto& b : boxes) {
    out << b.center.x() << " " << b.center.y() << " " << b.center.z() << " " << b.size.x() << " "
        << b.size.y() << " " << b.size.z() << " " << b.yaw << " " << b.score << "\n";
  }
  if (!out) throw std::runtime_error("failed writing box file: " + path);
}

}  // namespace pointfuse
