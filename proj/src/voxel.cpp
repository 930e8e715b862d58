#include "pointfuse/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace pointfuse {

namespace {

std::tuple<int, int, int> key(const Eigen::Vector3i& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

bool VoxelGrid::in_range(const Eigen::Vector3d& p) const {
  for (int a = 0; a < 3; ++a) {
    if (!(p(a) >= range_min(a) && p(a) < range_max(a))) return false;
  }
  return true;
}

Eigen::Vector3i VoxelGrid::bin_of(const Eigen::Vector3d& p) const {
  Eigen::Vector3i idx;
  for (int a = 0; a < 3; ++a)
    idx(a) = static_cast<int>(std::floor((p(a) - range_min(a)) / voxel_size(a)));
  return idx;
}

Eigen::Vector3i VoxelGrid::dims() const {
  Eigen::Vector3i d;
  for (int a = 0; a < 3; ++a)
    d(a) = static_cast<int>(std::ceil((range_max(a) - range_min(a)) / voxel_size(a)));
  return d;
}

int VoxelGrid::find(const Eigen::Vector3i& index) const {
  auto it = std::lower_bound(voxels.begin(), voxels.end(), index,
                             [](const Voxel& v, const Eigen::Vector3i& k) {
                               return key(v.index) < key(k);
                             });
  if (it == voxels.end() || it->index != index) return -1;
  return static_cast<int>(it - voxels.begin());
}

int64_t VoxelGrid::total_count() const {
  int64_t n = 0;
  for (const auto& v : voxels) n += v.count;
  return n;
}

VoxelGrid voxelize(const Eigen::MatrixXd& points, const Eigen::Vector3d& voxel_size,
                   const Eigen::Vector3d& range_min, const Eigen::Vector3d& range_max) {
  if (points.cols() < 3) throw std::invalid_argument("voxelize: points need >= 3 columns");
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size(a) > 0.0)) throw std::invalid_argument("voxelize: voxel size must be > 0");
    if (!(range_min(a) < range_max(a)))
      throw std::invalid_argument("voxelize: range_min must be < range_max");
  }

  VoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.range_min = range_min;
  grid.range_max = range_max;
  grid.feature_width = static_cast<int>(points.cols());

  struct Slot {
    Eigen::Vector3i index;
    int row;
  };
  std::vector<Slot> slots;
  slots.reserve(points.rows());
  for (int i = 0; i < points.rows(); ++i) {
    const Eigen::Vector3d p = points.row(i).head<3>();
    if (!grid.in_range(p)) continue;
    slots.push_back({grid.bin_of(p), i});
  }
  std::stable_sort(slots.begin(), slots.end(),
                   [](const Slot& a, const Slot& b) { return key(a.index) < key(b.index); });

  const int f = grid.feature_width;
  for (size_t i = 0; i < slots.size();) {
    size_t j = i;
    std::vector<double> acc(f, 0.0);
    while (j < slots.size() && slots[j].index == slots[i].index) {
      for (int c = 0; c < f; ++c) acc[c] += points(slots[j].row, c);
      ++j;
    }
    const double inv = 1.0 / static_cast<double>(j - i);
    for (double& v : acc) v *= inv;
    grid.voxels.push_back({slots[i].index, std::move(acc), static_cast<int>(j - i)});
    i = j;
  }
  return grid;
}

}  // namespace pointfuse
