#pragma once

#include <Eigen/Dense>
#include <vector>

namespace pointfuse {

// Axis-aligned voxelization of a feature matrix whose first three columns are
// xyz. Occupied voxels are stored in ascending lexicographic index order
// (ix, then iy, then iz), so iteration and lookup are deterministic.
struct VoxelGrid {
  struct Voxel {
    Eigen::Vector3i index;
    std::vector<double> feature;  // arithmetic mean of member rows
    int count = 0;
  };

  Eigen::Vector3d voxel_size = Eigen::Vector3d::Ones();
  Eigen::Vector3d range_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d range_max = Eigen::Vector3d::Ones();
  int feature_width = 0;
  std::vector<Voxel> voxels;

  // Half-open membership: range_min <= p < range_max componentwise.
  bool in_range(const Eigen::Vector3d& p) const;
  Eigen::Vector3i bin_of(const Eigen::Vector3d& p) const;
  // Cell counts per axis covering the range.
  Eigen::Vector3i dims() const;
  // Position in `voxels` of the voxel with this integer index, or -1.
  int find(const Eigen::Vector3i& index) const;
  int64_t total_count() const;
};

// Bins in-range rows of points (N x F, F >= 3) by floor((p - range_min) /
// voxel_size); each voxel's feature is the mean of its member rows.
// Out-of-range rows are dropped.
VoxelGrid voxelize(const Eigen::MatrixXd& points, const Eigen::Vector3d& voxel_size,
                   const Eigen::Vector3d& range_min, const Eigen::Vector3d& range_max);

}  // namespace pointfuse
