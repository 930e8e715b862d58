#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pointfuse/voxel.hpp"

namespace pointfuse {

// Slot value in a neighbor table when a neighborhood is empty.
constexpr int kNoNeighbor = -1;

struct KeypointSet {
  std::vector<int> indices;                 // distinct rows of the source cloud
  std::vector<Eigen::Vector3d> positions;   // one per index
};

// Greedy farthest point sampling seeded at start_index: each step adds the
// point maximizing the minimum distance to the selected set, ties to the
// lowest index. Returns min(count, N) points.
KeypointSet farthest_point_sample(const std::vector<Eigen::Vector3d>& points, int count,
                                  int start_index = 0);

// Row-major M x max_neighbors table. Per center: indices of points within
// `radius`, ascending, truncated at max_neighbors; short rows repeat the
// first hit; empty rows hold kNoNeighbor.
std::vector<int> ball_query(const std::vector<Eigen::Vector3d>& centers,
                            const std::vector<Eigen::Vector3d>& points, double radius,
                            int max_neighbors);

// Same table shape over occupied voxels: per center, positions (into
// grid.voxels) of occupied voxels within the (2k+1)^3 index kernel around the
// center's bin, ascending lexicographic order, truncated/padded like
// ball_query. Centers outside the grid range produce sentinel rows.
std::vector<int> voxel_query(const std::vector<Eigen::Vector3d>& centers, const VoxelGrid& grid,
                             int kernel_radius, int max_neighbors);

}  // namespace pointfuse
