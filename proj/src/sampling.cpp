#include "pointfuse/sampling.hpp"

#include <limits>
#include <stdexcept>

namespace pointfuse {

KeypointSet farthest_point_sample(const std::vector<Eigen::Vector3d>& points, int count,
                                  int start_index) {
  const int n = static_cast<int>(points.size());
  if (n < 1) throw std::invalid_argument("farthest_point_sample: empty cloud");
  if (count < 1) throw std::invalid_argument("farthest_point_sample: count must be >= 1");
  if (start_index < 0 || start_index >= n)
    throw std::invalid_argument("farthest_point_sample: start index out of range");

  const int m = std::min(count, n);
  KeypointSet out;
  out.indices.reserve(m);
  out.positions.reserve(m);

  // min squared distance from each point to the selected set so far
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  int cur = start_index;
  for (int step = 0; step < m; ++step) {
    out.indices.push_back(cur);
    out.positions.push_back(points[cur]);
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = (points[i] - points[cur]).squaredNorm();
      if (d < d2[i]) d2[i] = d;
      if (d2[i] > best_d2) {  // strict: ties keep the lowest index
        best_d2 = d2[i];
        best = i;
      }
    }
    cur = best;
  }
  return out;
}

std::vector<int> ball_query(const std::vector<Eigen::Vector3d>& centers,
                            const std::vector<Eigen::Vector3d>& points, double radius,
                            int max_neighbors) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball_query: radius must be > 0");
  if (max_neighbors < 1) throw std::invalid_argument("ball_query: max_neighbors must be >= 1");

  const double r2 = radius * radius;
  std::vector<int> table(centers.size() * static_cast<size_t>(max_neighbors), kNoNeighbor);
  for (size_t c = 0; c < centers.size(); ++c) {
    int* row = table.data() + c * static_cast<size_t>(max_neighbors);
    int found = 0;
    for (size_t i = 0; i < points.size() && found < max_neighbors; ++i) {
      if ((points[i] - centers[c]).squaredNorm() <= r2) row[found++] = static_cast<int>(i);
    }
    for (int s = found; s > 0 && s < max_neighbors; ++s) row[s] = row[0];
  }
  return table;
}

std::vector<int> voxel_query(const std::vector<Eigen::Vector3d>& centers, const VoxelGrid& grid,
                             int kernel_radius, int max_neighbors) {
  if (kernel_radius < 0) throw std::invalid_argument("voxel_query: kernel radius must be >= 0");
  if (max_neighbors < 1) throw std::invalid_argument("voxel_query: max_neighbors must be >= 1");

  std::vector<int> table(centers.size() * static_cast<size_t>(max_neighbors), kNoNeighbor);
  for (size_t c = 0; c < centers.size(); ++c) {
    if (!grid.in_range(centers[c])) continue;
    int* row = table.data() + c * static_cast<size_t>(max_neighbors);
    const Eigen::Vector3i bin = grid.bin_of(centers[c]);
    int found = 0;
    // kernel walk in lexicographic offset order matches the storage order
    for (int dx = -kernel_radius; dx <= kernel_radius && found < max_neighbors; ++dx) {
      for (int dy = -kernel_radius; dy <= kernel_radius && found < max_neighbors; ++dy) {
        for (int dz = -kernel_radius; dz <= kernel_radius && found < max_neighbors; ++dz) {
          const int pos = grid.find(bin + Eigen::Vector3i(dx, dy, dz));
          if (pos >= 0) row[found++] = pos;
        }
      }
    }
    for (int s = found; s > 0 && s < max_neighbors; ++s) row[s] = row[0];
  }
  return table;
}

}  // namespace pointfuse
