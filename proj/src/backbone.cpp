#include "pointfuse/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace pointfuse {

namespace {

using nn::PoolMode;
using nn::Tensor;

std::tuple<int, int, int> key(const Eigen::Vector3i& v) { return {v.x(), v.y(), v.z()}; }

// Base voxel features as a constant tensor, xyz columns normalized into [0,1]
// by the grid range so every branch feeds the linear maps bounded inputs.
Tensor base_feature_tensor(const VoxelGrid& grid) {
  const int n = static_cast<int>(grid.voxels.size());
  const int f = grid.feature_width;
  std::vector<double> data(static_cast<size_t>(n) * f);
  for (int i = 0; i < n; ++i) {
    const auto& feat = grid.voxels[i].feature;
    for (int c = 0; c < f; ++c) {
      double v = feat[c];
      if (c < 3) v = (v - grid.range_min(c)) / (grid.range_max(c) - grid.range_min(c));
      data[static_cast<size_t>(i) * f + c] = v;
    }
  }
  return Tensor::from_data({n, f}, std::move(data));
}

}  // namespace

BranchParams make_branch_params(nn::ParamStore& store, const std::string& name, int in_width,
                                const std::array<int, 4>& widths, Rng& rng) {
  BranchParams params;
  int in = in_width;
  for (int k = 0; k < 4; ++k) {
    params.level_maps.emplace_back(store, name + ".level" + std::to_string(k + 1), in, widths[k],
                                   rng);
    in = widths[k];
  }
  return params;
}

VoxelFeatureHierarchy build_hierarchy(const VoxelGrid& grid, const BranchParams& params) {
  if (grid.voxels.empty()) throw std::invalid_argument("build_hierarchy: empty voxel grid");
  if (params.level_maps.size() != 4)
    throw std::invalid_argument("build_hierarchy: four level maps required");

  VoxelFeatureHierarchy hier;
  hier.levels.resize(4);
  hier.levels[0].grid = grid;
  hier.levels[0].features = nn::relu(params.level_maps[0].forward(base_feature_tensor(grid)));

  for (int k = 1; k < 4; ++k) {
    const HierarchyLevel& prev = hier.levels[k - 1];
    HierarchyLevel& level = hier.levels[k];
    level.grid.voxel_size = prev.grid.voxel_size * 2.0;
    level.grid.range_min = prev.grid.range_min;
    level.grid.range_max = prev.grid.range_max;
    level.grid.feature_width = prev.grid.feature_width;

    // Merge fine voxels sharing a halved index; boundaries align, so this is
    // the same partition as re-binning the centroids at the doubled size.
    std::map<std::tuple<int, int, int>, std::vector<int>> merged;
    for (size_t i = 0; i < prev.grid.voxels.size(); ++i) {
      const Eigen::Vector3i idx = prev.grid.voxels[i].index;
      auto half = [](int v) { return v >= 0 ? v / 2 : (v - 1) / 2; };
      merged[{half(idx.x()), half(idx.y()), half(idx.z())}].push_back(static_cast<int>(i));
    }

    std::vector<std::vector<int>> groups;
    groups.reserve(merged.size());
    const int f = prev.grid.feature_width;
    for (const auto& [cidx, members] : merged) {
      VoxelGrid::Voxel voxel;
      voxel.index = Eigen::Vector3i(std::get<0>(cidx), std::get<1>(cidx), std::get<2>(cidx));
      voxel.count = static_cast<int>(members.size());
      voxel.feature.assign(f, 0.0);
      for (int m : members) {
        for (int c = 0; c < f; ++c) voxel.feature[c] += prev.grid.voxels[m].feature[c];
      }
      for (double& v : voxel.feature) v /= static_cast<double>(members.size());
      level.grid.voxels.push_back(std::move(voxel));
      groups.push_back(members);
    }
    level.features = nn::relu(
        params.level_maps[k].forward(nn::group_pool(prev.features, groups, PoolMode::kAvg)));
  }
  return hier;
}

VoxelFeatureHierarchy empty_hierarchy(const Eigen::Vector3d& voxel_size,
                                      const Eigen::Vector3d& range_min,
                                      const Eigen::Vector3d& range_max, int in_width,
                                      const std::array<int, 4>& widths) {
  VoxelFeatureHierarchy hier;
  hier.levels.resize(4);
  for (int k = 0; k < 4; ++k) {
    HierarchyLevel& level = hier.levels[k];
    level.grid.voxel_size = voxel_size * std::pow(2.0, k);
    level.grid.range_min = range_min;
    level.grid.range_max = range_max;
    level.grid.feature_width = in_width;
    level.features = nn::Tensor::zeros({0, widths[k]});
  }
  return hier;
}

int pre_feature_width(const AggregationConfig& cfg, const VoxelFeatureHierarchy& raw_hier,
                      const VoxelFeatureHierarchy& pse_hier) {
  int w = 0;
  if (cfg.use_point) w += 3 + (cfg.use_pseudo ? 6 : 0);
  for (int k = 0; k < 4; ++k) {
    if (cfg.use_conv[k])
      w += raw_hier.level_width(k) + (cfg.pseudo_in_conv() ? pse_hier.level_width(k) : 0);
  }
  return w;
}

namespace {

// First-occurrence dedupe of one neighbor-table row: padding repeats a real
// index and empty rows hold the sentinel, so the survivors are the genuine
// neighborhood.
std::vector<int> unique_row(const int* row, int len) {
  std::vector<int> out;
  for (int i = 0; i < len; ++i) {
    const int idx = row[i];
    if (idx == kNoNeighbor) continue;
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
  return out;
}

std::vector<Eigen::Vector3d> level_centroids(const HierarchyLevel& level) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(level.grid.voxels.size());
  for (const auto& v : level.grid.voxels)
    out.emplace_back(v.feature[0], v.feature[1], v.feature[2]);
  return out;
}

// Neighborhood groups of hierarchy voxels around each keypoint, by metric
// ball query over centroids or by integer-kernel voxel query.
std::vector<std::vector<int>> conv_groups(const std::vector<Eigen::Vector3d>& centers,
                                          const HierarchyLevel& level, double radius,
                                          const AggregationConfig& cfg) {
  std::vector<int> table;
  if (cfg.conv_voxel_query) {
    table = voxel_query(centers, level.grid, cfg.voxel_kernel_radius, cfg.conv_max_neighbors);
  } else {
    const auto centroids = level_centroids(level);
    table = ball_query(centers, centroids, radius, cfg.conv_max_neighbors);
  }
  std::vector<std::vector<int>> groups(centers.size());
  for (size_t m = 0; m < centers.size(); ++m) {
    groups[m] = unique_row(table.data() + m * static_cast<size_t>(cfg.conv_max_neighbors),
                           cfg.conv_max_neighbors);
  }
  return groups;
}

// Pools per-neighbor rows (as doubles) for one keypoint; empty -> zeros.
void pool_rows(const std::vector<std::vector<double>>& rows, PoolMode mode, double* out,
               int width) {
  std::fill(out, out + width, 0.0);
  if (rows.empty()) return;
  if (mode == PoolMode::kMax) {
    for (int c = 0; c < width; ++c) {
      double best = rows[0][c];
      for (size_t i = 1; i < rows.size(); ++i) best = std::max(best, rows[i][c]);
      out[c] = best;
    }
  } else {
    for (const auto& r : rows) {
      for (int c = 0; c < width; ++c) out[c] += r[c];
    }
    for (int c = 0; c < width; ++c) out[c] /= static_cast<double>(rows.size());
  }
}

}  // namespace

KeypointFeatureTable aggregate_keypoint_features(const KeypointSet& keypoints,
                                                 const VoxelFeatureHierarchy& raw_hier,
                                                 const VoxelFeatureHierarchy& pse_hier,
                                                 const std::vector<Eigen::Vector3d>& raw_positions,
                                                 const PseudoPointCloud& pse_cloud,
                                                 const AggregationConfig& cfg,
                                                 const nn::Mlp& agg_mlp) {
  const int m = static_cast<int>(keypoints.positions.size());
  if (m == 0) throw std::invalid_argument("aggregate_keypoint_features: no keypoints");

  KeypointFeatureTable table;
  table.keypoints = keypoints;
  table.all_empty.assign(m, 1);

  std::vector<Tensor> parts;
  int offset = 0;

  if (cfg.use_point) {
    // Relative-position (and pseudo rgb) features of metric neighbors; these
    // depend only on fixed cloud data, so they enter the graph as constants.
    const int pw0 = cfg.use_pseudo ? 6 : 0;
    const int width = 3 + pw0;
    std::vector<Eigen::Vector3d> pse_positions;
    pse_positions.reserve(pse_cloud.points.size());
    for (const auto& p : pse_cloud.points) pse_positions.emplace_back(p.x, p.y, p.z);

    const auto raw_table =
        ball_query(keypoints.positions, raw_positions, cfg.radii[0], cfg.point_max_neighbors);
    std::vector<int> pse_table;
    if (cfg.use_pseudo)
      pse_table =
          ball_query(keypoints.positions, pse_positions, cfg.radii[0], cfg.point_max_neighbors);

    std::vector<double> data(static_cast<size_t>(m) * width, 0.0);
    for (int i = 0; i < m; ++i) {
      const Eigen::Vector3d& kp = keypoints.positions[i];
      const auto raw_idx =
          unique_row(raw_table.data() + static_cast<size_t>(i) * cfg.point_max_neighbors,
                     cfg.point_max_neighbors);
      std::vector<std::vector<double>> rows;
      rows.reserve(raw_idx.size());
      for (int idx : raw_idx) {
        const Eigen::Vector3d rel = raw_positions[idx] - kp;
        rows.push_back({rel.x(), rel.y(), rel.z()});
      }
      pool_rows(rows, cfg.pool, data.data() + static_cast<size_t>(i) * width, 3);
      if (!raw_idx.empty()) table.all_empty[i] = 0;

      if (cfg.use_pseudo) {
        const auto pse_idx =
            unique_row(pse_table.data() + static_cast<size_t>(i) * cfg.point_max_neighbors,
                       cfg.point_max_neighbors);
        rows.clear();
        for (int idx : pse_idx) {
          const PseudoPoint& p = pse_cloud.points[idx];
          rows.push_back({p.x - kp.x(), p.y - kp.y(), p.z - kp.z(), p.r, p.g, p.b});
        }
        std::vector<double> pooled(6);
        pool_rows(rows, cfg.pool, pooled.data(), 6);
        std::copy(pooled.begin(), pooled.end(),
                  data.begin() + static_cast<size_t>(i) * width + 3);
        if (!pse_idx.empty()) table.all_empty[i] = 0;
      }
    }
    parts.push_back(Tensor::from_data({m, width}, std::move(data)));
    table.slices.push_back({"point", offset, width, 3, pw0});
    offset += width;
  }

  for (int k = 0; k < 4; ++k) {
    if (!cfg.use_conv[k]) continue;
    const double radius = cfg.radii[k + 1];
    const auto raw_groups = conv_groups(keypoints.positions, raw_hier.levels[k], radius, cfg);
    for (int i = 0; i < m; ++i) {
      if (!raw_groups[i].empty()) table.all_empty[i] = 0;
    }
    const int rw = raw_hier.level_width(k);
    const int pw = cfg.pseudo_in_conv() ? pse_hier.level_width(k) : 0;
    parts.push_back(nn::group_pool(raw_hier.levels[k].features, raw_groups, cfg.pool));
    if (cfg.pseudo_in_conv()) {
      const auto pse_groups = conv_groups(keypoints.positions, pse_hier.levels[k], radius, cfg);
      for (int i = 0; i < m; ++i) {
        if (!pse_groups[i].empty()) table.all_empty[i] = 0;
      }
      parts.push_back(nn::group_pool(pse_hier.levels[k].features, pse_groups, cfg.pool));
    }
    table.slices.push_back({"conv" + std::to_string(k + 1), offset, rw + pw, rw, pw});
    offset += rw + pw;
  }

  if (parts.empty())
    throw std::invalid_argument("aggregate_keypoint_features: every source is disabled");
  table.pre_features = parts.size() == 1 ? parts[0] : nn::concat(parts, 1);
  table.f_kp = agg_mlp.forward(table.pre_features);
  return table;
}

double BevFeatureMap::cell_norm(int ix, int iy) const {
  const int row = cell_row(ix, iy);
  const int w = features.cols();
  double acc = 0.0;
  for (int c = 0; c < w; ++c) {
    const double v = features.at(row, c);
    acc += v * v;
  }
  return std::sqrt(acc);
}

BevFeatureMap flatten_to_bev(const VoxelFeatureHierarchy& hier) {
  const HierarchyLevel& top = hier.levels.back();
  BevFeatureMap bev;
  const Eigen::Vector3i dims = top.grid.dims();
  bev.nx = dims.x();
  bev.ny = dims.y();
  bev.nz = dims.z();
  bev.channel_width = top.features.cols();
  bev.cell_size = top.grid.voxel_size;
  bev.range_min = top.grid.range_min;

  std::vector<std::pair<int, int>> dst;
  dst.reserve(top.grid.voxels.size());
  for (const auto& v : top.grid.voxels) {
    dst.emplace_back(bev.cell_row(v.index.x(), v.index.y()), v.index.z() * bev.channel_width);
  }
  bev.features =
      nn::scatter_rows(top.features, dst, bev.nx * bev.ny, bev.nz * bev.channel_width);
  return bev;
}

}  // namespace pointfuse
