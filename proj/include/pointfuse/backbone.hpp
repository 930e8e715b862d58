#pragma once

#include <array>
#include <string>
#include <vector>

#include "pointfuse/cloud.hpp"
#include "pointfuse/layers.hpp"
#include "pointfuse/sampling.hpp"
#include "pointfuse/tensor.hpp"
#include "pointfuse/voxel.hpp"

namespace pointfuse {

// One resolution level: voxel geometry (centroid rows, counts) plus the
// learned per-voxel features, row i of `features` <-> grid.voxels[i].
struct HierarchyLevel {
  VoxelGrid grid;
  nn::Tensor features;
};

// Four levels; level k voxels are 2^(k-1) times the base voxel size.
struct VoxelFeatureHierarchy {
  std::vector<HierarchyLevel> levels;
  int level_width(int k) const { return levels[k].features.cols(); }
};

// The per-level linear maps of one branch (raw or pseudo).
struct BranchParams {
  std::vector<nn::LinearLayer> level_maps;  // 4 layers
};

// in_width: base voxel feature width (3 for raw xyz, 6 for pseudo xyz+rgb);
// widths: learned feature width per level.
BranchParams make_branch_params(nn::ParamStore& store, const std::string& name, int in_width,
                                const std::array<int, 4>& widths, Rng& rng);

// Level 1 = ReLU(L1(normalized base features)); level k+1 re-bins level-k
// centroids at doubled voxel size (index halving — boundaries align, so this
// equals re-binning the centroids), feature = ReLU(L_{k+1}(unweighted mean of
// merged level-k features)). Throws std::invalid_argument on an empty grid.
VoxelFeatureHierarchy build_hierarchy(const VoxelGrid& grid, const BranchParams& params);

// Hierarchy with the right grid metadata and widths but no voxels, for
// branches whose range captured no points.
VoxelFeatureHierarchy empty_hierarchy(const Eigen::Vector3d& voxel_size,
                                      const Eigen::Vector3d& range_min,
                                      const Eigen::Vector3d& range_max, int in_width,
                                      const std::array<int, 4>& widths);

struct SourceSlice {
  std::string name;  // "point", "conv1".."conv4"
  int offset = 0;    // column offset into the pre-aggregation feature
  int width = 0;     // raw_width + pse_width
  int raw_width = 0;
  int pse_width = 0;
};

struct AggregationConfig {
  std::array<double, 5> radii = {0.4, 0.8, 1.2, 2.4, 4.8};  // point, conv1..4
  int point_max_neighbors = 32;
  int conv_max_neighbors = 16;
  nn::PoolMode pool = nn::PoolMode::kMax;
  bool use_point = true;
  std::array<bool, 4> use_conv = {true, true, true, true};
  bool use_pseudo = true;   // pseudo branch contributes anywhere at all
  bool pseudo_conv = true;  // pseudo features in the conv sources, not just the point source
  bool conv_voxel_query = false;  // default: ball query over level centroids
  int voxel_kernel_radius = 1;

  bool pseudo_in_conv() const { return use_pseudo && pseudo_conv; }
};

// Width of the pre-aggregation concatenation for a source configuration.
int pre_feature_width(const AggregationConfig& cfg, const VoxelFeatureHierarchy& raw_hier,
                      const VoxelFeatureHierarchy& pse_hier);

struct KeypointFeatureTable {
  KeypointSet keypoints;
  nn::Tensor pre_features;          // M x W_pre, sources in slice order
  std::vector<SourceSlice> slices;  // enabled sources only, ascending offset
  nn::Tensor f_kp;                  // M x D_kp, the aggregation MLP output
  std::vector<uint8_t> all_empty;   // keypoints with no neighbor in any source
};

// Per keypoint: the point source pools relative-position features of raw and
// pseudo neighbors (ball query at radii[0]); each conv source pools learned
// level-k voxel features of both branches around the keypoint. The pooled
// vectors concatenate source-major ([raw|pse] within each source) and the MLP
// maps the concatenation to f_kp. Empty neighborhoods pool to zero.
KeypointFeatureTable aggregate_keypoint_features(const KeypointSet& keypoints,
                                                 const VoxelFeatureHierarchy& raw_hier,
                                                 const VoxelFeatureHierarchy& pse_hier,
                                                 const std::vector<Eigen::Vector3d>& raw_positions,
                                                 const PseudoPointCloud& pse_cloud,
                                                 const AggregationConfig& cfg,
                                                 const nn::Mlp& agg_mlp);

// Top-down view of the top hierarchy level: grid over x-y, per-cell channels
// are the z-slots' features stacked ascending, zero where unoccupied.
struct BevFeatureMap {
  int nx = 0, ny = 0, nz = 0;
  int channel_width = 0;  // per-z-slot width; feature rows are nz*channel_width wide
  Eigen::Vector3d cell_size = Eigen::Vector3d::Ones();
  Eigen::Vector3d range_min = Eigen::Vector3d::Zero();
  nn::Tensor features;  // (nx*ny) x (nz*channel_width), row = ix*ny + iy

  int cell_row(int ix, int iy) const { return ix * ny + iy; }
  double cell_norm(int ix, int iy) const;
};

BevFeatureMap flatten_to_bev(const VoxelFeatureHierarchy& hier);

}  // namespace pointfuse
