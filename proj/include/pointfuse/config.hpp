#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "pointfuse/backbone.hpp"
#include "pointfuse/detection.hpp"
#include "pointfuse/scene.hpp"

namespace pointfuse {

enum class FpsSource { kRaw, kUnion };
enum class ProposalSource { kBev, kGtJitter };
enum class OptimizerKind { kGd, kAdam };

// Everything a pipeline run depends on; a config plus a seed determines the
// scene, the model parameters, and every downstream number.
struct PipelineConfig {
  uint64_t seed = 7;
  SceneConfig scene;

  int pseudo_stride = 1;     // pixel subsampling for the pseudo cloud
  int keypoint_count = 2048;
  FpsSource fps_source = FpsSource::kRaw;
  int fps_start = 0;

  double voxel_size = 0.2;
  Eigen::Vector3d range_min{0.0, -20.0, -1.5};
  Eigen::Vector3d range_max{40.0, 20.0, 1.0};
  std::array<int, 4> level_widths = {16, 16, 32, 32};

  AggregationConfig agg;           // sources, radii, pooling, branch toggles
  std::vector<int> agg_hidden = {128};  // MLP hidden widths before d_kp
  int d_kp = 128;
  int d_m = 64;
  bool use_caaf = true;

  ProposalConfig proposal;
  ProposalSource proposal_source = ProposalSource::kBev;
  double gt_jitter = 0.5;

  double match_factor = 0.5;    // proposal-to-box center match, x box diagonal
  double smooth_l1_delta = 1.0;
  double alpha = 0.5;
  double beta = 0.5;

  OptimizerKind optimizer = OptimizerKind::kGd;
  double learning_rate = 0.02;
  int steps = 500;

  void validate() const;  // throws std::invalid_argument with the bad key
  nlohmann::ordered_json to_json() const;

  // "a" = pseudo points without conv-level fusion, "b" = + conv-level
  // pseudo features, "c" = + gated fusion; "-" for other combinations.
  std::string ablation_row() const;
};

// Text config: one `key: value` per line, '#' comments, whitespace-separated
// entries for vector values. Unknown keys and malformed values throw
// std::invalid_argument naming the key.
PipelineConfig parse_pipeline_config(std::istream& in);
PipelineConfig load_pipeline_config(const std::string& path);
void save_pipeline_config(const PipelineConfig& cfg, const std::string& path);

}  // namespace pointfuse
