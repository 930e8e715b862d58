#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pointfuse/config.hpp"
#include "pointfuse/losses.hpp"
#include "pointfuse/scene.hpp"

namespace pointfuse {

// Stage-tagged failure; what() reads "<stage>: <cause>".
struct PipelineError : public std::runtime_error {
  PipelineError(std::string stage_, const std::string& cause)
      : std::runtime_error(stage_ + ": " + cause), stage(std::move(stage_)) {}
  std::string stage;
};

// All learnable parameters, created in a fixed order from per-component
// random streams so a toggle leaves unrelated initializations untouched.
struct DetectionModel {
  nn::ParamStore store;
  BranchParams raw_branch;
  std::optional<BranchParams> pse_branch;  // absent when the pseudo branch is off
  nn::Mlp agg_mlp;                         // W_pre -> ... -> d_kp
  nn::LinearLayer proj_raw;                // raw slice columns -> d_m
  std::optional<nn::LinearLayer> proj_pse;
  nn::LinearLayer caaf_fc;                 // 2*d_m -> 2*d_m
  nn::Mlp refine_head;                     // 2*d_m -> 64 -> 8
  nn::LinearLayer aux_raw;                 // d_m -> 8
  nn::LinearLayer aux_pse;
  nn::LinearLayer rpn_head;                // BEV row width -> 8

  int raw_columns = 0;  // species slice widths implied by the config
  int pse_columns = 0;
  int pre_width = 0;
  int bev_width = 0;
};

DetectionModel build_model(const PipelineConfig& cfg, Rng rng);
DetectionModel build_model(const PipelineConfig& cfg);  // canonical stream from cfg.seed

// Everything derived from the scene that the parameters cannot change:
// depth products, clouds, base voxel grids, keypoints.
struct PipelineCache {
  SyntheticScene scene;
  SparseDepthMap sparse;
  DenseDepthMap dense;     // width 0 when the pseudo branch is off
  double depth_mae = -1.0; // dense vs. ground truth; -1 when unavailable
  PseudoPointCloud pseudo;
  std::vector<Eigen::Vector3d> raw_positions;
  VoxelGrid raw_grid;
  VoxelGrid pse_grid;
  KeypointSet keypoints;
};

using StageTimings = std::vector<std::pair<std::string, double>>;

PipelineCache prepare_inputs(const PipelineConfig& cfg, const SyntheticScene& scene,
                             StageTimings* timings = nullptr);

// One differentiable pass; `total` is the live graph root for backward.
struct ForwardResult {
  LossBreakdown losses;
  nn::Tensor total;
  ProposalSet proposals;
  std::vector<int> matches;            // proposal -> gt index or -1
  RefinementResult refinement;
  std::vector<double> gt_confidence;   // per gt box: best matched confidence, -1 if none
  std::vector<SourceSlice> slices;
  std::vector<int> raw_level_voxels;
  std::vector<int> pse_level_voxels;
  double w_raw_mean = 0.0;             // gate means; 0 when fusion is ungated
  double w_pse_mean = 0.0;
  bool gated = false;
};

// fixed_proposals/fixed_matches pin the proposal stage (used by the overfit
// loop so the box set under supervision cannot drift between steps).
ForwardResult forward_pass(const DetectionModel& model, const PipelineCache& cache,
                           const PipelineConfig& cfg,
                           const ProposalSet* fixed_proposals = nullptr,
                           const std::vector<int>* fixed_matches = nullptr,
                           StageTimings* timings = nullptr);

struct PipelineResult {
  nlohmann::ordered_json metrics;  // deterministic record: config echo, counts, losses, boxes
  StageTimings timings;            // wall-clock seconds per stage, kept out of the record
  ForwardResult forward;
};

PipelineResult run_pipeline(const PipelineConfig& cfg, const SyntheticScene& scene);

struct OverfitResult {
  std::vector<LossBreakdown> trajectory;  // steps+1 rows; row 0 is the initial loss
  nlohmann::ordered_json metrics;         // final-state record plus trajectory endpoints
  std::vector<double> final_gt_confidence;
  RefinementResult final_refinement;
};

// Full-parameter descent on the total loss over one frozen scene; aborts via
// PipelineError("overfit", ...) if the total exceeds 1e6.
OverfitResult overfit_test(const PipelineConfig& cfg, const SyntheticScene& scene, int steps);

}  // namespace pointfuse
