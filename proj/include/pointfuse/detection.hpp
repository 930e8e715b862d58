#pragma once

#include <vector>

#include "pointfuse/backbone.hpp"
#include "pointfuse/boxes.hpp"
#include "pointfuse/layers.hpp"
#include "pointfuse/random.hpp"

namespace pointfuse {

struct ProposalConfig {
  int top_n = 8;
  Eigen::Vector3d nominal_size{4.0, 1.8, 1.6};
  double nominal_z = -0.8;
};

struct ProposalSet {
  std::vector<RoI> rois;
  std::vector<int> cell_rows;  // BEV feature row backing each proposal
};

// Deterministic proposal stub: local maxima of the per-cell activation norm
// (>= all 8 neighbors, > 0), strongest first, ties by (row, col); each peak
// becomes an axis-aligned box of the nominal size centered on its cell.
// An all-zero map proposes nothing.
ProposalSet propose_rois(const BevFeatureMap& bev, const ProposalConfig& cfg);

// Test-mode alternative: ground-truth boxes with uniform center jitter; cell
// rows point at the BEV cell under each jittered center.
ProposalSet propose_from_gt(const std::vector<RoI>& gt, const BevFeatureMap& bev, double jitter,
                            Rng& rng);

enum class Species { kRaw, kPse };

// Per RoI: max-pool of the species' provenance slice of the keypoint features
// over keypoints inside the (yaw-rotated, closed) box, then the species
// projection to D_m. Boxes containing no keypoint yield zero rows.
nn::Tensor pool_roi_features(const std::vector<RoI>& rois, const KeypointFeatureTable& table,
                             Species species, const nn::LinearLayer& projection);

struct RoIFeaturePair {
  nn::Tensor f_raw;  // n x D_m
  nn::Tensor f_pse;  // n x D_m
};

struct CaafResult {
  nn::Tensor fused;  // n x 2*D_m
  nn::Tensor w_raw;  // n x D_m gates, strictly in (0,1)
  nn::Tensor w_pse;
};

// g = sigmoid(FC(CONCAT(F_raw, F_pse))) split into (W_raw, W_pse);
// fused = CONCAT(W_raw .* F_raw, W_pse .* F_pse).
CaafResult caaf_fuse(const RoIFeaturePair& pair, const nn::LinearLayer& fc);

// Ablation wiring when the gated fusion is disabled.
nn::Tensor plain_concat_fuse(const RoIFeaturePair& pair);

struct RefinementResult {
  std::vector<RoI> boxes;
  std::vector<double> confidences;
  nn::Tensor output;  // n x 8 raw head output: 7 box residuals + 1 logit
};

// Applies the head's residuals (additive center, log-ratio size, additive
// wrapped yaw) to each RoI; confidence = sigmoid of the logit column.
RefinementResult refine_boxes(const nn::Tensor& fused, const std::vector<RoI>& rois,
                              const nn::Mlp& head);

}  // namespace pointfuse
