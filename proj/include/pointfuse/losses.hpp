#pragma once

#include <iosfwd>
#include <vector>

#include "pointfuse/boxes.hpp"
#include "pointfuse/tensor.hpp"

namespace pointfuse {

struct LossBreakdown {
  double l_rpn = 0.0;
  double l_ref = 0.0;
  double l_depth = 0.0;
  double l_as1 = 0.0;
  double l_as2 = 0.0;
  double alpha = 0.5;
  double beta = 0.5;
  double total = 0.0;
};

// Mean over elements of 0.5*e^2/delta (|e| < delta) else |e| - 0.5*delta.
double smooth_l1(const std::vector<double>& pred, const std::vector<double>& target,
                 double delta = 1.0);

// Mean binary cross entropy on logits, stable log-sum-exp form.
double bce(const std::vector<double>& logits, const std::vector<double>& labels);

// total = l_rpn + l_ref + l_depth + alpha*l_as1 + beta*l_as2, accumulated
// strictly left to right. Components must be finite and >= 0.
LossBreakdown compose_total(double l_rpn, double l_ref, double l_depth, double l_as1,
                            double l_as2, double alpha = 0.5, double beta = 0.5);

// Graph twin of compose_total with the identical association order, so the
// forward value matches the scalar version bit for bit.
nn::Tensor compose_total_graph(const nn::Tensor& l_rpn, const nn::Tensor& l_ref,
                               const nn::Tensor& l_depth, const nn::Tensor& l_as1,
                               const nn::Tensor& l_as2, double alpha, double beta);

// Per proposal: index of the nearest ground-truth box if the center distance
// is under factor * that box's diagonal, else -1.
std::vector<int> match_rois(const std::vector<RoI>& proposals, const std::vector<RoI>& gt,
                            double factor = 0.5);

// Shared head supervision: smooth_l1 of the matched rows' residual columns
// against encode_residual(roi, gt) targets, plus bce of the logit column
// against matched/unmatched labels. head_out is n x 8.
nn::Tensor head_loss(const nn::Tensor& head_out, const std::vector<RoI>& rois,
                     const std::vector<RoI>& gt, const std::vector<int>& match, double delta);

// One CSV row per step: step,l_rpn,l_ref,l_depth,l_as1,l_as2,total.
void write_loss_csv_header(std::ostream& out);
void append_loss_csv(std::ostream& out, int step, const LossBreakdown& loss);

}  // namespace pointfuse
