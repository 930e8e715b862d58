#include "pointfuse/losses.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace pointfuse {

using nn::Tensor;

double smooth_l1(const std::vector<double>& pred, const std::vector<double>& target,
                 double delta) {
  const Tensor p = Tensor::from_data({static_cast<int>(pred.size())}, pred);
  const Tensor t = Tensor::from_data({static_cast<int>(target.size())}, target);
  return nn::smooth_l1_loss(p, t, delta).item();
}

double bce(const std::vector<double>& logits, const std::vector<double>& labels) {
  const Tensor x = Tensor::from_data({static_cast<int>(logits.size())}, logits);
  const Tensor y = Tensor::from_data({static_cast<int>(labels.size())}, labels);
  return nn::bce_with_logits(x, y).item();
}

namespace {

void check_component(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0)
    throw std::invalid_argument(std::string("compose_total: ") + name +
                                " must be finite and >= 0");
}

}  // namespace

LossBreakdown compose_total(double l_rpn, double l_ref, double l_depth, double l_as1,
                            double l_as2, double alpha, double beta) {
  check_component(l_rpn, "l_rpn");
  check_component(l_ref, "l_ref");
  check_component(l_depth, "l_depth");
  check_component(l_as1, "l_as1");
  check_component(l_as2, "l_as2");

  LossBreakdown out;
  out.l_rpn = l_rpn;
  out.l_ref = l_ref;
  out.l_depth = l_depth;
  out.l_as1 = l_as1;
  out.l_as2 = l_as2;
  out.alpha = alpha;
  out.beta = beta;
  double total = l_rpn + l_ref;
  total = total + l_depth;
  total = total + alpha * l_as1;
  total = total + beta * l_as2;
  out.total = total;
  return out;
}

Tensor compose_total_graph(const Tensor& l_rpn, const Tensor& l_ref, const Tensor& l_depth,
                           const Tensor& l_as1, const Tensor& l_as2, double alpha, double beta) {
  Tensor total = nn::add(l_rpn, l_ref);
  total = nn::add(total, l_depth);
  total = nn::add(total, nn::scale(l_as1, alpha));
  total = nn::add(total, nn::scale(l_as2, beta));
  return total;
}

std::vector<int> match_rois(const std::vector<RoI>& proposals, const std::vector<RoI>& gt,
                            double factor) {
  std::vector<int> match(proposals.size(), -1);
  for (size_t i = 0; i < proposals.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t g = 0; g < gt.size(); ++g) {
      const double d = (proposals[i].center - gt[g].center).norm();
      if (d < best && d < factor * gt[g].diagonal()) {
        best = d;
        match[i] = static_cast<int>(g);
      }
    }
  }
  return match;
}

Tensor head_loss(const nn::Tensor& head_out, const std::vector<RoI>& rois,
                 const std::vector<RoI>& gt, const std::vector<int>& match, double delta) {
  const int n = static_cast<int>(rois.size());
  if (head_out.rows() != n || head_out.cols() != 8)
    throw std::invalid_argument("head_loss: head output must be n x 8");
  if (match.size() != rois.size())
    throw std::invalid_argument("head_loss: one match entry per roi required");
  if (n == 0) return Tensor::scalar(0.0);

  std::vector<int> matched_rows;
  std::vector<double> targets;
  std::vector<double> labels(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (match[i] < 0) continue;
    matched_rows.push_back(i);
    labels[i] = 1.0;
    const auto r = encode_residual(rois[i], gt[match[i]]);
    for (int c = 0; c < 7; ++c) targets.push_back(r(c));
  }

  Tensor reg = Tensor::scalar(0.0);
  if (!matched_rows.empty()) {
    const Tensor pred = nn::slice(nn::gather_rows(head_out, matched_rows), 1, 0, 7);
    const Tensor tgt =
        Tensor::from_data({static_cast<int>(matched_rows.size()), 7}, std::move(targets));
    reg = nn::smooth_l1_loss(pred, tgt, delta);
  }
  const Tensor logits = nn::slice(head_out, 1, 7, 1);
  const Tensor lab = Tensor::from_data({n, 1}, std::move(labels));
  return nn::add(reg, nn::bce_with_logits(logits, lab));
}

void write_loss_csv_header(std::ostream& out) {
  out << "step,l_rpn,l_ref,l_depth,l_as1,l_as2,total\n";
}

void append_loss_csv(std::ostream& out, int step, const LossBreakdown& loss) {
  const auto old_precision = out.precision(17);
  out << step << "," << loss.l_rpn << "," << loss.l_ref << "," << loss.l_depth << ","
      << loss.l_as1 << "," << loss.l_as2 << "," << loss.total << "\n";
  out.precision(old_precision);
}

}  // namespace pointfuse
