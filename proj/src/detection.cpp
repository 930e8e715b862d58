#include "pointfuse/detection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pointfuse {

using nn::Tensor;

ProposalSet propose_rois(const BevFeatureMap& bev, const ProposalConfig& cfg) {
  if (cfg.top_n < 1) throw std::invalid_argument("propose_rois: top_n must be >= 1");

  struct Peak {
    double norm;
    int ix, iy;
  };
  std::vector<Peak> peaks;
  std::vector<double> norms(static_cast<size_t>(bev.nx) * bev.ny);
  for (int ix = 0; ix < bev.nx; ++ix)
    for (int iy = 0; iy < bev.ny; ++iy)
      norms[static_cast<size_t>(ix) * bev.ny + iy] = bev.cell_norm(ix, iy);

  for (int ix = 0; ix < bev.nx; ++ix) {
    for (int iy = 0; iy < bev.ny; ++iy) {
      const double n = norms[static_cast<size_t>(ix) * bev.ny + iy];
      if (!(n > 0.0)) continue;
      bool is_peak = true;
      for (int dx = -1; dx <= 1 && is_peak; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          if (dx == 0 && dy == 0) continue;
          const int jx = ix + dx, jy = iy + dy;
          if (jx < 0 || jx >= bev.nx || jy < 0 || jy >= bev.ny) continue;
          if (norms[static_cast<size_t>(jx) * bev.ny + jy] > n) {
            is_peak = false;
            break;
          }
        }
      }
      if (is_peak) peaks.push_back({n, ix, iy});
    }
  }

  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.norm != b.norm) return a.norm > b.norm;
    if (a.ix != b.ix) return a.ix < b.ix;
    return a.iy < b.iy;
  });
  if (static_cast<int>(peaks.size()) > cfg.top_n) peaks.resize(cfg.top_n);

  ProposalSet out;
  for (const auto& p : peaks) {
    RoI roi;
    roi.center.x() = bev.range_min.x() + (p.ix + 0.5) * bev.cell_size.x();
    roi.center.y() = bev.range_min.y() + (p.iy + 0.5) * bev.cell_size.y();
    roi.center.z() = cfg.nominal_z;
    roi.size = cfg.nominal_size;
    roi.yaw = 0.0;
    roi.score = p.norm;
    out.rois.push_back(roi);
    out.cell_rows.push_back(bev.cell_row(p.ix, p.iy));
  }
  return out;
}

ProposalSet propose_from_gt(const std::vector<RoI>& gt, const BevFeatureMap& bev, double jitter,
                            Rng& rng) {
  ProposalSet out;
  for (const auto& box : gt) {
    RoI roi = box;
    roi.center.x() += rng.uniform(-jitter, jitter);
    roi.center.y() += rng.uniform(-jitter, jitter);
    roi.center.z() += rng.uniform(-jitter, jitter);
    roi.score = 1.0;
    int ix = static_cast<int>(std::floor((roi.center.x() - bev.range_min.x()) / bev.cell_size.x()));
    int iy = static_cast<int>(std::floor((roi.center.y() - bev.range_min.y()) / bev.cell_size.y()));
    ix = std::clamp(ix, 0, bev.nx - 1);
    iy = std::clamp(iy, 0, bev.ny - 1);
    out.rois.push_back(roi);
    out.cell_rows.push_back(bev.cell_row(ix, iy));
  }
  return out;
}

namespace {

// Columns of the species' provenance channels, in slice order.
Tensor species_columns(const KeypointFeatureTable& table, Species species) {
  std::vector<Tensor> parts;
  for (const auto& s : table.slices) {
    const int start = species == Species::kRaw ? s.offset : s.offset + s.raw_width;
    const int len = species == Species::kRaw ? s.raw_width : s.pse_width;
    if (len > 0) parts.push_back(nn::slice(table.pre_features, 1, start, len));
  }
  if (parts.empty()) throw std::invalid_argument("pool_roi_features: species has no channels");
  return parts.size() == 1 ? parts[0] : nn::concat(parts, 1);
}

}  // namespace

Tensor pool_roi_features(const std::vector<RoI>& rois, const KeypointFeatureTable& table,
                         Species species, const nn::LinearLayer& projection) {
  const int n = static_cast<int>(rois.size());
  const Tensor columns = species_columns(table, species);
  if (projection.in_width() != columns.cols())
    throw std::invalid_argument("pool_roi_features: projection width mismatch");

  std::vector<std::vector<int>> groups(n);
  std::vector<double> occupied(static_cast<size_t>(n) * projection.out_width(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (size_t k = 0; k < table.keypoints.positions.size(); ++k) {
      if (rois[i].contains(table.keypoints.positions[k])) groups[i].push_back(static_cast<int>(k));
    }
    if (!groups[i].empty()) {
      std::fill(occupied.begin() + static_cast<size_t>(i) * projection.out_width(),
                occupied.begin() + static_cast<size_t>(i + 1) * projection.out_width(), 1.0);
    }
  }

  const Tensor pooled = nn::group_pool(columns, groups, nn::PoolMode::kMax);
  const Tensor projected = projection.forward(pooled);
  // Empty boxes stay zero even though the projection has a bias.
  const Tensor mask = Tensor::from_data({n, projection.out_width()}, std::move(occupied));
  return nn::mul(projected, mask);
}

CaafResult caaf_fuse(const RoIFeaturePair& pair, const nn::LinearLayer& fc) {
  if (pair.f_raw.shape() != pair.f_pse.shape())
    throw std::invalid_argument("caaf_fuse: feature pair shapes differ");
  const int dm = pair.f_raw.cols();
  if (fc.in_width() != 2 * dm || fc.out_width() != 2 * dm)
    throw std::invalid_argument("caaf_fuse: FC must be 2*D_m -> 2*D_m");

  const Tensor joint = nn::concat({pair.f_raw, pair.f_pse}, 1);
  const Tensor gates = nn::sigmoid(fc.forward(joint));
  CaafResult out;
  out.w_raw = nn::slice(gates, 1, 0, dm);
  out.w_pse = nn::slice(gates, 1, dm, dm);
  out.fused = nn::concat({nn::mul(out.w_raw, pair.f_raw), nn::mul(out.w_pse, pair.f_pse)}, 1);
  return out;
}

Tensor plain_concat_fuse(const RoIFeaturePair& pair) {
  if (pair.f_raw.shape() != pair.f_pse.shape())
    throw std::invalid_argument("plain_concat_fuse: feature pair shapes differ");
  return nn::concat({pair.f_raw, pair.f_pse}, 1);
}

RefinementResult refine_boxes(const Tensor& fused, const std::vector<RoI>& rois,
                              const nn::Mlp& head) {
  const int n = static_cast<int>(rois.size());
  if (fused.rows() != n) throw std::invalid_argument("refine_boxes: row count mismatch");
  if (head.out_width() != 8)
    throw std::invalid_argument("refine_boxes: head must emit 7 residuals + 1 logit");

  RefinementResult out;
  out.output = head.forward(fused);
  out.boxes.reserve(n);
  out.confidences.reserve(n);
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix<double, 7, 1> r;
    for (int c = 0; c < 7; ++c) r(c) = out.output.at(i, c);
    RoI refined = apply_residual(rois[i], r);
    refined.score = rois[i].score;
    out.boxes.push_back(refined);
    out.confidences.push_back(nn::sigmoid_value(out.output.at(i, 7)));
  }
  return out;
}

}  // namespace pointfuse
