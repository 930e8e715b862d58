#include "pointfuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pointfuse/depth.hpp"

namespace pointfuse {

namespace {

using nn::Tensor;

// Appends "<name> <seconds>" to the sink on destruction; no-op without one.
class StageTimer {
 public:
  StageTimer(StageTimings* sink, const char* name) : sink_(sink), name_(name) {
    if (sink_) start_ = std::chrono::steady_clock::now();
  }
  ~StageTimer() {
    if (sink_) {
      const auto end = std::chrono::steady_clock::now();
      sink_->emplace_back(name_, std::chrono::duration<double>(end - start_).count());
    }
  }

 private:
  StageTimings* sink_;
  const char* name_;
  std::chrono::steady_clock::time_point start_;
};

template <typename F>
decltype(auto) stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

// Fork streams: 0-9 model components; the scene generator itself uses the
// root stream (boxes) and its own fork 1 (lidar); 2 seeds the model, 3 the
// proposal jitter.
constexpr uint64_t kModelStream = 2;
constexpr uint64_t kJitterStream = 3;

Eigen::MatrixXd raw_matrix(const std::vector<Eigen::Vector3d>& points) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = points[i].transpose();
  return m;
}

Eigen::MatrixXd pseudo_matrix(const PseudoPointCloud& cloud) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(cloud.points.size()), 6);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const PseudoPoint& p = cloud.points[i];
    m.row(i) << p.x, p.y, p.z, p.r, p.g, p.b;
  }
  return m;
}

double value_mean(const Tensor& t) {
  if (!t.defined() || t.numel() == 0) return 0.0;
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc / static_cast<double>(t.numel());
}

nlohmann::ordered_json make_metrics(const PipelineConfig& cfg, const PipelineCache& cache,
                                    const DetectionModel& model, const ForwardResult& fwd) {
  nlohmann::ordered_json j;
  j["config"] = cfg.to_json();
  j["ablation_row"] = cfg.ablation_row();

  nlohmann::ordered_json counts;
  counts["raw_points"] = cache.raw_positions.size();
  counts["pseudo_points"] = cache.pseudo.points.size();
  counts["depth_valid_cells"] = cache.sparse.valid_count;
  counts["raw_in_range"] = cache.raw_grid.total_count();
  counts["pse_in_range"] = cache.pse_grid.total_count();
  counts["raw_level_voxels"] = fwd.raw_level_voxels;
  counts["pse_level_voxels"] = fwd.pse_level_voxels;
  counts["keypoints"] = cache.keypoints.positions.size();
  counts["proposals"] = fwd.proposals.rois.size();
  counts["matched_proposals"] =
      std::count_if(fwd.matches.begin(), fwd.matches.end(), [](int m) { return m >= 0; });
  counts["parameters"] = model.store.parameter_count();
  j["counts"] = counts;

  nlohmann::ordered_json feat;
  feat["pre_width"] = model.pre_width;
  feat["raw_columns"] = model.raw_columns;
  feat["pse_columns"] = model.pse_columns;
  feat["d_kp"] = cfg.d_kp;
  feat["d_m"] = cfg.d_m;
  nlohmann::ordered_json slices = nlohmann::ordered_json::array();
  for (const auto& s : fwd.slices) {
    nlohmann::ordered_json row;
    row["name"] = s.name;
    row["offset"] = s.offset;
    row["width"] = s.width;
    row["raw_width"] = s.raw_width;
    row["pse_width"] = s.pse_width;
    slices.push_back(row);
  }
  feat["slices"] = slices;
  j["features"] = feat;

  j["depth_mae"] = cache.depth_mae;

  nlohmann::ordered_json losses;
  losses["l_rpn"] = fwd.losses.l_rpn;
  losses["l_ref"] = fwd.losses.l_ref;
  losses["l_depth"] = fwd.losses.l_depth;
  losses["l_as1"] = fwd.losses.l_as1;
  losses["l_as2"] = fwd.losses.l_as2;
  losses["alpha"] = fwd.losses.alpha;
  losses["beta"] = fwd.losses.beta;
  losses["total"] = fwd.losses.total;
  j["losses"] = losses;

  nlohmann::ordered_json fusion;
  fusion["gated"] = fwd.gated;
  fusion["w_raw_mean"] = fwd.w_raw_mean;
  fusion["w_pse_mean"] = fwd.w_pse_mean;
  j["fusion"] = fusion;

  nlohmann::ordered_json detections = nlohmann::ordered_json::array();
  for (size_t i = 0; i < fwd.refinement.boxes.size(); ++i) {
    const RoI& b = fwd.refinement.boxes[i];
    detections.push_back({b.center.x(), b.center.y(), b.center.z(), b.size.x(), b.size.y(),
                          b.size.z(), b.yaw, fwd.refinement.confidences[i]});
  }
  j["detections"] = detections;
  j["gt_confidence"] = fwd.gt_confidence;
  return j;
}

}  // namespace

DetectionModel build_model(const PipelineConfig& cfg, Rng rng) {
  cfg.validate();
  DetectionModel m;
  const AggregationConfig& agg = cfg.agg;
  m.raw_columns = agg.use_point ? 3 : 0;
  m.pse_columns = agg.use_point && agg.use_pseudo ? 6 : 0;
  for (int k = 0; k < 4; ++k) {
    if (!agg.use_conv[k]) continue;
    m.raw_columns += cfg.level_widths[k];
    if (agg.pseudo_in_conv()) m.pse_columns += cfg.level_widths[k];
  }
  m.pre_width = m.raw_columns + m.pse_columns;

  const double top_size = cfg.voxel_size * 8.0;  // level 4 of the hierarchy
  const int nz = static_cast<int>(std::ceil((cfg.range_max.z() - cfg.range_min.z()) / top_size));
  m.bev_width = nz * cfg.level_widths[3];

  Rng r_raw = rng.fork(0);
  m.raw_branch = make_branch_params(m.store, "raw", 3, cfg.level_widths, r_raw);
  if (agg.use_pseudo) {
    Rng r_pse = rng.fork(1);
    m.pse_branch = make_branch_params(m.store, "pse", 6, cfg.level_widths, r_pse);
  }

  std::vector<int> agg_widths{m.pre_width};
  agg_widths.insert(agg_widths.end(), cfg.agg_hidden.begin(), cfg.agg_hidden.end());
  agg_widths.push_back(cfg.d_kp);
  Rng r_agg = rng.fork(2);
  m.agg_mlp = nn::Mlp(m.store, "agg", agg_widths, r_agg);

  Rng r_proj_raw = rng.fork(3);
  m.proj_raw = nn::LinearLayer(m.store, "proj_raw", m.raw_columns, cfg.d_m, r_proj_raw);
  if (m.pse_columns > 0) {
    Rng r_proj_pse = rng.fork(4);
    m.proj_pse = nn::LinearLayer(m.store, "proj_pse", m.pse_columns, cfg.d_m, r_proj_pse);
  }

  Rng r_caaf = rng.fork(5);
  m.caaf_fc = nn::LinearLayer(m.store, "caaf_fc", 2 * cfg.d_m, 2 * cfg.d_m, r_caaf);
  Rng r_refine = rng.fork(6);
  m.refine_head = nn::Mlp(m.store, "refine", {2 * cfg.d_m, 64, 8}, r_refine);
  Rng r_aux_raw = rng.fork(7);
  m.aux_raw = nn::LinearLayer(m.store, "aux_raw", cfg.d_m, 8, r_aux_raw);
  Rng r_aux_pse = rng.fork(8);
  m.aux_pse = nn::LinearLayer(m.store, "aux_pse", cfg.d_m, 8, r_aux_pse);
  Rng r_rpn = rng.fork(9);
  m.rpn_head = nn::LinearLayer(m.store, "rpn", m.bev_width, 8, r_rpn);
  return m;
}

DetectionModel build_model(const PipelineConfig& cfg) {
  return build_model(cfg, Rng(cfg.seed).fork(kModelStream));
}

PipelineCache prepare_inputs(const PipelineConfig& cfg, const SyntheticScene& scene,
                             StageTimings* timings) {
  cfg.validate();
  PipelineCache cache;
  cache.scene = scene;

  {
    StageTimer t(timings, "project");
    stage("project", [&] {
      const auto projected = project_points(scene.raw_cloud, scene.calib);
      std::vector<PixelDepthSample> samples;
      samples.reserve(projected.size());
      for (const auto& p : projected) samples.push_back(p.px);
      cache.sparse = rasterize_depth(samples, scene.calib.width, scene.calib.height);
    });
  }

  if (cfg.agg.use_pseudo && cache.sparse.valid_count > 0) {
    {
      StageTimer t(timings, "complete");
      stage("complete", [&] { cache.dense = complete_depth(scene.image, cache.sparse); });
    }
    if (cache.dense.width == scene.gt_depth.width &&
        cache.dense.height == scene.gt_depth.height && !cache.dense.depth.empty()) {
      double acc = 0.0;
      for (size_t i = 0; i < cache.dense.depth.size(); ++i)
        acc += std::abs(cache.dense.depth[i] - scene.gt_depth.depth[i]);
      cache.depth_mae = acc / static_cast<double>(cache.dense.depth.size());
    }
    {
      StageTimer t(timings, "pseudo");
      stage("pseudo", [&] {
        cache.pseudo = build_pseudo_cloud(scene.image, cache.dense, scene.calib,
                                          cfg.pseudo_stride);
      });
    }
  }

  {
    StageTimer t(timings, "voxelize");
    stage("voxelize", [&] {
      cache.raw_positions = scene.raw_cloud.points;
      const Eigen::Vector3d size = Eigen::Vector3d::Constant(cfg.voxel_size);
      cache.raw_grid =
          voxelize(raw_matrix(cache.raw_positions), size, cfg.range_min, cfg.range_max);
      cache.pse_grid = voxelize(pseudo_matrix(cache.pseudo), size, cfg.range_min, cfg.range_max);
    });
  }

  {
    StageTimer t(timings, "keypoints");
    stage("keypoints", [&] {
      std::vector<Eigen::Vector3d> source = cache.raw_positions;
      if (cfg.fps_source == FpsSource::kUnion) {
        source.reserve(source.size() + cache.pseudo.points.size());
        for (const auto& p : cache.pseudo.points) source.emplace_back(p.x, p.y, p.z);
      }
      if (!source.empty()) {
        const int start = cfg.fps_start < static_cast<int>(source.size()) ? cfg.fps_start : 0;
        cache.keypoints = farthest_point_sample(source, cfg.keypoint_count, start);
      }
    });
  }
  return cache;
}

ForwardResult forward_pass(const DetectionModel& model, const PipelineCache& cache,
                           const PipelineConfig& cfg, const ProposalSet* fixed_proposals,
                           const std::vector<int>* fixed_matches, StageTimings* timings) {
  ForwardResult out;
  const std::vector<RoI>& gt = cache.scene.boxes;
  const Eigen::Vector3d voxel_size = Eigen::Vector3d::Constant(cfg.voxel_size);

  VoxelFeatureHierarchy raw_hier, pse_hier;
  {
    StageTimer t(timings, "hierarchy");
    stage("hierarchy", [&] {
      raw_hier = cache.raw_grid.voxels.empty()
                     ? empty_hierarchy(voxel_size, cfg.range_min, cfg.range_max, 3,
                                       cfg.level_widths)
                     : build_hierarchy(cache.raw_grid, model.raw_branch);
      const bool need_pse = cfg.agg.pseudo_in_conv() && !cache.pse_grid.voxels.empty();
      pse_hier = need_pse ? build_hierarchy(cache.pse_grid, *model.pse_branch)
                          : empty_hierarchy(voxel_size, cfg.range_min, cfg.range_max, 6,
                                            cfg.level_widths);
    });
  }
  for (int k = 0; k < 4; ++k) {
    out.raw_level_voxels.push_back(static_cast<int>(raw_hier.levels[k].grid.voxels.size()));
    out.pse_level_voxels.push_back(static_cast<int>(pse_hier.levels[k].grid.voxels.size()));
  }

  BevFeatureMap bev;
  {
    StageTimer t(timings, "bev");
    stage("bev", [&] { bev = flatten_to_bev(raw_hier); });
  }

  {
    StageTimer t(timings, "proposals");
    stage("proposals", [&] {
      if (fixed_proposals) {
        out.proposals = *fixed_proposals;
      } else if (cfg.proposal_source == ProposalSource::kBev) {
        out.proposals = propose_rois(bev, cfg.proposal);
      } else {
        Rng jitter_rng = Rng(cfg.seed).fork(kJitterStream);
        out.proposals = propose_from_gt(gt, bev, cfg.gt_jitter, jitter_rng);
      }
      out.matches =
          fixed_matches ? *fixed_matches : match_rois(out.proposals.rois, gt, cfg.match_factor);
    });
  }

  Tensor l_rpn_g;
  {
    StageTimer t(timings, "rpn");
    stage("rpn", [&] {
      const Tensor cells = nn::gather_rows(bev.features, out.proposals.cell_rows);
      const Tensor rpn_out = model.rpn_head.forward(cells);
      l_rpn_g = head_loss(rpn_out, out.proposals.rois, gt, out.matches, cfg.smooth_l1_delta);
    });
  }

  Tensor l_ref_g, l_as1_g, l_as2_g;
  if (!cache.keypoints.positions.empty()) {
    KeypointFeatureTable table;
    {
      StageTimer t(timings, "aggregate");
      stage("aggregate", [&] {
        table = aggregate_keypoint_features(cache.keypoints, raw_hier, pse_hier,
                                            cache.raw_positions, cache.pseudo, cfg.agg,
                                            model.agg_mlp);
      });
    }
    out.slices = table.slices;

    Tensor f_raw, f_pse;
    {
      StageTimer t(timings, "roi_pool");
      stage("roi_pool", [&] {
        f_raw = pool_roi_features(out.proposals.rois, table, Species::kRaw, model.proj_raw);
        f_pse = model.proj_pse.has_value()
                    ? pool_roi_features(out.proposals.rois, table, Species::kPse, *model.proj_pse)
                    : Tensor::zeros({static_cast<int>(out.proposals.rois.size()), cfg.d_m});
      });
    }

    Tensor fused;
    {
      StageTimer t(timings, "fusion");
      stage("fusion", [&] {
        const RoIFeaturePair pair{f_raw, f_pse};
        if (cfg.use_caaf) {
          const CaafResult caaf = caaf_fuse(pair, model.caaf_fc);
          fused = caaf.fused;
          out.gated = true;
          out.w_raw_mean = value_mean(caaf.w_raw);
          out.w_pse_mean = value_mean(caaf.w_pse);
        } else {
          fused = plain_concat_fuse(pair);
        }
      });
    }

    {
      StageTimer t(timings, "refine");
      stage("refine", [&] {
        out.refinement = refine_boxes(fused, out.proposals.rois, model.refine_head);
        l_ref_g = head_loss(out.refinement.output, out.proposals.rois, gt, out.matches,
                            cfg.smooth_l1_delta);
        l_as1_g = head_loss(model.aux_raw.forward(f_raw), out.proposals.rois, gt, out.matches,
                            cfg.smooth_l1_delta);
        l_as2_g = head_loss(model.aux_pse.forward(f_pse), out.proposals.rois, gt, out.matches,
                            cfg.smooth_l1_delta);
      });
    }
  } else {
    l_ref_g = Tensor::scalar(0.0);
    l_as1_g = Tensor::scalar(0.0);
    l_as2_g = Tensor::scalar(0.0);
  }

  // The classical completer carries no parameters, so depth supervision is a
  // constant zero in the composition; the completion error itself is reported
  // in the metrics record.
  const Tensor l_depth_g = Tensor::scalar(0.0);

  {
    StageTimer t(timings, "losses");
    stage("losses", [&] {
      out.total = compose_total_graph(l_rpn_g, l_ref_g, l_depth_g, l_as1_g, l_as2_g, cfg.alpha,
                                      cfg.beta);
      out.losses = compose_total(l_rpn_g.item(), l_ref_g.item(), l_depth_g.item(), l_as1_g.item(),
                                 l_as2_g.item(), cfg.alpha, cfg.beta);
    });
  }

  out.gt_confidence.assign(gt.size(), -1.0);
  for (size_t i = 0; i < out.refinement.confidences.size(); ++i) {
    const int g = i < out.matches.size() ? out.matches[i] : -1;
    if (g >= 0)
      out.gt_confidence[g] = std::max(out.gt_confidence[g], out.refinement.confidences[i]);
  }
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const SyntheticScene& scene) {
  PipelineResult result;
  PipelineCache cache = prepare_inputs(cfg, scene, &result.timings);
  DetectionModel model =
      stage("model", [&] { return build_model(cfg); });
  result.forward = forward_pass(model, cache, cfg, nullptr, nullptr, &result.timings);
  result.metrics = make_metrics(cfg, cache, model, result.forward);
  return result;
}

OverfitResult overfit_test(const PipelineConfig& cfg, const SyntheticScene& scene, int steps) {
  if (scene.boxes.empty()) throw PipelineError("overfit", "scene has no ground-truth boxes");
  if (steps < 0) throw PipelineError("overfit", "steps must be >= 0");

  PipelineCache cache = prepare_inputs(cfg, scene);
  DetectionModel model =
      stage("model", [&] { return build_model(cfg); });

  OverfitResult result;
  std::optional<ProposalSet> frozen;
  std::vector<int> frozen_matches;
  ForwardResult last;
  for (int step = 0; step <= steps; ++step) {
    last = forward_pass(model, cache, cfg, frozen ? &*frozen : nullptr,
                        frozen ? &frozen_matches : nullptr);
    if (!frozen) {
      frozen = last.proposals;
      frozen_matches = last.matches;
    }
    result.trajectory.push_back(last.losses);
    if (!(last.losses.total <= 1e6))
      throw PipelineError("overfit", "diverged at step " + std::to_string(step) + ", total = " +
                                         std::to_string(last.losses.total));
    if (step == steps) break;
    model.store.zero_grad();
    nn::backward(last.total);
    if (cfg.optimizer == OptimizerKind::kGd)
      model.store.sgd_step(cfg.learning_rate);
    else
      model.store.adam_step(cfg.learning_rate);
  }

  result.final_gt_confidence = last.gt_confidence;
  result.final_refinement = last.refinement;
  result.metrics = make_metrics(cfg, cache, model, last);
  nlohmann::ordered_json overfit;
  overfit["steps"] = steps;
  overfit["initial_total"] = result.trajectory.front().total;
  overfit["final_total"] = result.trajectory.back().total;
  overfit["ratio"] = result.trajectory.front().total > 0.0
                         ? result.trajectory.back().total / result.trajectory.front().total
                         : 0.0;
  result.metrics["overfit"] = overfit;
  return result;
}

}  // namespace pointfuse
