#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pointfuse/config.hpp"
#include "pointfuse/gradcheck.hpp"
#include "pointfuse/pipeline.hpp"

using namespace pointfuse;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pointfuse_pipe_" + name)).string();
}

// Scaled-down run: small frame, few keypoints, narrow layers.
PipelineConfig tiny() {
  PipelineConfig cfg;
  cfg.scene.image_width = 48;
  cfg.scene.image_height = 32;
  cfg.scene.fx = cfg.scene.fy = 40.0;
  cfg.scene.cx = 24.0;
  cfg.scene.cy = 16.0;
  cfg.pseudo_stride = 2;
  cfg.keypoint_count = 48;
  cfg.voxel_size = 0.4;
  cfg.level_widths = {8, 8, 8, 8};
  cfg.agg_hidden = {16};
  cfg.d_kp = 16;
  cfg.d_m = 8;
  cfg.validate();
  return cfg;
}

PipelineConfig micro() {
  PipelineConfig cfg = tiny();
  cfg.scene.image_width = 32;
  cfg.scene.image_height = 24;
  cfg.scene.fx = cfg.scene.fy = 30.0;
  cfg.scene.cx = 16.0;
  cfg.scene.cy = 12.0;
  cfg.keypoint_count = 24;
  cfg.voxel_size = 0.5;
  cfg.level_widths = {4, 4, 4, 4};
  cfg.agg_hidden = {8};
  cfg.d_kp = 8;
  cfg.d_m = 4;
  cfg.proposal_source = ProposalSource::kGtJitter;
  cfg.validate();
  return cfg;
}

bool throws_mentioning(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  try {
    parse_pipeline_config(in);
  } catch (const std::invalid_argument& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("config text round trip preserves every field") {
  PipelineConfig cfg;
  cfg.seed = 123;
  cfg.scene.num_boxes = 3;
  cfg.scene.sensor_height = 1.25;
  cfg.scene.wall_distance = 60.0;
  cfg.scene.image_width = 80;
  cfg.scene.image_height = 50;
  cfg.scene.fx = 64.5;
  cfg.scene.fy = 63.25;
  cfg.scene.cx = 40.125;
  cfg.scene.cy = 25.5;
  cfg.scene.lidar_pattern = LidarPattern::kAngular;
  cfg.scene.lidar_stride = 3;
  cfg.scene.az_min_deg = -25.0;
  cfg.scene.az_max_deg = 20.0;
  cfg.scene.az_steps = 50;
  cfg.scene.elev_min_deg = -15.0;
  cfg.scene.elev_max_deg = 5.0;
  cfg.scene.elev_steps = 12;
  cfg.scene.box_size = {3.5, 1.5, 1.25};
  cfg.scene.box_x_min = 6.0;
  cfg.scene.box_x_max = 30.0;
  cfg.scene.box_y_frac = 0.3;
  cfg.scene.box_yaw_max = 0.4;
  cfg.scene.noise_sigma = 0.03125;
  cfg.scene.dropout = 0.25;
  cfg.pseudo_stride = 4;
  cfg.keypoint_count = 96;
  cfg.fps_source = FpsSource::kUnion;
  cfg.fps_start = 5;
  cfg.voxel_size = 0.25;
  cfg.range_min = {0.0, -10.0, -1.5};
  cfg.range_max = {30.0, 10.0, 1.25};
  cfg.level_widths = {4, 6, 8, 10};
  cfg.agg.radii = {0.5, 1.0, 2.0, 3.0, 4.0};
  cfg.agg.point_max_neighbors = 8;
  cfg.agg.conv_max_neighbors = 12;
  cfg.agg.conv_voxel_query = true;
  cfg.agg.voxel_kernel_radius = 2;
  cfg.agg.pool = nn::PoolMode::kAvg;
  cfg.agg.use_point = true;
  cfg.agg.use_conv = {true, false, true, true};
  cfg.agg.use_pseudo = false;
  cfg.agg.pseudo_conv = false;
  cfg.agg_hidden = {24, 12};
  cfg.d_kp = 20;
  cfg.d_m = 10;
  cfg.use_caaf = false;
  cfg.proposal.top_n = 5;
  cfg.proposal.nominal_size = {3.25, 1.5, 1.25};
  cfg.proposal.nominal_z = -0.75;
  cfg.proposal_source = ProposalSource::kGtJitter;
  cfg.gt_jitter = 0.125;
  cfg.match_factor = 0.75;
  cfg.smooth_l1_delta = 2.0;
  cfg.alpha = 0.25;
  cfg.beta = 0.75;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.learning_rate = 0.005;
  cfg.steps = 17;
  cfg.validate();

  const std::string path = temp_path("roundtrip.cfg");
  save_pipeline_config(cfg, path);
  const PipelineConfig loaded = load_pipeline_config(path);
  CHECK(loaded.to_json() == cfg.to_json());
  std::filesystem::remove(path);
}

TEST_CASE("config parsing: defaults, overrides, and rejections") {
  std::istringstream empty("");
  CHECK(parse_pipeline_config(empty).to_json() == PipelineConfig{}.to_json());

  std::istringstream partial("# comment\nsteps: 250\nalpha: 0.125\n\npool: avg\n");
  const PipelineConfig cfg = parse_pipeline_config(partial);
  CHECK(cfg.steps == 250);
  CHECK(cfg.alpha == 0.125);
  CHECK(cfg.agg.pool == nn::PoolMode::kAvg);
  CHECK(cfg.beta == 0.5);  // untouched default

  CHECK(throws_mentioning("bogus_key: 3\n", "bogus_key"));
  CHECK(throws_mentioning("alpha: fast\n", "alpha"));
  CHECK(throws_mentioning("no colon here\n", "line 1"));
  CHECK(throws_mentioning("level_widths: 1 2 3\n", "level_widths"));
  CHECK(throws_mentioning("voxel_size: -0.5\n", "voxel_size"));
  CHECK(throws_mentioning("caaf: maybe\n", "caaf"));
  CHECK(throws_mentioning("optimizer: sgd\n", "optimizer"));
  CHECK(throws_mentioning("use_point: off\nuse_conv1: off\nuse_conv2: off\n"
                          "use_conv3: off\nuse_conv4: off\n",
                          "sources"));
}

TEST_CASE("ablation labels name the three studied variants") {
  PipelineConfig cfg;
  cfg.agg.use_pseudo = true;
  cfg.agg.pseudo_conv = false;
  cfg.use_caaf = false;
  CHECK(cfg.ablation_row() == "a");
  cfg.agg.pseudo_conv = true;
  CHECK(cfg.ablation_row() == "b");
  cfg.use_caaf = true;
  CHECK(cfg.ablation_row() == "c");
  cfg.agg.pseudo_conv = false;  // gating without conv-level features: unnamed
  CHECK(cfg.ablation_row() == "-");
  cfg.agg.use_pseudo = false;
  cfg.agg.pseudo_conv = true;
  cfg.use_caaf = false;
  CHECK(cfg.ablation_row() == "-");
}

TEST_CASE("a full run is deterministic down to the serialized record") {
  const PipelineConfig cfg = tiny();
  const PipelineResult a = run_pipeline(cfg, generate_scene(cfg.scene, cfg.seed));
  const PipelineResult b = run_pipeline(cfg, generate_scene(cfg.scene, cfg.seed));
  CHECK(a.metrics.dump() == b.metrics.dump());

  CHECK(a.metrics.contains("config"));
  CHECK(a.metrics.contains("counts"));
  CHECK(a.metrics.contains("losses"));
  CHECK(a.metrics["config"]["seed"] == cfg.seed);
  CHECK(a.metrics["ablation_row"] == "c");
  CHECK(a.metrics["losses"]["total"] == a.forward.losses.total);
  CHECK(a.forward.gated);
  CHECK(a.forward.w_raw_mean > 0.0);
  CHECK(a.forward.w_raw_mean < 1.0);

  PipelineConfig plain = tiny();
  plain.use_caaf = false;
  const PipelineResult c = run_pipeline(plain, generate_scene(plain.scene, plain.seed));
  CHECK_FALSE(c.forward.gated);
  CHECK(c.metrics["fusion"]["gated"] == false);
}

TEST_CASE("a scene with no targets yields zero losses and no proposals") {
  PipelineConfig cfg = tiny();
  cfg.scene.num_boxes = 0;
  const SyntheticScene scene = generate_scene(cfg.scene, 5);
  const PipelineResult result = run_pipeline(cfg, scene);
  // ground and wall sit outside the analysis range, so the grids are empty
  CHECK(result.metrics["counts"]["raw_in_range"] == 0);
  CHECK(result.forward.proposals.rois.empty());
  CHECK(result.forward.losses.l_rpn == 0.0);
  CHECK(result.forward.losses.l_ref == 0.0);
  CHECK(result.forward.losses.l_depth == 0.0);
  CHECK(result.forward.losses.l_as1 == 0.0);
  CHECK(result.forward.losses.l_as2 == 0.0);
  CHECK(result.forward.losses.total == 0.0);
  CHECK(result.forward.gt_confidence.empty());
}

TEST_CASE("zero auxiliary weights leave only the head terms in the total") {
  PipelineConfig cfg = tiny();
  cfg.proposal_source = ProposalSource::kGtJitter;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  const PipelineResult result = run_pipeline(cfg, generate_scene(cfg.scene, cfg.seed));
  CHECK(result.forward.losses.total > 0.0);
  CHECK(result.forward.losses.total ==
        result.forward.losses.l_rpn + result.forward.losses.l_ref);
}

TEST_CASE("descent on one frozen scene reduces the total") {
  PipelineConfig cfg = tiny();
  cfg.proposal_source = ProposalSource::kGtJitter;
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);

  const OverfitResult none = overfit_test(cfg, scene, 0);
  CHECK(none.trajectory.size() == 1);

  const OverfitResult fit = overfit_test(cfg, scene, 30);
  REQUIRE(fit.trajectory.size() == 31);
  CHECK(fit.trajectory.front().total > 0.0);
  CHECK(fit.trajectory.back().total < fit.trajectory.front().total);
  CHECK(fit.metrics["overfit"]["final_total"] == fit.trajectory.back().total);
  CHECK(fit.metrics["overfit"]["initial_total"] == fit.trajectory.front().total);

  PipelineConfig no_boxes = cfg;
  no_boxes.scene.num_boxes = 0;
  CHECK_THROWS_AS(overfit_test(no_boxes, generate_scene(no_boxes.scene, 3), 5), PipelineError);
}

TEST_CASE("model gradients of the end-to-end total match finite differences") {
  const PipelineConfig cfg = micro();
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  const PipelineCache cache = prepare_inputs(cfg, scene);
  DetectionModel model = build_model(cfg);

  // pin the proposal set so every evaluation supervises the same boxes
  const ForwardResult first = forward_pass(model, cache, cfg);
  REQUIRE_FALSE(first.proposals.rois.empty());
  const ProposalSet frozen = first.proposals;
  const std::vector<int> matches = first.matches;
  auto rebuild = [&] { return forward_pass(model, cache, cfg, &frozen, &matches).total; };

  Rng rng(29);
  const auto report = nn::gradcheck_params(model.store, rebuild, 40, rng);
  CAPTURE(report.max_error);
  CHECK(report.passed());
  CHECK(report.checked >= 30);
  CHECK(report.coverage() >= 0.75);
}
