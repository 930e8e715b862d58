#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pointfuse/config.hpp"
#include "pointfuse/depth.hpp"
#include "pointfuse/gradcheck.hpp"
#include "pointfuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pointfuse;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool seed_set = false;
  int probes = 32;
};

PipelineConfig load_config(const Options& opt) {
  PipelineConfig cfg;
  if (!opt.config_path.empty()) cfg = load_pipeline_config(opt.config_path);
  if (opt.seed_set) cfg.seed = opt.seed;
  cfg.validate();
  return cfg;
}

fs::path out_path(const Options& opt, const std::string& name) {
  fs::create_directories(opt.out_dir);
  return fs::path(opt.out_dir) / name;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

void write_timings(const Options& opt, const StageTimings& timings) {
  nlohmann::ordered_json j;
  for (const auto& [name, seconds] : timings) j[name] = seconds;
  write_json(out_path(opt, "timings.json"), j);
}

void write_detections(const Options& opt, const RefinementResult& refinement) {
  std::vector<RoI> boxes = refinement.boxes;
  for (size_t i = 0; i < boxes.size(); ++i) boxes[i].score = refinement.confidences[i];
  save_boxes(boxes, out_path(opt, "detections.txt").string());
}

void write_loss_csv(const Options& opt, const std::vector<LossBreakdown>& rows) {
  std::ofstream out(out_path(opt, "losses.csv"));
  if (!out) throw std::runtime_error("cannot open losses.csv");
  write_loss_csv_header(out);
  for (size_t i = 0; i < rows.size(); ++i) append_loss_csv(out, static_cast<int>(i), rows[i]);
}

int cmd_gen_scene(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  save_ppm(scene.image, out_path(opt, "image.ppm").string());
  save_depth(scene.gt_depth, out_path(opt, "gt_depth.bin").string());
  save_cloud(scene.raw_cloud, out_path(opt, "raw_cloud.bin").string());
  save_boxes(scene.boxes, out_path(opt, "boxes.txt").string());
  save_calibration(scene.calib, out_path(opt, "calib.txt").string());

  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["boxes"] = scene.boxes.size();
  j["raw_points"] = scene.raw_cloud.points.size();
  j["image"] = {scene.image.width, scene.image.height};
  write_json(out_path(opt, "scene.json"), j);
  return 0;
}

SparseDepthMap project_scene(const SyntheticScene& scene, size_t* projected = nullptr) {
  const auto points = project_points(scene.raw_cloud, scene.calib);
  if (projected) *projected = points.size();
  std::vector<PixelDepthSample> samples;
  samples.reserve(points.size());
  for (const auto& p : points) samples.push_back(p.px);
  return rasterize_depth(samples, scene.calib.width, scene.calib.height);
}

int cmd_project(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  size_t projected = 0;
  const SparseDepthMap sparse = project_scene(scene, &projected);
  save_depth(sparse, out_path(opt, "sparse_depth.bin").string());
  save_depth_pgm(sparse, out_path(opt, "sparse_depth.pgm").string());

  nlohmann::ordered_json j;
  j["raw_points"] = scene.raw_cloud.points.size();
  j["projected"] = projected;
  j["valid_cells"] = sparse.valid_count;
  write_json(out_path(opt, "project.json"), j);
  return 0;
}

int cmd_complete(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  const SparseDepthMap sparse = project_scene(scene);
  const DenseDepthMap dense = complete_depth(scene.image, sparse);
  save_depth(dense, out_path(opt, "dense_depth.bin").string());

  double mae = 0.0;
  for (size_t i = 0; i < dense.depth.size(); ++i)
    mae += std::abs(dense.depth[i] - scene.gt_depth.depth[i]);
  mae /= static_cast<double>(dense.depth.size());

  nlohmann::ordered_json j;
  j["valid_cells"] = sparse.valid_count;
  j["mae_vs_gt"] = mae;
  write_json(out_path(opt, "complete.json"), j);
  return 0;
}

int cmd_pseudo(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  const SparseDepthMap sparse = project_scene(scene);
  const DenseDepthMap dense = complete_depth(scene.image, sparse);
  const PseudoPointCloud pseudo =
      build_pseudo_cloud(scene.image, dense, scene.calib, cfg.pseudo_stride);
  save_cloud(pseudo, out_path(opt, "pseudo_cloud.bin").string());

  nlohmann::ordered_json j;
  j["pseudo_points"] = pseudo.points.size();
  j["stride"] = cfg.pseudo_stride;
  write_json(out_path(opt, "pseudo.json"), j);
  return 0;
}

int cmd_pipeline(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  const PipelineResult result = run_pipeline(cfg, scene);
  write_json(out_path(opt, "metrics.json"), result.metrics);
  write_timings(opt, result.timings);
  write_detections(opt, result.forward.refinement);
  write_loss_csv(opt, {result.forward.losses});
  std::cout << "total loss " << result.forward.losses.total << ", "
            << result.forward.proposals.rois.size() << " proposals\n";
  return 0;
}

int cmd_overfit(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  const OverfitResult result = overfit_test(cfg, scene, cfg.steps);
  write_json(out_path(opt, "overfit.json"), result.metrics);
  write_loss_csv(opt, result.trajectory);
  write_detections(opt, result.final_refinement);
  std::cout << "total " << result.trajectory.front().total << " -> "
            << result.trajectory.back().total << " over " << cfg.steps << " steps\n";
  return 0;
}

int cmd_gradcheck(const Options& opt) {
  const PipelineConfig cfg = load_config(opt);
  const SyntheticScene scene = generate_scene(cfg.scene, cfg.seed);
  const PipelineCache cache = prepare_inputs(cfg, scene);
  DetectionModel model = build_model(cfg);

  const ForwardResult base = forward_pass(model, cache, cfg);
  const ProposalSet frozen = base.proposals;
  const std::vector<int> matches = base.matches;
  const auto rebuild = [&] {
    return forward_pass(model, cache, cfg, &frozen, &matches).total;
  };
  Rng probe_rng = Rng(cfg.seed).fork(11);
  const nn::GradCheckReport report =
      nn::gradcheck_params(model.store, rebuild, opt.probes, probe_rng);

  nlohmann::ordered_json j;
  j["probes"] = report.probes;
  j["checked"] = report.checked;
  j["skipped"] = report.skipped;
  j["failures"] = report.failures;
  j["max_error"] = report.max_error;
  nlohmann::ordered_json failed = nlohmann::ordered_json::array();
  for (const auto& f : report.failed) {
    nlohmann::ordered_json row;
    row["param"] = f.param;
    row["element"] = f.element;
    row["analytic"] = f.analytic;
    row["numeric"] = f.numeric;
    failed.push_back(row);
  }
  j["failed"] = failed;
  write_json(out_path(opt, "gradcheck.json"), j);

  std::cout << report.checked << "/" << report.probes << " probes checked (" << report.skipped
            << " on kinks), " << report.failures << " failures, max error " << report.max_error
            << "\n";
  if (!report.passed()) {
    std::cerr << "error: gradcheck: " << report.failures << " probes out of tolerance\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal 3D detection pipeline on synthetic scenes"};
  app.require_subcommand(1);

  Options opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key: value config file");
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--out", opt.out_dir, "output directory");
  };

  add_common(app.add_subcommand("gen-scene", "render a synthetic scene to files"));
  add_common(app.add_subcommand("project", "project the lidar cloud to a sparse depth map"));
  add_common(app.add_subcommand("complete", "densify the projected depth map"));
  add_common(app.add_subcommand("pseudo", "lift completed depth to a pseudo point cloud"));
  add_common(app.add_subcommand("pipeline", "run the full pipeline once and emit metrics"));
  add_common(app.add_subcommand("overfit", "descend the total loss on one frozen scene"));
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of the loss gradient");
  add_common(grad);
  grad->add_option("--probes", opt.probes, "number of parameter entries to probe");

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();
  opt.seed_set = sub->count("--seed") > 0;

  try {
    const std::string name = sub->get_name();
    if (name == "gen-scene") return cmd_gen_scene(opt);
    if (name == "project") return cmd_project(opt);
    if (name == "complete") return cmd_complete(opt);
    if (name == "pseudo") return cmd_pseudo(opt);
    if (name == "pipeline") return cmd_pipeline(opt);
    if (name == "overfit") return cmd_overfit(opt);
    if (name == "gradcheck") return cmd_gradcheck(opt);
    std::cerr << "error: unknown subcommand " << name << "\n";
    return 1;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
