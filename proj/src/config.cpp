#include "pointfuse/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pointfuse {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw std::invalid_argument("config: " + what + " for key '" + key + "'");
}

// Reads exactly n whitespace-separated values of T from the text.
template <typename T>
std::vector<T> scan_n(const std::string& key, const std::string& text, size_t n) {
  std::istringstream in(text);
  std::vector<T> out;
  T v;
  while (in >> v) out.push_back(v);
  if (!in.eof() || out.size() != n) bad(key, "expected " + std::to_string(n) + " values");
  return out;
}

template <typename T>
std::vector<T> scan_list(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  std::vector<T> out;
  T v;
  while (in >> v) out.push_back(v);
  if (!in.eof()) bad(key, "malformed list");
  return out;
}

double scan_double(const std::string& key, const std::string& text) {
  return scan_n<double>(key, text, 1)[0];
}

int scan_int(const std::string& key, const std::string& text) {
  return scan_n<int>(key, text, 1)[0];
}

uint64_t scan_u64(const std::string& key, const std::string& text) {
  return scan_n<uint64_t>(key, text, 1)[0];
}

bool scan_bool(const std::string& key, const std::string& text) {
  std::string v = trim(text);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected on/off");
}

Eigen::Vector3d scan_vec3(const std::string& key, const std::string& text) {
  const auto v = scan_n<double>(key, text, 3);
  return {v[0], v[1], v[2]};
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + key + " " + what);
}

const char* bool_text(bool v) { return v ? "on" : "off"; }

}  // namespace

void PipelineConfig::validate() const {
  check(scene.num_boxes >= 0, "scene_boxes", "must be >= 0");
  check(scene.sensor_height > 0, "sensor_height", "must be > 0");
  check(scene.image_width > 0 && scene.image_height > 0, "image size", "must be positive");
  check(scene.fx > 0 && scene.fy > 0, "focal", "must be positive");
  check(scene.lidar_stride >= 1, "lidar_stride", "must be >= 1");
  check(scene.az_steps >= 1 && scene.elev_steps >= 1, "lidar grid", "must have >= 1 step");
  check(scene.az_min_deg < scene.az_max_deg, "az range", "must be increasing");
  check(scene.elev_min_deg < scene.elev_max_deg, "elev range", "must be increasing");
  check(scene.box_size.minCoeff() > 0, "box size", "must be positive");
  check(scene.box_x_min > 0 && scene.box_x_max >= scene.box_x_min, "box_x range",
        "must be positive and increasing");
  check(scene.wall_distance > scene.box_x_max, "wall_distance", "must sit behind the box range");
  check(scene.box_y_frac >= 0 && scene.box_yaw_max >= 0, "box placement", "must be >= 0");
  check(scene.noise_sigma >= 0, "noise_sigma", "must be >= 0");
  check(scene.dropout >= 0 && scene.dropout < 1, "dropout", "must be in [0,1)");

  check(pseudo_stride >= 1, "pseudo_stride", "must be >= 1");
  check(keypoint_count > 0, "keypoint_count", "must be > 0");
  check(fps_start >= 0, "fps_start", "must be >= 0");
  check(voxel_size > 0, "voxel_size", "must be > 0");
  for (int a = 0; a < 3; ++a)
    check(range_min(a) < range_max(a), "range", "must be increasing per axis");
  for (int w : level_widths) check(w > 0, "level_widths", "must be positive");

  for (double r : agg.radii) check(r > 0, "radii", "must be positive");
  check(agg.point_max_neighbors >= 1, "point_max_neighbors", "must be >= 1");
  check(agg.conv_max_neighbors >= 1, "conv_max_neighbors", "must be >= 1");
  check(agg.voxel_kernel_radius >= 0, "voxel_kernel_radius", "must be >= 0");
  const bool any_conv =
      std::any_of(agg.use_conv.begin(), agg.use_conv.end(), [](bool b) { return b; });
  check(agg.use_point || any_conv, "sources", "must enable at least one feature source");

  for (int w : agg_hidden) check(w > 0, "agg_hidden", "must be positive");
  check(d_kp > 0, "d_kp", "must be > 0");
  check(d_m > 0, "d_m", "must be > 0");

  check(proposal.top_n >= 0, "top_n", "must be >= 0");
  check(proposal.nominal_size.minCoeff() > 0, "nominal size", "must be positive");
  check(gt_jitter >= 0, "jitter", "must be >= 0");
  check(match_factor > 0, "match_factor", "must be > 0");
  check(smooth_l1_delta > 0, "smooth_l1_delta", "must be > 0");
  check(alpha >= 0 && beta >= 0, "alpha/beta", "must be >= 0");
  check(learning_rate > 0, "learning_rate", "must be > 0");
  check(steps >= 0, "steps", "must be >= 0");
}

std::string PipelineConfig::ablation_row() const {
  if (!agg.use_pseudo) return "-";
  if (!agg.pseudo_conv) return use_caaf ? "-" : "a";
  return use_caaf ? "c" : "b";
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;

  nlohmann::ordered_json s;
  s["boxes"] = scene.num_boxes;
  s["sensor_height"] = scene.sensor_height;
  s["wall_distance"] = scene.wall_distance;
  s["image_width"] = scene.image_width;
  s["image_height"] = scene.image_height;
  s["focal"] = {scene.fx, scene.fy};
  s["center"] = {scene.cx, scene.cy};
  s["lidar_pattern"] = scene.lidar_pattern == LidarPattern::kPixel ? "pixel" : "angular";
  s["lidar_stride"] = scene.lidar_stride;
  s["az_range_deg"] = {scene.az_min_deg, scene.az_max_deg};
  s["az_steps"] = scene.az_steps;
  s["elev_range_deg"] = {scene.elev_min_deg, scene.elev_max_deg};
  s["elev_steps"] = scene.elev_steps;
  s["box_size"] = {scene.box_size.x(), scene.box_size.y(), scene.box_size.z()};
  s["box_x_range"] = {scene.box_x_min, scene.box_x_max};
  s["box_y_frac"] = scene.box_y_frac;
  s["box_yaw_max"] = scene.box_yaw_max;
  s["noise_sigma"] = scene.noise_sigma;
  s["dropout"] = scene.dropout;
  j["scene"] = s;

  j["pseudo_stride"] = pseudo_stride;
  j["keypoint_count"] = keypoint_count;
  j["fps_source"] = fps_source == FpsSource::kRaw ? "raw" : "union";
  j["fps_start"] = fps_start;
  j["voxel_size"] = voxel_size;
  j["range_min"] = {range_min.x(), range_min.y(), range_min.z()};
  j["range_max"] = {range_max.x(), range_max.y(), range_max.z()};
  j["level_widths"] = level_widths;

  nlohmann::ordered_json a;
  a["radii"] = agg.radii;
  a["point_max_neighbors"] = agg.point_max_neighbors;
  a["conv_max_neighbors"] = agg.conv_max_neighbors;
  a["conv_query"] = agg.conv_voxel_query ? "voxel" : "ball";
  a["voxel_kernel_radius"] = agg.voxel_kernel_radius;
  a["pool"] = agg.pool == nn::PoolMode::kMax ? "max" : "avg";
  a["use_point"] = agg.use_point;
  a["use_conv"] = agg.use_conv;
  a["pseudo"] = agg.use_pseudo;
  a["prconv"] = agg.pseudo_conv;
  j["aggregation"] = a;

  j["agg_hidden"] = agg_hidden;
  j["d_kp"] = d_kp;
  j["d_m"] = d_m;
  j["caaf"] = use_caaf;

  j["top_n"] = proposal.top_n;
  j["nominal_size"] = {proposal.nominal_size.x(), proposal.nominal_size.y(),
                       proposal.nominal_size.z()};
  j["nominal_z"] = proposal.nominal_z;
  j["proposal_source"] = proposal_source == ProposalSource::kBev ? "bev" : "gt_jitter";
  j["jitter"] = gt_jitter;

  j["match_factor"] = match_factor;
  j["smooth_l1_delta"] = smooth_l1_delta;
  j["alpha"] = alpha;
  j["beta"] = beta;

  j["optimizer"] = optimizer == OptimizerKind::kGd ? "gd" : "adam";
  j["learning_rate"] = learning_rate;
  j["steps"] = steps;
  return j;
}

PipelineConfig parse_pipeline_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t colon = line.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("config: missing ':' on line " + std::to_string(line_no));
    const std::string key = trim(line.substr(0, colon));
    const std::string val = trim(line.substr(colon + 1));

    if (key == "seed") cfg.seed = scan_u64(key, val);

    else if (key == "scene_boxes") cfg.scene.num_boxes = scan_int(key, val);
    else if (key == "sensor_height") cfg.scene.sensor_height = scan_double(key, val);
    else if (key == "wall_distance") cfg.scene.wall_distance = scan_double(key, val);
    else if (key == "image_width") cfg.scene.image_width = scan_int(key, val);
    else if (key == "image_height") cfg.scene.image_height = scan_int(key, val);
    else if (key == "focal_x") cfg.scene.fx = scan_double(key, val);
    else if (key == "focal_y") cfg.scene.fy = scan_double(key, val);
    else if (key == "center_x") cfg.scene.cx = scan_double(key, val);
    else if (key == "center_y") cfg.scene.cy = scan_double(key, val);
    else if (key == "lidar_pattern") {
      const std::string v = trim(val);
      if (v == "pixel") cfg.scene.lidar_pattern = LidarPattern::kPixel;
      else if (v == "angular") cfg.scene.lidar_pattern = LidarPattern::kAngular;
      else bad(key, "expected pixel|angular");
    }
    else if (key == "lidar_stride") cfg.scene.lidar_stride = scan_int(key, val);
    else if (key == "az_range_deg") {
      const auto v = scan_n<double>(key, val, 2);
      cfg.scene.az_min_deg = v[0];
      cfg.scene.az_max_deg = v[1];
    }
    else if (key == "az_steps") cfg.scene.az_steps = scan_int(key, val);
    else if (key == "elev_range_deg") {
      const auto v = scan_n<double>(key, val, 2);
      cfg.scene.elev_min_deg = v[0];
      cfg.scene.elev_max_deg = v[1];
    }
    else if (key == "elev_steps") cfg.scene.elev_steps = scan_int(key, val);
    else if (key == "box_size") cfg.scene.box_size = scan_vec3(key, val);
    else if (key == "box_x_range") {
      const auto v = scan_n<double>(key, val, 2);
      cfg.scene.box_x_min = v[0];
      cfg.scene.box_x_max = v[1];
    }
    else if (key == "box_y_frac") cfg.scene.box_y_frac = scan_double(key, val);
    else if (key == "box_yaw_max") cfg.scene.box_yaw_max = scan_double(key, val);
    else if (key == "noise_sigma") cfg.scene.noise_sigma = scan_double(key, val);
    else if (key == "dropout") cfg.scene.dropout = scan_double(key, val);

    else if (key == "pseudo_stride") cfg.pseudo_stride = scan_int(key, val);
    else if (key == "keypoint_count") cfg.keypoint_count = scan_int(key, val);
    else if (key == "fps_source") {
      const std::string v = trim(val);
      if (v == "raw") cfg.fps_source = FpsSource::kRaw;
      else if (v == "union") cfg.fps_source = FpsSource::kUnion;
      else bad(key, "expected raw|union");
    }
    else if (key == "fps_start") cfg.fps_start = scan_int(key, val);
    else if (key == "voxel_size") cfg.voxel_size = scan_double(key, val);
    else if (key == "range_min") cfg.range_min = scan_vec3(key, val);
    else if (key == "range_max") cfg.range_max = scan_vec3(key, val);
    else if (key == "level_widths") {
      const auto v = scan_n<int>(key, val, 4);
      std::copy(v.begin(), v.end(), cfg.level_widths.begin());
    }

    else if (key == "radii") {
      const auto v = scan_n<double>(key, val, 5);
      std::copy(v.begin(), v.end(), cfg.agg.radii.begin());
    }
    else if (key == "point_max_neighbors") cfg.agg.point_max_neighbors = scan_int(key, val);
    else if (key == "conv_max_neighbors") cfg.agg.conv_max_neighbors = scan_int(key, val);
    else if (key == "conv_query") {
      const std::string v = trim(val);
      if (v == "ball") cfg.agg.conv_voxel_query = false;
      else if (v == "voxel") cfg.agg.conv_voxel_query = true;
      else bad(key, "expected ball|voxel");
    }
    else if (key == "voxel_kernel_radius") cfg.agg.voxel_kernel_radius = scan_int(key, val);
    else if (key == "pool") {
      const std::string v = trim(val);
      if (v == "max") cfg.agg.pool = nn::PoolMode::kMax;
      else if (v == "avg") cfg.agg.pool = nn::PoolMode::kAvg;
      else bad(key, "expected max|avg");
    }
    else if (key == "use_point") cfg.agg.use_point = scan_bool(key, val);
    else if (key == "use_conv1") cfg.agg.use_conv[0] = scan_bool(key, val);
    else if (key == "use_conv2") cfg.agg.use_conv[1] = scan_bool(key, val);
    else if (key == "use_conv3") cfg.agg.use_conv[2] = scan_bool(key, val);
    else if (key == "use_conv4") cfg.agg.use_conv[3] = scan_bool(key, val);
    else if (key == "pseudo") cfg.agg.use_pseudo = scan_bool(key, val);
    else if (key == "prconv") cfg.agg.pseudo_conv = scan_bool(key, val);

    else if (key == "agg_hidden") cfg.agg_hidden = scan_list<int>(key, val);
    else if (key == "d_kp") cfg.d_kp = scan_int(key, val);
    else if (key == "d_m") cfg.d_m = scan_int(key, val);
    else if (key == "caaf") cfg.use_caaf = scan_bool(key, val);

    else if (key == "top_n") cfg.proposal.top_n = scan_int(key, val);
    else if (key == "nominal_size") cfg.proposal.nominal_size = scan_vec3(key, val);
    else if (key == "nominal_z") cfg.proposal.nominal_z = scan_double(key, val);
    else if (key == "proposal_source") {
      const std::string v = trim(val);
      if (v == "bev") cfg.proposal_source = ProposalSource::kBev;
      else if (v == "gt_jitter") cfg.proposal_source = ProposalSource::kGtJitter;
      else bad(key, "expected bev|gt_jitter");
    }
    else if (key == "jitter") cfg.gt_jitter = scan_double(key, val);

    else if (key == "match_factor") cfg.match_factor = scan_double(key, val);
    else if (key == "smooth_l1_delta") cfg.smooth_l1_delta = scan_double(key, val);
    else if (key == "alpha") cfg.alpha = scan_double(key, val);
    else if (key == "beta") cfg.beta = scan_double(key, val);

    else if (key == "optimizer") {
      const std::string v = trim(val);
      if (v == "gd") cfg.optimizer = OptimizerKind::kGd;
      else if (v == "adam") cfg.optimizer = OptimizerKind::kAdam;
      else bad(key, "expected gd|adam");
    }
    else if (key == "learning_rate") cfg.learning_rate = scan_double(key, val);
    else if (key == "steps") cfg.steps = scan_int(key, val);

    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_pipeline_config(in);
}

void save_pipeline_config(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot open " + path + " for writing");
  out.precision(17);
  out << "seed: " << cfg.seed << "\n\n";

  out << "scene_boxes: " << cfg.scene.num_boxes << "\n";
  out << "sensor_height: " << cfg.scene.sensor_height << "\n";
  out << "wall_distance: " << cfg.scene.wall_distance << "\n";
  out << "image_width: " << cfg.scene.image_width << "\n";
  out << "image_height: " << cfg.scene.image_height << "\n";
  out << "focal_x: " << cfg.scene.fx << "\n";
  out << "focal_y: " << cfg.scene.fy << "\n";
  out << "center_x: " << cfg.scene.cx << "\n";
  out << "center_y: " << cfg.scene.cy << "\n";
  out << "lidar_pattern: "
      << (cfg.scene.lidar_pattern == LidarPattern::kPixel ? "pixel" : "angular") << "\n";
  out << "lidar_stride: " << cfg.scene.lidar_stride << "\n";
  out << "az_range_deg: " << cfg.scene.az_min_deg << " " << cfg.scene.az_max_deg << "\n";
  out << "az_steps: " << cfg.scene.az_steps << "\n";
  out << "elev_range_deg: " << cfg.scene.elev_min_deg << " " << cfg.scene.elev_max_deg << "\n";
  out << "elev_steps: " << cfg.scene.elev_steps << "\n";
  out << "box_size: " << cfg.scene.box_size.x() << " " << cfg.scene.box_size.y() << " "
      << cfg.scene.box_size.z() << "\n";
  out << "box_x_range: " << cfg.scene.box_x_min << " " << cfg.scene.box_x_max << "\n";
  out << "box_y_frac: " << cfg.scene.box_y_frac << "\n";
  out << "box_yaw_max: " << cfg.scene.box_yaw_max << "\n";
  out << "noise_sigma: " << cfg.scene.noise_sigma << "\n";
  out << "dropout: " << cfg.scene.dropout << "\n\n";

  out << "pseudo_stride: " << cfg.pseudo_stride << "\n";
  out << "keypoint_count: " << cfg.keypoint_count << "\n";
  out << "fps_source: " << (cfg.fps_source == FpsSource::kRaw ? "raw" : "union") << "\n";
  out << "fps_start: " << cfg.fps_start << "\n";
  out << "voxel_size: " << cfg.voxel_size << "\n";
  out << "range_min: " << cfg.range_min.x() << " " << cfg.range_min.y() << " "
      << cfg.range_min.z() << "\n";
  out << "range_max: " << cfg.range_max.x() << " " << cfg.range_max.y() << " "
      << cfg.range_max.z() << "\n";
  out << "level_widths:";
  for (int w : cfg.level_widths) out << " " << w;
  out << "\n\n";

  out << "radii:";
  for (double r : cfg.agg.radii) out << " " << r;
  out << "\n";
  out << "point_max_neighbors: " << cfg.agg.point_max_neighbors << "\n";
  out << "conv_max_neighbors: " << cfg.agg.conv_max_neighbors << "\n";
  out << "conv_query: " << (cfg.agg.conv_voxel_query ? "voxel" : "ball") << "\n";
  out << "voxel_kernel_radius: " << cfg.agg.voxel_kernel_radius << "\n";
  out << "pool: " << (cfg.agg.pool == nn::PoolMode::kMax ? "max" : "avg") << "\n";
  out << "use_point: " << bool_text(cfg.agg.use_point) << "\n";
  for (int k = 0; k < 4; ++k)
    out << "use_conv" << k + 1 << ": " << bool_text(cfg.agg.use_conv[k]) << "\n";
  out << "pseudo: " << bool_text(cfg.agg.use_pseudo) << "\n";
  out << "prconv: " << bool_text(cfg.agg.pseudo_conv) << "\n\n";

  out << "agg_hidden:";
  for (int w : cfg.agg_hidden) out << " " << w;
  out << "\n";
  out << "d_kp: " << cfg.d_kp << "\n";
  out << "d_m: " << cfg.d_m << "\n";
  out << "caaf: " << bool_text(cfg.use_caaf) << "\n\n";

  out << "top_n: " << cfg.proposal.top_n << "\n";
  out << "nominal_size: " << cfg.proposal.nominal_size.x() << " "
      << cfg.proposal.nominal_size.y() << " " << cfg.proposal.nominal_size.z() << "\n";
  out << "nominal_z: " << cfg.proposal.nominal_z << "\n";
  out << "proposal_source: "
      << (cfg.proposal_source == ProposalSource::kBev ? "bev" : "gt_jitter") << "\n";
  out << "jitter: " << cfg.gt_jitter << "\n\n";

  out << "match_factor: " << cfg.match_factor << "\n";
  out << "smooth_l1_delta: " << cfg.smooth_l1_delta << "\n";
  out << "alpha: " << cfg.alpha << "\n";
  out << "beta: " << cfg.beta << "\n\n";

  out << "optimizer: " << (cfg.optimizer == OptimizerKind::kGd ? "gd" : "adam") << "\n";
  out << "learning_rate: " << cfg.learning_rate << "\n";
  out << "steps: " << cfg.steps << "\n";
}

}  // namespace pointfuse
