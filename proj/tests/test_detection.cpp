#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "oracles.hpp"
#include "pointfuse/boxes.hpp"
#include "pointfuse/detection.hpp"
#include "pointfuse/losses.hpp"
#include "pointfuse/random.hpp"

using namespace pointfuse;
using nn::Tensor;

namespace {

constexpr double kPi = std::numbers::pi;

BevFeatureMap grid_map(int nx, int ny, std::vector<double> norms) {
  // one channel per cell; the activation norm equals |value|
  BevFeatureMap bev;
  bev.nx = nx;
  bev.ny = ny;
  bev.nz = 1;
  bev.channel_width = 1;
  bev.cell_size = Eigen::Vector3d(1.0, 1.0, 1.0);
  bev.range_min = Eigen::Vector3d::Zero();
  bev.features = Tensor::from_data({nx * ny, 1}, std::move(norms));
  return bev;
}

nn::LinearLayer zeroed_layer(nn::ParamStore& store, const std::string& name, int in, int out) {
  Rng rng(0);
  nn::LinearLayer layer(store, name, in, out, rng);
  for (auto& v : store.find(name + ".w").data()) v = 0.0;
  for (auto& v : store.find(name + ".b").data()) v = 0.0;
  return layer;
}

}  // namespace

TEST_CASE("angles wrap into the half-open symmetric interval") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));  // -pi maps to the closed end
  CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  CHECK(wrap_angle(2 * kPi + 0.25) == doctest::Approx(0.25));
  CHECK(wrap_angle(-7 * kPi) == doctest::Approx(kPi));
}

TEST_CASE("box residual encoding round-trips") {
  Rng rng(101);
  for (int rep = 0; rep < 50; ++rep) {
    RoI from;
    from.center =
        Eigen::Vector3d(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-2, 2));
    from.size = Eigen::Vector3d(rng.uniform(0.5, 5), rng.uniform(0.5, 5), rng.uniform(0.5, 5));
    from.yaw = rng.uniform(-3.0, 3.0);
    RoI to = from;
    to.center += Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    to.size = Eigen::Vector3d(rng.uniform(0.5, 5), rng.uniform(0.5, 5), rng.uniform(0.5, 5));
    to.yaw = rng.uniform(-3.0, 3.0);

    const RoI back = apply_residual(from, encode_residual(from, to));
    CHECK((back.center - to.center).norm() < 1e-12);
    CHECK((back.size - to.size).norm() < 1e-12);
    CHECK(std::abs(wrap_angle(back.yaw - to.yaw)) < 1e-12);
  }
}

TEST_CASE("residual components act as shift, log-ratio, and added yaw") {
  RoI roi;
  roi.center = Eigen::Vector3d(1, 2, 3);
  roi.size = Eigen::Vector3d(4, 2, 1);
  roi.yaw = 0.5;
  Eigen::Matrix<double, 7, 1> r;
  r << 0.5, -0.5, 1.0, std::log(2.0), std::log(0.5), 0.0, 1.0;
  const RoI out = apply_residual(roi, r);
  CHECK((out.center - Eigen::Vector3d(1.5, 1.5, 4.0)).norm() < 1e-12);
  CHECK((out.size - Eigen::Vector3d(8.0, 1.0, 1.0)).norm() < 1e-12);
  CHECK(out.yaw == doctest::Approx(1.5));
}

TEST_CASE("containment respects yaw rotation") {
  RoI box;
  box.center = Eigen::Vector3d(0, 0, 0);
  box.size = Eigen::Vector3d(4, 2, 2);
  box.yaw = kPi / 2;  // long axis now along y
  CHECK(box.contains({0, 1.9, 0}));
  CHECK(!box.contains({1.9, 0, 0}));
  CHECK(box.contains({0.99, 0, 0}));
  CHECK(box.contains({1.0, 0, 0.999}));  // closed face
  CHECK(!box.contains({0, 0, 1.01}));
}

TEST_CASE("box text file round trip") {
  std::vector<RoI> boxes(2);
  boxes[0].center = Eigen::Vector3d(1.5, -2.25, 0.5);
  boxes[0].size = Eigen::Vector3d(4, 1.75, 1.5);
  boxes[0].yaw = 0.25;
  boxes[0].score = 0.75;
  boxes[1].center = Eigen::Vector3d(10, 3, -0.5);
  const std::string path = "tmp_boxes.txt";
  save_boxes(boxes, path);
  const auto back = load_boxes(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == 2);
  CHECK((back[0].center - boxes[0].center).norm() < 1e-15);
  CHECK((back[0].size - boxes[0].size).norm() < 1e-15);
  CHECK(back[0].yaw == boxes[0].yaw);
  CHECK(back[0].score == boxes[0].score);
  CHECK((back[1].center - boxes[1].center).norm() < 1e-15);
}

TEST_CASE("proposals are ranked local maxima of the cell norms") {
  // 4x4 map with peaks at (1,1)=5 and (3,3)=7; (3,3) is stronger
  std::vector<double> norms(16, 0.0);
  auto at = [&](int ix, int iy) -> double& { return norms[ix * 4 + iy]; };
  at(1, 1) = 5.0;
  at(0, 1) = 1.0;
  at(3, 3) = 7.0;
  at(2, 3) = 2.0;
  const BevFeatureMap bev = grid_map(4, 4, norms);

  ProposalConfig cfg;
  cfg.top_n = 8;
  const ProposalSet set = propose_rois(bev, cfg);
  REQUIRE(set.rois.size() == 2);
  CHECK(set.rois[0].score == 7.0);
  CHECK(set.rois[0].center.x() == doctest::Approx(3.5));
  CHECK(set.rois[0].center.y() == doctest::Approx(3.5));
  CHECK(set.rois[0].center.z() == cfg.nominal_z);
  CHECK((set.rois[0].size - cfg.nominal_size).norm() == 0.0);
  CHECK(set.rois[1].score == 5.0);
  CHECK(set.cell_rows == std::vector<int>{3 * 4 + 3, 1 * 4 + 1});

  cfg.top_n = 1;
  CHECK(propose_rois(bev, cfg).rois.size() == 1);
  cfg.top_n = 0;
  CHECK_THROWS_AS(propose_rois(bev, cfg), std::invalid_argument);
}

TEST_CASE("proposal ties break by row then column and zero maps propose nothing") {
  std::vector<double> norms(16, 0.0);
  auto at = [&](int ix, int iy) -> double& { return norms[ix * 4 + iy]; };
  at(0, 3) = 4.0;
  at(2, 0) = 4.0;
  const ProposalSet set = propose_rois(grid_map(4, 4, norms), ProposalConfig{});
  REQUIRE(set.rois.size() == 2);
  CHECK(set.cell_rows == std::vector<int>{3, 8});  // (0,3) before (2,0)

  CHECK(propose_rois(grid_map(4, 4, std::vector<double>(16, 0.0)), ProposalConfig{})
            .rois.empty());

  // a flat plateau is a peak in every cell (>= neighbors), capped by top_n
  const ProposalSet flat =
      propose_rois(grid_map(2, 2, std::vector<double>(4, 1.0)), ProposalConfig{});
  CHECK(flat.rois.size() == 4);
}

TEST_CASE("jittered ground-truth proposals stay near their boxes") {
  Rng rng(102);
  const BevFeatureMap bev = grid_map(8, 8, std::vector<double>(64, 0.0));
  std::vector<RoI> gt(3);
  gt[0].center = Eigen::Vector3d(2.5, 2.5, -0.5);
  gt[1].center = Eigen::Vector3d(6.0, 1.0, -0.5);
  gt[2].center = Eigen::Vector3d(40.0, 40.0, 0.0);  // clamps to the map edge
  const ProposalSet set = propose_from_gt(gt, bev, 0.3, rng);
  REQUIRE(set.rois.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK((set.rois[i].center - gt[i].center).cwiseAbs().maxCoeff() <= 0.3);
    CHECK(set.rois[i].score == 1.0);
  }
  CHECK(set.cell_rows[2] == bev.cell_row(7, 7));
}

TEST_CASE("roi pooling takes the species slice of contained keypoints") {
  // two keypoints with hand-set pre-features over one point slice (2 raw + 1 pse)
  KeypointFeatureTable table;
  table.keypoints.indices = {0, 1, 2};
  table.keypoints.positions = {{0, 0, 0}, {0.5, 0, 0}, {50, 50, 50}};
  table.slices = {{"point", 0, 3, 2, 1}};
  table.pre_features = Tensor::from_data({3, 3}, {1, -2, 10, 3, -4, 20, -100, -100, -100});

  nn::ParamStore store;
  Rng rng(103);
  nn::LinearLayer proj(store, "proj", 2, 2, rng);

  std::vector<RoI> rois(2);
  rois[0].center = Eigen::Vector3d(0.25, 0, 0);  // contains keypoints 0 and 1
  rois[0].size = Eigen::Vector3d(2, 2, 2);
  rois[1].center = Eigen::Vector3d(10, 0, 0);  // contains nothing
  rois[1].size = Eigen::Vector3d(1, 1, 1);

  const Tensor pooled = pool_roi_features(rois, table, Species::kRaw, proj);
  REQUIRE(pooled.rows() == 2);
  REQUIRE(pooled.cols() == 2);
  // box 0: max over rows {1,-2} and {3,-4} -> (3,-2), then the projection
  const Tensor w = store.find("proj.w"), b = store.find("proj.b");
  for (int o = 0; o < 2; ++o) {
    const double expect = w.at(o, 0) * 3.0 + w.at(o, 1) * -2.0 + b.at(o);
    CHECK(pooled.at(0, o) == doctest::Approx(expect).epsilon(1e-12));
  }
  // the empty box is zero even though the projection has a bias
  CHECK(pooled.at(1, 0) == 0.0);
  CHECK(pooled.at(1, 1) == 0.0);

  // the pseudo species reads the remaining slice column
  nn::LinearLayer pse_proj(store, "pproj", 1, 2, rng);
  const Tensor pse = pool_roi_features(rois, table, Species::kPse, pse_proj);
  const Tensor pw = store.find("pproj.w"), pb = store.find("pproj.b");
  CHECK(pse.at(0, 0) == doctest::Approx(pw.at(0, 0) * 20.0 + pb.at(0)).epsilon(1e-12));

  CHECK_THROWS_AS(pool_roi_features(rois, table, Species::kRaw, pse_proj),
                  std::invalid_argument);  // projection width mismatch
}

TEST_CASE("zeroed fusion gates pass half of each branch through") {
  Rng rng(104);
  nn::ParamStore store;
  const nn::LinearLayer fc = zeroed_layer(store, "fc", 8, 8);
  RoIFeaturePair pair;
  pair.f_raw = oracles::random_tensor(rng, {5, 4}, 2.0, false);
  pair.f_pse = oracles::random_tensor(rng, {5, 4}, 2.0, false);

  const CaafResult out = caaf_fuse(pair, fc);
  REQUIRE(out.fused.rows() == 5);
  REQUIRE(out.fused.cols() == 8);
  for (int i = 0; i < 5; ++i) {
    for (int c = 0; c < 4; ++c) {
      CHECK(out.w_raw.at(i, c) == 0.5);
      CHECK(out.w_pse.at(i, c) == 0.5);
      CHECK(out.fused.at(i, c) == 0.5 * pair.f_raw.at(i, c));      // exact halving
      CHECK(out.fused.at(i, c + 4) == 0.5 * pair.f_pse.at(i, c));
    }
  }
}

TEST_CASE("fusion gates stay strictly inside the unit interval") {
  Rng rng(105);
  nn::ParamStore store;
  const nn::LinearLayer fc(store, "fc", 8, 8, rng);
  for (int rep = 0; rep < 100; ++rep) {
    RoIFeaturePair pair;
    pair.f_raw = oracles::random_tensor(rng, {3, 4}, 5.0, false);
    pair.f_pse = oracles::random_tensor(rng, {3, 4}, 5.0, false);
    const CaafResult out = caaf_fuse(pair, fc);
    for (double g : out.w_raw.data()) {
      CHECK(g > 0.0);
      CHECK(g < 1.0);
    }
    for (double g : out.w_pse.data()) {
      CHECK(g > 0.0);
      CHECK(g < 1.0);
    }
    // fused halves equal gate times branch, elementwise
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 4; ++c) {
        CHECK(out.fused.at(i, c) == out.w_raw.at(i, c) * pair.f_raw.at(i, c));
        CHECK(out.fused.at(i, c + 4) == out.w_pse.at(i, c) * pair.f_pse.at(i, c));
      }
    }
  }
}

TEST_CASE("fusion wiring validates shapes and the ungated path concatenates") {
  Rng rng(106);
  RoIFeaturePair pair;
  pair.f_raw = oracles::random_tensor(rng, {2, 3}, 1.0, false);
  pair.f_pse = oracles::random_tensor(rng, {2, 3}, 1.0, false);
  const Tensor cat = plain_concat_fuse(pair);
  REQUIRE(cat.cols() == 6);
  for (int i = 0; i < 2; ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(cat.at(i, c) == pair.f_raw.at(i, c));
      CHECK(cat.at(i, c + 3) == pair.f_pse.at(i, c));
    }
  }

  RoIFeaturePair bad = pair;
  bad.f_pse = oracles::random_tensor(rng, {3, 3}, 1.0, false);
  CHECK_THROWS_AS(plain_concat_fuse(bad), std::invalid_argument);
  nn::ParamStore store;
  const nn::LinearLayer fc(store, "fc", 6, 6, rng);
  CHECK_THROWS_AS(caaf_fuse(bad, fc), std::invalid_argument);
  const nn::LinearLayer wrong(store, "wrong", 6, 4, rng);
  CHECK_THROWS_AS(caaf_fuse(pair, wrong), std::invalid_argument);
}

TEST_CASE("refinement applies head residuals to each proposal") {
  Rng rng(107);
  nn::ParamStore store;
  const nn::Mlp zero_head = [&] {
    nn::Mlp head(store, "head", {4, 8}, rng);
    for (auto& v : store.find("head.0.w").data()) v = 0.0;
    for (auto& v : store.find("head.0.b").data()) v = 0.0;
    return head;
  }();

  std::vector<RoI> rois(2);
  rois[0].center = Eigen::Vector3d(1, 2, 3);
  rois[0].yaw = 0.5;
  rois[0].score = 0.7;
  rois[1].center = Eigen::Vector3d(-1, 0, 0);

  const Tensor fused = oracles::random_tensor(rng, {2, 4}, 1.0, false);
  const RefinementResult out = refine_boxes(fused, rois, zero_head);
  REQUIRE(out.boxes.size() == 2);
  // zero head: boxes unchanged, confidence at the sigmoid midpoint
  CHECK((out.boxes[0].center - rois[0].center).norm() == 0.0);
  CHECK((out.boxes[0].size - rois[0].size).norm() == 0.0);
  CHECK(out.boxes[0].yaw == rois[0].yaw);
  CHECK(out.boxes[0].score == 0.7);  // proposal score rides along
  CHECK(out.confidences[0] == 0.5);

  // a live head applies the residual transform row by row
  nn::ParamStore store2;
  const nn::Mlp head(store2, "head", {4, 6, 8}, rng);
  const RefinementResult live = refine_boxes(fused, rois, head);
  for (int i = 0; i < 2; ++i) {
    Eigen::Matrix<double, 7, 1> r;
    for (int c = 0; c < 7; ++c) r(c) = live.output.at(i, c);
    const RoI expect = apply_residual(rois[i], r);
    CHECK((live.boxes[i].center - expect.center).norm() < 1e-12);
    CHECK((live.boxes[i].size - expect.size).norm() < 1e-12);
    CHECK(live.boxes[i].yaw == doctest::Approx(expect.yaw));
    CHECK(live.confidences[i] == doctest::Approx(nn::sigmoid_value(live.output.at(i, 7))));
  }

  CHECK_THROWS_AS(refine_boxes(oracles::random_tensor(rng, {3, 4}, 1.0, false), rois, head),
                  std::invalid_argument);
}

TEST_CASE("proposal matching picks the nearest box within range") {
  std::vector<RoI> gt(2);
  gt[0].center = Eigen::Vector3d(0, 0, 0);
  gt[0].size = Eigen::Vector3d(4, 2, 2);  // diagonal 4.9
  gt[1].center = Eigen::Vector3d(10, 0, 0);
  gt[1].size = Eigen::Vector3d(4, 2, 2);

  std::vector<RoI> proposals(3);
  proposals[0].center = Eigen::Vector3d(1, 0, 0);    // near gt 0
  proposals[1].center = Eigen::Vector3d(9, 0.5, 0);  // near gt 1
  proposals[2].center = Eigen::Vector3d(5, 20, 0);   // too far from both
  CHECK(match_rois(proposals, gt, 0.5) == std::vector<int>{0, 1, -1});
  CHECK(match_rois(proposals, {}, 0.5) == std::vector<int>{-1, -1, -1});
  // shrinking the factor drops the looser match
  CHECK(match_rois(proposals, gt, 0.05) == std::vector<int>{-1, -1, -1});
}

TEST_CASE("head supervision combines residual and confidence terms") {
  Rng rng(108);
  std::vector<RoI> gt(1);
  gt[0].center = Eigen::Vector3d(0.5, 0, 0);
  gt[0].size = Eigen::Vector3d(4, 2, 2);

  std::vector<RoI> rois(2);
  rois[0].center = Eigen::Vector3d(0, 0, 0);
  rois[0].size = Eigen::Vector3d(4, 2, 2);
  rois[1].center = Eigen::Vector3d(30, 0, 0);
  rois[1].size = Eigen::Vector3d(4, 2, 2);
  const std::vector<int> match = {0, -1};

  const Tensor head_out = oracles::random_tensor(rng, {2, 8}, 1.0, false);
  const double loss = head_loss(head_out, rois, gt, match, 1.0).item();

  // reference: smooth residual term over the matched row + confidence bce
  const auto r = encode_residual(rois[0], gt[0]);
  std::vector<double> pred(7), target(7);
  for (int c = 0; c < 7; ++c) {
    pred[c] = head_out.at(0, c);
    target[c] = r(c);
  }
  const double reg = smooth_l1(pred, target, 1.0);
  const double cls = bce({head_out.at(0, 7), head_out.at(1, 7)}, {1.0, 0.0});
  CHECK(loss == doctest::Approx(reg + cls).epsilon(1e-12));

  // no proposals at all: zero loss by construction
  CHECK(head_loss(Tensor::zeros({0, 8}), {}, gt, {}, 1.0).item() == 0.0);
  // unmatched-only: pure confidence loss
  const double only_cls = head_loss(head_out, rois, gt, {-1, -1}, 1.0).item();
  CHECK(only_cls ==
        doctest::Approx(bce({head_out.at(0, 7), head_out.at(1, 7)}, {0.0, 0.0})).epsilon(1e-12));

  CHECK_THROWS_AS(head_loss(oracles::random_tensor(rng, {2, 7}, 1.0, false), rois, gt, match, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(head_loss(head_out, rois, gt, {0}, 1.0), std::invalid_argument);
}
