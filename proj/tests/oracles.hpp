#pragma once

// Brute-force reference implementations and finite-difference helpers shared
// by the test binaries. Everything here trades speed for obviousness so the
// production code can be checked against independently written logic.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "pointfuse/geometry.hpp"
#include "pointfuse/random.hpp"
#include "pointfuse/tensor.hpp"

namespace oracles {

// Greedy farthest point sampling that recomputes each candidate's distance to
// the whole selected set every step (no incremental min-distance cache).
inline std::vector<int> brute_fps(const std::vector<Eigen::Vector3d>& points, int count,
                                  int start) {
  const int n = static_cast<int>(points.size());
  const int m = std::min(count, n);
  std::vector<int> picked;
  std::vector<char> used(n, 0);
  picked.push_back(start);
  used[start] = 1;
  while (static_cast<int>(picked.size()) < m) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (int s : picked) d = std::min(d, (points[i] - points[s]).squaredNorm());
      if (used[i]) d = -1.0;  // already selected: distance to the set is zero
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    picked.push_back(best);
    used[best] = 1;
  }
  return picked;
}

// O(M*N) radius scan with the production table layout: ascending indices,
// truncation at max_neighbors, pad-with-first, sentinel for empty rows.
inline std::vector<int> brute_ball_query(const std::vector<Eigen::Vector3d>& centers,
                                         const std::vector<Eigen::Vector3d>& points,
                                         double radius, int max_neighbors) {
  std::vector<int> table(centers.size() * static_cast<size_t>(max_neighbors), -1);
  for (size_t c = 0; c < centers.size(); ++c) {
    std::vector<int> hits;
    for (size_t i = 0; i < points.size(); ++i) {
      if ((points[i] - centers[c]).norm() <= radius) hits.push_back(static_cast<int>(i));
    }
    if (hits.empty()) continue;
    if (static_cast<int>(hits.size()) > max_neighbors) hits.resize(max_neighbors);
    for (int s = 0; s < max_neighbors; ++s) {
      table[c * max_neighbors + s] =
          s < static_cast<int>(hits.size()) ? hits[s] : hits[0];
    }
  }
  return table;
}

// Map-keyed z-buffer: group samples by floored cell, keep the minimum depth.
inline std::map<std::pair<int, int>, double> brute_rasterize(
    const std::vector<pointfuse::PixelDepthSample>& samples, int width, int height) {
  std::map<std::pair<int, int>, double> cells;
  for (const auto& s : samples) {
    const int u = static_cast<int>(std::floor(s.u));
    const int v = static_cast<int>(std::floor(s.v));
    if (u < 0 || u >= width || v < 0 || v >= height) continue;
    auto key = std::make_pair(u, v);
    auto it = cells.find(key);
    if (it == cells.end() || s.d < it->second) cells[key] = s.d;
  }
  return cells;
}

// Synchronous 5x5 min-dilation completion, tracked with an explicit validity
// mask instead of the sentinel encoding.
inline std::vector<double> brute_complete(const std::vector<double>& depth,
                                          const std::vector<char>& valid, int width, int height) {
  std::vector<double> cur = depth;
  std::vector<char> cur_valid = valid;
  for (;;) {
    std::vector<double> next = cur;
    std::vector<char> next_valid = cur_valid;
    int filled = 0;
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        if (cur_valid[static_cast<size_t>(v) * width + u]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (int dv = -2; dv <= 2; ++dv) {
          for (int du = -2; du <= 2; ++du) {
            const int vv = v + dv, uu = u + du;
            if (vv < 0 || vv >= height || uu < 0 || uu >= width) continue;
            if (cur_valid[static_cast<size_t>(vv) * width + uu])
              best = std::min(best, cur[static_cast<size_t>(vv) * width + uu]);
          }
        }
        if (std::isfinite(best)) {
          next[static_cast<size_t>(v) * width + u] = best;
          next_valid[static_cast<size_t>(v) * width + u] = 1;
          ++filled;
        }
      }
    }
    cur.swap(next);
    cur_valid.swap(next_valid);
    if (filled == 0) break;
  }
  return cur;
}

struct FdSummary {
  int checked = 0;
  int skipped = 0;
  int failures = 0;
  double max_error = 0.0;
  bool passed() const { return failures == 0 && checked > 0; }
};

// Central difference d eval / d cell with the activation-pattern guard: when
// the +/-h passes disagree on a relu sign or an argmax pick, the probe sits
// on a kink and is reported as skipped (nullopt) instead of compared.
inline std::optional<double> fd_wrt(const std::function<double()>& eval, double& cell, double h) {
  using pointfuse::nn::ActivationTrace;
  const double saved = cell;
  ActivationTrace plus, minus;
  pointfuse::nn::set_activation_trace(&plus);
  cell = saved + h;
  const double fp = eval();
  pointfuse::nn::set_activation_trace(&minus);
  cell = saved - h;
  const double fm = eval();
  pointfuse::nn::set_activation_trace(nullptr);
  cell = saved;
  if (plus.marks != minus.marks) return std::nullopt;
  return (fp - fm) / (2.0 * h);
}

// Checks analytic input gradients of a scalar-producing graph against central
// differences, element by element over the listed input tensors.
inline FdSummary check_input_gradients(const std::function<pointfuse::nn::Tensor()>& make_loss,
                                       const std::vector<pointfuse::nn::Tensor>& inputs,
                                       double h = 1e-5, double rel_tol = 1e-4,
                                       double abs_floor = 1e-7) {
  for (auto t : inputs) t.clear_grad();
  pointfuse::nn::backward(make_loss());

  FdSummary out;
  for (const auto& t : inputs) {
    auto& values = t.node()->value;
    for (size_t i = 0; i < values.size(); ++i) {
      const double analytic = t.grad_at(static_cast<int>(i));
      const auto numeric = fd_wrt([&] { return make_loss().item(); }, values[i], h);
      if (!numeric) {
        ++out.skipped;
        continue;
      }
      ++out.checked;
      const double err = std::abs(analytic - *numeric);
      out.max_error = std::max(out.max_error, err);
      const bool ok =
          err <= rel_tol * std::max(std::abs(analytic), std::abs(*numeric)) || err <= abs_floor;
      if (!ok) ++out.failures;
    }
  }
  return out;
}

inline std::vector<Eigen::Vector3d> random_cloud(pointfuse::Rng& rng, int n, double span) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i)
    out.emplace_back(rng.uniform(-span, span), rng.uniform(-span, span), rng.uniform(-span, span));
  return out;
}

inline Eigen::Matrix3d random_rotation(pointfuse::Rng& rng) {
  Eigen::Vector3d axis(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  if (axis.norm() < 1e-6) axis = Eigen::Vector3d::UnitZ();
  return Eigen::AngleAxisd(rng.uniform(-3.0, 3.0), axis.normalized()).toRotationMatrix();
}

inline pointfuse::nn::Tensor random_tensor(pointfuse::Rng& rng, pointfuse::nn::Shape shape,
                                           double span = 1.0, bool requires_grad = true) {
  std::vector<double> data(pointfuse::nn::shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-span, span);
  return pointfuse::nn::Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace oracles
