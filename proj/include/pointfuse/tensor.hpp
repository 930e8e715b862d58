#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace pointfuse::nn {

enum class PoolMode { kMax, kAvg };

// Sink for nonsmooth-branch decisions (relu signs, argmax picks). Installed by
// the finite-difference oracle so it can detect when a probe stepped across a
// kink; off in normal runs.
struct ActivationTrace {
  std::vector<int32_t> marks;
};
void set_activation_trace(ActivationTrace* trace);
ActivationTrace* activation_trace();

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backprop;

  int64_t numel() const { return shape_numel(shape); }
};

// Dense row-major tensor handle over a graph node. Rank 1 or 2; scalars are
// shape {1}. Values are doubles throughout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int rank() const;
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only

  double item() const;  // numel == 1
  double at(int i) const;
  double at(int i, int j) const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if absent
  double grad_at(int i) const;              // 0 for tensors the last backward never reached
  void clear_grad();

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// y = x * W^T + b. x: n*in, w: out*in, b: out. Result n*out.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);

// axis 0 stacks rows, axis 1 joins columns (rank-2); rank-1 tensors concat on axis 0.
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

// Reduce a rank-2 tensor along `axis`; result is rank-1.
Tensor pool(const Tensor& x, PoolMode mode, int axis);

// Row selection from a rank-2 tensor; backward scatter-adds.
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);

// Per-group reduction over rows of x (N*D) -> M*D, one output row per group.
// Empty groups yield zero rows. Duplicate indices within a group are counted
// as written; callers dedupe query padding first.
Tensor group_pool(const Tensor& x, const std::vector<std::vector<int>>& groups, PoolMode mode);

// Writes row v of x (V*w) into out[dst[v].first] at column dst[v].second.
// Slots may not overlap; used for height-axis stacking of voxel features.
Tensor scatter_rows(const Tensor& x, const std::vector<std::pair<int, int>>& dst,
                    int out_rows, int out_cols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean over elements of the Huber-style |e| branches; target is constant.
Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target, double delta);
// Mean of the numerically stable binary cross entropy on logits; labels constant.
Tensor bce_with_logits(const Tensor& logits, const Tensor& labels);

// Reverse-mode accumulation from a scalar output. Gradients accumulate into
// every requires_grad leaf reachable from `out`. Calling twice on the same
// output without rebuilding the graph throws.
void backward(const Tensor& out);

double sigmoid_value(double x);

}  // namespace pointfuse::nn
