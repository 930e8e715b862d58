#include "pointfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace pointfuse::nn {

namespace {

ActivationTrace* g_trace = nullptr;

void trace_mark(int32_t m) {
  if (g_trace) g_trace->marks.push_back(m);
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check(bool cond, const char* msg) {
  if (!cond) fail(msg);
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value,
                                std::vector<std::shared_ptr<Node>> inputs,
                                std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) {
    if (in->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

// Accumulate into a node's grad, sizing it on first touch.
void accum(Node& n, int64_t i, double v) {
  if (!n.requires_grad) return;
  if (n.grad.size() != static_cast<size_t>(n.numel())) n.grad.assign(n.numel(), 0.0);
  n.grad[i] += v;
}

void ensure_grad(Node& n) {
  if (n.requires_grad && n.grad.size() != static_cast<size_t>(n.numel()))
    n.grad.assign(n.numel(), 0.0);
}

}  // namespace

void set_activation_trace(ActivationTrace* trace) { g_trace = trace; }
ActivationTrace* activation_trace() { return g_trace; }

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) fail("tensor shape dimensions must be >= 0");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> data(shape_numel(shape), v);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape))
    fail("tensor data length does not match shape");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return node_->numel(); }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

int Tensor::rows() const {
  check(rank() == 2, "rows(): tensor is not rank-2");
  return node_->shape[0];
}

int Tensor::cols() const {
  check(rank() == 2, "cols(): tensor is not rank-2");
  return node_->shape[1];
}

double Tensor::item() const {
  check(numel() == 1, "item(): tensor is not a scalar");
  return node_->value[0];
}

double Tensor::at(int i) const { return node_->value.at(i); }

double Tensor::at(int i, int j) const {
  check(rank() == 2, "at(i,j): tensor is not rank-2");
  return node_->value.at(static_cast<size_t>(i) * node_->shape[1] + j);
}

std::vector<double>& Tensor::data() { return node_->value; }
const std::vector<double>& Tensor::data() const { return node_->value; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const {
  return node_->grad.size() == static_cast<size_t>(node_->numel());
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("tensor has no gradient");
  return node_->grad;
}

double Tensor::grad_at(int i) const {
  if (!has_grad()) {
    check(i >= 0 && i < numel(), "grad_at: index out of range");
    return 0.0;  // disconnected from the last backward pass
  }
  return node_->grad.at(i);
}

void Tensor::clear_grad() { node_->grad.clear(); }

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) fail(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> v(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) v[i] = a.data()[i] + b.data()[i];
  auto node = make_node(a.shape(), std::move(v), {a.node(), b.node()}, [](Node& n) {
    for (int64_t i = 0; i < n.numel(); ++i) {
      accum(*n.inputs[0], i, n.grad[i]);
      accum(*n.inputs[1], i, n.grad[i]);
    }
  });
  return Tensor(node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> v(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) v[i] = a.data()[i] - b.data()[i];
  auto node = make_node(a.shape(), std::move(v), {a.node(), b.node()}, [](Node& n) {
    for (int64_t i = 0; i < n.numel(); ++i) {
      accum(*n.inputs[0], i, n.grad[i]);
      accum(*n.inputs[1], i, -n.grad[i]);
    }
  });
  return Tensor(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> v(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) v[i] = a.data()[i] * b.data()[i];
  auto node = make_node(a.shape(), std::move(v), {a.node(), b.node()}, [](Node& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    for (int64_t i = 0; i < n.numel(); ++i) {
      accum(*n.inputs[0], i, n.grad[i] * bv[i]);
      accum(*n.inputs[1], i, n.grad[i] * av[i]);
    }
  });
  return Tensor(node);
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) v[i] = a.data()[i] * c;
  auto node = make_node(a.shape(), std::move(v), {a.node()}, [c](Node& n) {
    for (int64_t i = 0; i < n.numel(); ++i) accum(*n.inputs[0], i, n.grad[i] * c);
  });
  return Tensor(node);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear: x and w rank-2, b rank-1");
  const int n = x.rows(), in = x.cols();
  const int out = w.rows();
  if (w.cols() != in) fail("linear: weight in-width does not match input width");
  if (b.shape()[0] != out) fail("linear: bias length does not match out-width");

  std::vector<double> y(static_cast<size_t>(n) * out);
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  for (int i = 0; i < n; ++i) {
    const double* xrow = xv.data() + static_cast<size_t>(i) * in;
    double* yrow = y.data() + static_cast<size_t>(i) * out;
    for (int o = 0; o < out; ++o) {
      const double* wrow = wv.data() + static_cast<size_t>(o) * in;
      double acc = bv[o];
      for (int k = 0; k < in; ++k) acc += xrow[k] * wrow[k];
      yrow[o] = acc;
    }
  }
  auto node = make_node({n, out}, std::move(y), {x.node(), w.node(), b.node()},
                        [n, in, out](Node& nd) {
    Node& xn = *nd.inputs[0];
    Node& wn = *nd.inputs[1];
    Node& bn = *nd.inputs[2];
    ensure_grad(xn);
    ensure_grad(wn);
    ensure_grad(bn);
    const auto& g = nd.grad;
    for (int i = 0; i < n; ++i) {
      const double* grow = g.data() + static_cast<size_t>(i) * out;
      const double* xrow = xn.value.data() + static_cast<size_t>(i) * in;
      for (int o = 0; o < out; ++o) {
        const double go = grow[o];
        if (go == 0.0) continue;
        const double* wrow = wn.value.data() + static_cast<size_t>(o) * in;
        if (xn.requires_grad) {
          double* gx = xn.grad.data() + static_cast<size_t>(i) * in;
          for (int k = 0; k < in; ++k) gx[k] += go * wrow[k];
        }
        if (wn.requires_grad) {
          double* gw = wn.grad.data() + static_cast<size_t>(o) * in;
          for (int k = 0; k < in; ++k) gw[k] += go * xrow[k];
        }
        if (bn.requires_grad) bn.grad[o] += go;
      }
    }
  });
  return Tensor(node);
}

Tensor relu(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) {
    v[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    trace_mark(x.data()[i] > 0.0 ? 1 : 0);
  }
  auto node = make_node(x.shape(), std::move(v), {x.node()}, [](Node& n) {
    const auto& xv = n.inputs[0]->value;
    for (int64_t i = 0; i < n.numel(); ++i) {
      if (xv[i] > 0.0) accum(*n.inputs[0], i, n.grad[i]);
    }
  });
  return Tensor(node);
}

double sigmoid_value(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) v[i] = sigmoid_value(x.data()[i]);
  auto node = make_node(x.shape(), std::move(v), {x.node()}, [](Node& n) {
    for (int64_t i = 0; i < n.numel(); ++i) {
      double s = n.value[i];
      accum(*n.inputs[0], i, n.grad[i] * s * (1.0 - s));
    }
  });
  return Tensor(node);
}

Tensor exp(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) v[i] = std::exp(x.data()[i]);
  auto node = make_node(x.shape(), std::move(v), {x.node()}, [](Node& n) {
    for (int64_t i = 0; i < n.numel(); ++i) accum(*n.inputs[0], i, n.grad[i] * n.value[i]);
  });
  return Tensor(node);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const int rank = parts[0].rank();
  check(rank == 1 || rank == 2, "concat: rank 1 or 2 only");
  check(axis >= 0 && axis < rank, "concat: invalid axis");
  for (const auto& p : parts) {
    if (p.rank() != rank) fail("concat: mixed ranks");
  }

  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.shape()[d] != parts[0].shape()[d]) fail("concat: shape mismatch");
    }
    out_shape[axis] += p.shape()[axis];
  }

  std::vector<double> v(shape_numel(out_shape));
  std::vector<std::shared_ptr<Node>> inputs;
  inputs.reserve(parts.size());
  for (const auto& p : parts) inputs.push_back(p.node());

  if (rank == 1 || axis == 0) {
    size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data().begin(), p.data().end(), v.begin() + off);
      off += p.data().size();
    }
    auto node = make_node(out_shape, std::move(v), std::move(inputs), [](Node& n) {
      size_t off = 0;
      for (auto& in : n.inputs) {
        for (int64_t i = 0; i < in->numel(); ++i) accum(*in, i, n.grad[off + i]);
        off += in->numel();
      }
    });
    return Tensor(node);
  }

  // rank-2, axis 1
  const int n = out_shape[0];
  const int out_cols = out_shape[1];
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < n; ++i) {
      std::copy(p.data().begin() + static_cast<size_t>(i) * w,
                p.data().begin() + static_cast<size_t>(i + 1) * w,
                v.begin() + static_cast<size_t>(i) * out_cols + off);
    }
    off += w;
  }
  auto node = make_node(out_shape, std::move(v), std::move(inputs), [n, out_cols](Node& nd) {
    int off = 0;
    for (auto& in : nd.inputs) {
      const int w = in->shape[1];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < w; ++j) {
          accum(*in, static_cast<int64_t>(i) * w + j,
                nd.grad[static_cast<size_t>(i) * out_cols + off + j]);
        }
      }
      off += w;
    }
  });
  return Tensor(node);
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const int rank = x.rank();
  check(rank == 1 || rank == 2, "slice: rank 1 or 2 only");
  check(axis >= 0 && axis < rank, "slice: invalid axis");
  check(start >= 0 && len >= 0 && start + len <= x.shape()[axis], "slice: out of range");

  if (rank == 1) {
    std::vector<double> v(x.data().begin() + start, x.data().begin() + start + len);
    auto node = make_node({len}, std::move(v), {x.node()}, [start, len](Node& n) {
      for (int i = 0; i < len; ++i) accum(*n.inputs[0], start + i, n.grad[i]);
    });
    return Tensor(node);
  }

  const int n = x.rows(), w = x.cols();
  if (axis == 0) {
    std::vector<double> v(x.data().begin() + static_cast<size_t>(start) * w,
                          x.data().begin() + static_cast<size_t>(start + len) * w);
    auto node = make_node({len, w}, std::move(v), {x.node()}, [start, len, w](Node& n) {
      for (int64_t i = 0; i < static_cast<int64_t>(len) * w; ++i)
        accum(*n.inputs[0], static_cast<int64_t>(start) * w + i, n.grad[i]);
    });
    return Tensor(node);
  }

  std::vector<double> v(static_cast<size_t>(n) * len);
  for (int i = 0; i < n; ++i) {
    std::copy(x.data().begin() + static_cast<size_t>(i) * w + start,
              x.data().begin() + static_cast<size_t>(i) * w + start + len,
              v.begin() + static_cast<size_t>(i) * len);
  }
  auto node = make_node({n, len}, std::move(v), {x.node()}, [n, w, start, len](Node& nd) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < len; ++j) {
        accum(*nd.inputs[0], static_cast<int64_t>(i) * w + start + j,
              nd.grad[static_cast<size_t>(i) * len + j]);
      }
    }
  });
  return Tensor(node);
}

Tensor pool(const Tensor& x, PoolMode mode, int axis) {
  check(x.rank() == 2, "pool: rank-2 input required");
  check(axis == 0 || axis == 1, "pool: invalid axis");
  const int n = x.rows(), w = x.cols();
  const int out_len = axis == 0 ? w : n;
  const int count = axis == 0 ? n : w;
  check(count > 0, "pool: cannot reduce an empty axis");

  std::vector<double> v(out_len);
  std::vector<int> arg(mode == PoolMode::kMax ? out_len : 0);
  for (int o = 0; o < out_len; ++o) {
    if (mode == PoolMode::kMax) {
      int best = 0;
      double bv = axis == 0 ? x.at(0, o) : x.at(o, 0);
      for (int k = 1; k < count; ++k) {
        double cur = axis == 0 ? x.at(k, o) : x.at(o, k);
        if (cur > bv) {
          bv = cur;
          best = k;
        }
      }
      v[o] = bv;
      arg[o] = best;
      trace_mark(best);
    } else {
      double acc = 0.0;
      for (int k = 0; k < count; ++k) acc += axis == 0 ? x.at(k, o) : x.at(o, k);
      v[o] = acc / count;
    }
  }
  auto node = make_node({out_len}, std::move(v), {x.node()},
                        [mode, axis, w, count, arg](Node& nd) {
    const int out_len = nd.shape[0];
    for (int o = 0; o < out_len; ++o) {
      if (mode == PoolMode::kMax) {
        int k = arg[o];
        int64_t idx = axis == 0 ? static_cast<int64_t>(k) * w + o : static_cast<int64_t>(o) * w + k;
        accum(*nd.inputs[0], idx, nd.grad[o]);
      } else {
        for (int k = 0; k < count; ++k) {
          int64_t idx =
              axis == 0 ? static_cast<int64_t>(k) * w + o : static_cast<int64_t>(o) * w + k;
          accum(*nd.inputs[0], idx, nd.grad[o] / count);
        }
      }
    }
  });
  return Tensor(node);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
  check(x.rank() == 2, "gather_rows: rank-2 input required");
  const int n = x.rows(), w = x.cols();
  const int m = static_cast<int>(indices.size());
  std::vector<double> v(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i) {
    check(indices[i] >= 0 && indices[i] < n, "gather_rows: index out of range");
    std::copy(x.data().begin() + static_cast<size_t>(indices[i]) * w,
              x.data().begin() + static_cast<size_t>(indices[i] + 1) * w,
              v.begin() + static_cast<size_t>(i) * w);
  }
  auto node = make_node({m, w}, std::move(v), {x.node()}, [indices, w](Node& nd) {
    const int m = nd.shape[0];
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < w; ++j) {
        accum(*nd.inputs[0], static_cast<int64_t>(indices[i]) * w + j,
              nd.grad[static_cast<size_t>(i) * w + j]);
      }
    }
  });
  return Tensor(node);
}

Tensor group_pool(const Tensor& x, const std::vector<std::vector<int>>& groups, PoolMode mode) {
  check(x.rank() == 2, "group_pool: rank-2 input required");
  const int n = x.rows(), w = x.cols();
  const int m = static_cast<int>(groups.size());

  std::vector<double> v(static_cast<size_t>(m) * w, 0.0);
  std::vector<int> arg;  // argmax member per (group, col); -1 for empty groups
  if (mode == PoolMode::kMax) arg.assign(static_cast<size_t>(m) * w, -1);

  for (int g = 0; g < m; ++g) {
    const auto& members = groups[g];
    for (int idx : members) check(idx >= 0 && idx < n, "group_pool: index out of range");
    if (members.empty()) continue;
    double* out = v.data() + static_cast<size_t>(g) * w;
    if (mode == PoolMode::kMax) {
      int* ar = arg.data() + static_cast<size_t>(g) * w;
      for (int j = 0; j < w; ++j) {
        double best = x.at(members[0], j);
        int bi = members[0];
        for (size_t k = 1; k < members.size(); ++k) {
          double cur = x.at(members[k], j);
          if (cur > best) {
            best = cur;
            bi = members[k];
          }
        }
        out[j] = best;
        ar[j] = bi;
        trace_mark(bi);
      }
    } else {
      for (int idx : members) {
        const double* row = x.data().data() + static_cast<size_t>(idx) * w;
        for (int j = 0; j < w; ++j) out[j] += row[j];
      }
      const double inv = 1.0 / static_cast<double>(members.size());
      for (int j = 0; j < w; ++j) out[j] *= inv;
    }
  }

  auto node = make_node({m, w}, std::move(v), {x.node()},
                        [groups, w, mode, arg](Node& nd) {
    const int m = nd.shape[0];
    for (int g = 0; g < m; ++g) {
      if (groups[g].empty()) continue;
      if (mode == PoolMode::kMax) {
        for (int j = 0; j < w; ++j) {
          int src = arg[static_cast<size_t>(g) * w + j];
          accum(*nd.inputs[0], static_cast<int64_t>(src) * w + j,
                nd.grad[static_cast<size_t>(g) * w + j]);
        }
      } else {
        const double inv = 1.0 / static_cast<double>(groups[g].size());
        for (int idx : groups[g]) {
          for (int j = 0; j < w; ++j) {
            accum(*nd.inputs[0], static_cast<int64_t>(idx) * w + j,
                  nd.grad[static_cast<size_t>(g) * w + j] * inv);
          }
        }
      }
    }
  });
  return Tensor(node);
}

Tensor scatter_rows(const Tensor& x, const std::vector<std::pair<int, int>>& dst,
                    int out_rows, int out_cols) {
  check(x.rank() == 2, "scatter_rows: rank-2 input required");
  const int n = x.rows(), w = x.cols();
  check(static_cast<int>(dst.size()) == n, "scatter_rows: one destination per row required");
  std::vector<double> v(static_cast<size_t>(out_rows) * out_cols, 0.0);
  std::vector<char> used(v.size(), 0);
  for (int i = 0; i < n; ++i) {
    auto [r, c] = dst[i];
    check(r >= 0 && r < out_rows && c >= 0 && c + w <= out_cols, "scatter_rows: slot out of range");
    const size_t base = static_cast<size_t>(r) * out_cols + c;
    const double* row = x.data().data() + static_cast<size_t>(i) * w;
    for (int j = 0; j < w; ++j) {
      check(!used[base + j], "scatter_rows: overlapping slots");
      used[base + j] = 1;
      v[base + j] = row[j];
    }
  }
  auto node = make_node({out_rows, out_cols}, std::move(v), {x.node()},
                        [dst, w, out_cols](Node& nd) {
    for (size_t i = 0; i < dst.size(); ++i) {
      auto [r, c] = dst[i];
      for (int j = 0; j < w; ++j) {
        accum(*nd.inputs[0], static_cast<int64_t>(i) * w + j,
              nd.grad[static_cast<size_t>(r) * out_cols + c + j]);
      }
    }
  });
  return Tensor(node);
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto node = make_node({1}, {acc}, {x.node()}, [](Node& n) {
    for (int64_t i = 0; i < n.inputs[0]->numel(); ++i) accum(*n.inputs[0], i, n.grad[0]);
  });
  return Tensor(node);
}

Tensor mean(const Tensor& x) {
  check(x.numel() > 0, "mean: empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  auto node = make_node({1}, {acc * inv}, {x.node()}, [inv](Node& n) {
    for (int64_t i = 0; i < n.inputs[0]->numel(); ++i) accum(*n.inputs[0], i, n.grad[0] * inv);
  });
  return Tensor(node);
}

Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target, double delta) {
  check_same_shape(pred, target, "smooth_l1_loss");
  check(delta > 0.0, "smooth_l1_loss: delta must be > 0");
  const int64_t n = pred.numel();
  if (n == 0) return Tensor::scalar(0.0);

  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double e = pred.data()[i] - target.data()[i];
    double a = std::abs(e);
    acc += a < delta ? 0.5 * e * e / delta : a - 0.5 * delta;
  }
  auto node = make_node({1}, {acc / n}, {pred.node(), target.node()}, [delta, n](Node& nd) {
    const auto& pv = nd.inputs[0]->value;
    const auto& tv = nd.inputs[1]->value;
    const double g = nd.grad[0] / n;
    for (int64_t i = 0; i < n; ++i) {
      double e = pv[i] - tv[i];
      double de = std::abs(e) < delta ? e / delta : (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0));
      accum(*nd.inputs[0], i, g * de);
      accum(*nd.inputs[1], i, -g * de);
    }
  });
  return Tensor(node);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& labels) {
  check_same_shape(logits, labels, "bce_with_logits");
  for (double y : labels.data()) {
    if (y != 0.0 && y != 1.0) fail("bce_with_logits: labels must be 0 or 1");
  }
  const int64_t n = logits.numel();
  if (n == 0) return Tensor::scalar(0.0);

  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double x = logits.data()[i];
    double y = labels.data()[i];
    acc += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  auto node = make_node({1}, {acc / n}, {logits.node(), labels.node()}, [n](Node& nd) {
    const auto& xv = nd.inputs[0]->value;
    const auto& yv = nd.inputs[1]->value;
    const double g = nd.grad[0] / n;
    for (int64_t i = 0; i < n; ++i) {
      accum(*nd.inputs[0], i, g * (sigmoid_value(xv[i]) - yv[i]));
    }
  });
  return Tensor(node);
}

void backward(const Tensor& out) {
  check(out.defined(), "backward: undefined tensor");
  if (out.numel() != 1) throw std::invalid_argument("backward: output must be a scalar");
  Node* root = out.node().get();
  if (root->backward_done)
    throw std::runtime_error("backward: called twice on the same output without rebuilding");
  root->backward_done = true;
  if (!root->requires_grad) return;  // nothing reachable requires grad

  // Iterative post-order topological sort over requires_grad nodes.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->inputs.size()) {
      Node* child = node->inputs[next].get();
      ++next;
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->inputs.size())) {
      topo.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() == static_cast<size_t>(n->numel())) n->backprop(*n);
  }
}

}  // namespace pointfuse::nn
