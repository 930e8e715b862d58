#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pointfuse/random.hpp"
#include "pointfuse/tensor.hpp"

namespace pointfuse::nn {

// Ordered registry of named trainable tensors. Ownership of optimizer state
// and checkpoint round trips lives here so models stay plain call graphs.
class ParamStore {
 public:
  // Registers a fresh requires_grad tensor under `name`; names must be unique.
  Tensor add_param(const std::string& name, Shape shape, std::vector<double> data);
  // Uniform init in [-bound, bound] drawn from `rng`.
  Tensor make_uniform(const std::string& name, Shape shape, double bound, Rng& rng);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Tensor find(const std::string& name) const;  // throws if absent
  int64_t parameter_count() const;

  void zero_grad();
  // p -= lr * grad for every parameter that accumulated one this step.
  void sgd_step(double lr);
  // Bias-corrected Adam; moment state is allocated on first use.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Flat little-endian f64 blob preceded by a plain-text manifest of
  // (name, shape, byte offset) lines. Load validates name/shape agreement.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::vector<std::vector<double>> adam_m_, adam_v_;
  int64_t adam_t_ = 0;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  // Registers `<name>.w` (out*in) and `<name>.b` (out), both uniform in
  // [-1/sqrt(in), 1/sqrt(in)].
  LinearLayer(ParamStore& store, const std::string& name, int in, int out, Rng& rng);

  Tensor forward(const Tensor& x) const { return linear(x, w_, b_); }
  int in_width() const { return w_.cols(); }
  int out_width() const { return w_.rows(); }
  const Tensor& weight() const { return w_; }
  const Tensor& bias() const { return b_; }

 private:
  Tensor w_, b_;
};

// Linear stack with ReLU between layers and none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng);

  Tensor forward(const Tensor& x) const;
  int in_width() const { return layers_.front().in_width(); }
  int out_width() const { return layers_.back().out_width(); }

 private:
  std::vector<LinearLayer> layers_;
};

}  // namespace pointfuse::nn
