#include "pointfuse/layers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pointfuse/io_util.hpp"

namespace pointfuse::nn {

Tensor ParamStore::add_param(const std::string& name, Shape shape, std::vector<double> data) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
    throw std::invalid_argument("parameter name must be non-empty and whitespace-free: '" + name +
                               "'");
  for (const auto& [n, t] : entries_) {
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  Tensor t = Tensor::from_data(std::move(shape), std::move(data), /*requires_grad=*/true);
  entries_.emplace_back(name, t);
  adam_m_.emplace_back();
  adam_v_.emplace_back();
  return t;
}

Tensor ParamStore::make_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return add_param(name, std::move(shape), std::move(data));
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no parameter named " + name);
}

int64_t ParamStore::parameter_count() const {
  int64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) t.clear_grad();
}

void ParamStore::sgd_step(double lr) {
  for (auto& [_, t] : entries_) {
    if (!t.has_grad()) continue;
    const auto& g = t.grad();
    auto& v = t.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (size_t p = 0; p < entries_.size(); ++p) {
    Tensor& t = entries_[p].second;
    if (!t.has_grad()) continue;
    const auto& g = t.grad();
    auto& v = t.data();
    auto& m = adam_m_[p];
    auto& s = adam_v_[p];
    if (m.size() != v.size()) m.assign(v.size(), 0.0);
    if (s.size() != v.size()) s.assign(v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      s[i] = beta2 * s[i] + (1.0 - beta2) * g[i] * g[i];
      v[i] -= lr * (m[i] / bc1) / (std::sqrt(s[i] / bc2) + eps);
    }
  }
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out = open_out_binary(path);
  std::ostringstream head;
  head << "pointfuse-params v1\n";
  head << "count " << entries_.size() << "\n";
  int64_t offset = 0;
  for (const auto& [name, t] : entries_) {
    head << name << " " << t.rank();
    for (int d : t.shape()) head << " " << d;
    head << " " << offset << "\n";
    offset += t.numel() * 8;
  }
  head << "data f64 " << offset << "\n";
  out << head.str();
  for (const auto& [_, t] : entries_) {
    for (double v : t.data()) write_f64(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in = open_in_binary(path);
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw std::runtime_error(std::string("checkpoint truncated: ") + what);
    return line;
  };
  if (next_line("magic") != "pointfuse-params v1")
    throw std::runtime_error("not a parameter checkpoint: " + path);

  std::istringstream cl(next_line("count"));
  std::string tag;
  size_t count = 0;
  cl >> tag >> count;
  if (tag != "count" || count != entries_.size())
    throw std::runtime_error("checkpoint parameter count does not match model");

  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
  };
  std::vector<Entry> manifest(count);
  for (auto& e : manifest) {
    std::istringstream ls(next_line("manifest row"));
    int rank = 0;
    ls >> e.name >> rank;
    e.shape.resize(rank);
    for (int& d : e.shape) ls >> d;
    ls >> e.offset;
    if (!ls) throw std::runtime_error("malformed checkpoint manifest row: " + line);
  }
  std::istringstream dl(next_line("data header"));
  std::string dtag, dtype;
  int64_t total = 0;
  dl >> dtag >> dtype >> total;
  if (dtag != "data" || dtype != "f64")
    throw std::runtime_error("malformed checkpoint data header: " + line);

  const std::streampos blob_start = in.tellg();
  for (size_t p = 0; p < count; ++p) {
    const auto& e = manifest[p];
    Tensor& t = entries_[p].second;
    if (e.name != entries_[p].first)
      throw std::runtime_error("checkpoint name mismatch: expected " + entries_[p].first +
                               ", found " + e.name);
    if (e.shape != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + e.name);
    in.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    for (auto& v : t.data()) v = read_f64(in);
  }
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
}

LinearLayer::LinearLayer(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("linear layer widths must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w_ = store.make_uniform(name + ".w", {out, in}, bound, rng);
  b_ = store.make_uniform(name + ".b", {out}, bound, rng);
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least in/out widths");
  for (size_t k = 0; k + 1 < widths.size(); ++k) {
    layers_.emplace_back(store, name + "." + std::to_string(k), widths[k], widths[k + 1], rng);
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (size_t k = 0; k < layers_.size(); ++k) {
    h = layers_[k].forward(h);
    if (k + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

}  // namespace pointfuse::nn
