#include "pointfuse/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace pointfuse::nn {

GradCheckReport gradcheck_params(ParamStore& store, const std::function<Tensor()>& rebuild,
                                 int probes, Rng& rng, double h, double rel_tol,
                                 double abs_floor) {
  if (probes < 1) throw std::invalid_argument("gradcheck: probes must be >= 1");
  const auto& entries = store.entries();
  if (entries.empty()) throw std::invalid_argument("gradcheck: no parameters");

  int64_t total_elements = 0;
  for (const auto& [name, t] : entries) total_elements += t.numel();

  // One reverse pass at the base point gives every analytic derivative.
  store.zero_grad();
  Tensor base = rebuild();
  backward(base);
  std::vector<std::vector<double>> analytic(entries.size());
  for (size_t e = 0; e < entries.size(); ++e) {
    const Tensor& t = entries[e].second;
    analytic[e].resize(t.numel());
    for (int i = 0; i < t.numel(); ++i) analytic[e][i] = t.grad_at(i);
  }

  GradCheckReport report;
  for (int p = 0; p < probes; ++p) {
    // Uniform over elements, so big tensors get proportionally more probes.
    int64_t flat = rng.uniform_int(static_cast<int>(total_elements));
    size_t e = 0;
    while (flat >= entries[e].second.numel()) {
      flat -= entries[e].second.numel();
      ++e;
    }
    const int elem = static_cast<int>(flat);
    auto node = entries[e].second.node();
    const double x0 = node->value[elem];

    ActivationTrace plus, minus;
    node->value[elem] = x0 + h;
    set_activation_trace(&plus);
    const double f_plus = rebuild().item();
    node->value[elem] = x0 - h;
    set_activation_trace(&minus);
    const double f_minus = rebuild().item();
    set_activation_trace(nullptr);
    node->value[elem] = x0;

    ++report.probes;
    if (plus.marks != minus.marks) {
      ++report.skipped;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic[e][elem];
    const double err = std::abs(a - numeric);
    ++report.checked;
    report.max_error = std::max(report.max_error, err);
    const bool ok = err <= rel_tol * std::max(std::abs(a), std::abs(numeric)) || err <= abs_floor;
    if (!ok) {
      ++report.failures;
      report.failed.push_back({entries[e].first, elem, a, numeric, err});
    }
  }
  return report;
}

}  // namespace pointfuse::nn
