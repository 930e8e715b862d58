#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pointfuse/layers.hpp"
#include "pointfuse/random.hpp"

namespace pointfuse::nn {

struct GradProbe {
  std::string param;
  int element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradCheckReport {
  int probes = 0;
  int checked = 0;
  int skipped = 0;  // nudge flipped a ReLU sign or a max pick
  int failures = 0;
  double max_error = 0.0;  // worst |analytic - numeric| among checked probes
  std::vector<GradProbe> failed;

  bool passed() const { return failures == 0; }
  double coverage() const {
    return probes == 0 ? 0.0 : static_cast<double>(checked) / static_cast<double>(probes);
  }
};

// Central finite differences on randomly probed parameter entries against one
// reverse-mode pass. rebuild() must reconstruct the scalar loss from the
// store's current values and be deterministic. A probe whose +/-h evaluations
// disagree in the recorded activation pattern sits on a kink and is skipped
// rather than failed. Tolerance: |a - n| <= rel_tol * max(|a|, |n|) or
// <= abs_floor.
GradCheckReport gradcheck_params(ParamStore& store, const std::function<Tensor()>& rebuild,
                                 int probes, Rng& rng, double h = 1e-5, double rel_tol = 1e-4,
                                 double abs_floor = 1e-7);

}  // namespace pointfuse::nn
