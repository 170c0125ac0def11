#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mtdp/numkernel/rng.hpp"
#include "mtdp/numkernel/tape.hpp"

namespace mtdp::nk {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "param[index]" of the largest error
};

/// Compares reverse-mode gradients against central differences for a sample
/// of parameter coordinates. `build` must record a scalar loss on the tape it
/// is given and be a pure function of the parameter values.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
/// the floor keeps round-off on near-zero components from dominating.
/// `prefix`, if non-empty, restricts sampling to parameters whose names start with it.
inline GradCheckReport gradient_check(ParamSet<double>& params,
                                      const std::function<Var<double>(Tape<double>&)>& build,
                                      std::size_t max_coords, Stream rng, double eps = 1e-5,
                                      double floor = 1e-4, const std::string& prefix = "") {
  params.zero_grad();
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  std::vector<std::pair<Parameter<double>*, std::size_t>> coords;
  for (auto* p : params.all()) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
  }
  if (coords.size() > max_coords) {
    for (std::size_t i = 0; i < max_coords; ++i) {
      const std::size_t j = i + rng.uniform_int(coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(max_coords);
  }
  auto eval = [&] {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    return build(tape).value()[0];
  };
  GradCheckReport report;
  for (auto [p, i] : coords) {
    const double saved = p->value[i];
    p->value[i] = saved + eps;
    const double up = eval();
    p->value[i] = saved - eps;
    const double down = eval();
    p->value[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = p->grad[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_rel_error || report.checked == 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.worst = p->name + "[" + std::to_string(i) + "]";
    }
    ++report.checked;
  }
  return report;
}

}  // namespace mtdp::nk
