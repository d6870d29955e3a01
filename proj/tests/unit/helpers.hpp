#pragma once

#include <functional>
#include <vector>

#include "rsc/model.hpp"

namespace testing {

using Scalar1 = std::function<double(double s, double x, double u)>;

// One-dimensional model with one-dimensional controls.
inline rsc::ProblemModel scalar_model(Scalar1 b, Scalar1 sigma, Scalar1 f, std::function<double(double)> h,
                                      std::vector<double> controls, double mu = 1.0,
                                      rsc::DeclaredBounds bounds = {}) {
  rsc::ModelSpec spec;
  spec.name = "test";
  spec.state_dim = 1;
  spec.drift = [b](double s, rsc::StateView x, rsc::ControlView u, std::span<double> out) { out[0] = b(s, x[0], u[0]); };
  spec.diffusion = [sigma](double s, rsc::StateView x, rsc::ControlView u, std::span<double> out) {
    out[0] = sigma(s, x[0], u[0]);
  };
  spec.running_cost = [f](double s, rsc::StateView x, rsc::ControlView u) { return f(s, x[0], u[0]); };
  spec.terminal_cost = [h](rsc::StateView x) { return h(x[0]); };
  spec.risk = mu;
  for (double c : controls) spec.controls.push_back({c});
  spec.bounds = bounds;
  spec.time_homogeneous = true;
  return rsc::ProblemModel(spec);
}

inline double zero(double, double, double) { return 0.0; }
inline double one(double, double, double) { return 1.0; }

}  // namespace testing
