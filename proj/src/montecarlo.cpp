#include "rsc/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "rsc/error.hpp"
#include "rsc/kernels.hpp"
#include "rsc/parallel.hpp"

namespace rsc {

Policy Policy::constant(std::size_t index) {
  Policy p;
  p.constant_ = index;
  p.description_ = "constant:" + std::to_string(index);
  return p;
}

Policy Policy::feedback(Feedback fn, std::string description) {
  if (!fn) throw std::invalid_argument("feedback policy needs a callable");
  Policy p;
  p.feedback_ = std::move(fn);
  p.description_ = std::move(description);
  return p;
}

Policy Policy::open_loop(std::vector<std::size_t> per_step) {
  if (per_step.empty()) throw std::invalid_argument("open-loop policy needs at least one step");
  Policy p;
  p.open_loop_ = std::move(per_step);
  p.description_ = "open_loop";
  return p;
}

std::size_t Policy::choose(std::size_t step, double s, StateView x) const {
  if (constant_) return *constant_;
  if (feedback_) return feedback_(s, x);
  if (step >= open_loop_.size()) {
    throw std::out_of_range("open-loop policy has " + std::to_string(open_loop_.size()) +
                            " steps, step " + std::to_string(step) + " requested");
  }
  return open_loop_[step];
}

std::optional<std::size_t> Policy::max_index() const {
  if (constant_) return constant_;
  if (!open_loop_.empty()) return *std::max_element(open_loop_.begin(), open_loop_.end());
  return std::nullopt;
}

namespace {

constexpr std::size_t kBlockPaths = 4096;

std::string witness(double s, StateView x, std::size_t u) {
  std::ostringstream os;
  os.precision(17);
  os << "(s=" << s << ", x=[";
  for (std::size_t d = 0; d < x.size(); ++d) os << (d ? ", " : "") << x[d];
  os << "], u=#" << u << ")";
  return os.str();
}

std::vector<double> uniform_grid(const Horizon& h, std::size_t n_steps) {
  std::vector<double> grid(n_steps + 1);
  const double len = h.length();
  for (std::size_t k = 0; k < n_steps; ++k) {
    grid[k] = h.start + len * static_cast<double>(k) / static_cast<double>(n_steps);
  }
  grid[n_steps] = h.end;
  return grid;
}

void check_inputs(const ProblemModel& model, StateView x0, std::size_t n_steps,
                  std::size_t n_paths) {
  if (n_steps == 0 || n_paths == 0) throw ModelError("simulation needs n_steps, n_paths >= 1");
  if (x0.size() != model.state_dim()) throw ModelError("x0 dimension does not match the model");
  if (!model.domain().contains(x0)) throw ModelError("x0 lies outside the domain box");
}

// Simulates paths [first, first + count) of one block. Visitor gets
// step(k, i, x, u_index, dw) before each Euler step and final(i, x) at the end.
template <typename Visitor>
void simulate_block(const ProblemModel& model, const Policy& policy, StateView x0,
                    const std::vector<double>& grid, std::uint64_t seed, std::size_t block,
                    std::size_t count, Visitor& visitor) {
  const std::size_t n = model.state_dim();
  const std::size_t n_steps = grid.size() - 1;
  const std::size_t n_controls = model.controls().size();
  std::vector<double> x(count * n), x_next(count * n), drift(count * n), diff(count * n);
  std::vector<double> dw(count), dw_wide(count * n);
  for (std::size_t i = 0; i < count; ++i) std::copy(x0.begin(), x0.end(), x.begin() + i * n);

  std::mt19937_64 rng(mix_seed(seed, block));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto& kern = kernels::active();

  for (std::size_t k = 0; k < n_steps; ++k) {
    const double s = grid[k];
    const double dt = grid[k + 1] - grid[k];
    const double sq = std::sqrt(dt);
    for (std::size_t i = 0; i < count; ++i) dw[i] = sq * normal(rng);
    for (std::size_t i = 0; i < count; ++i) {
      const StateView xi(x.data() + i * n, n);
      const std::size_t ui = policy.choose(k, s, xi);
      if (ui >= n_controls) {
        throw ModelError("policy returned control index " + std::to_string(ui) +
                         " outside U at " + witness(s, xi, ui));
      }
      const ControlView u = model.controls()[ui];
      const std::span<double> bi(drift.data() + i * n, n);
      const std::span<double> si(diff.data() + i * n, n);
      model.drift(s, xi, u, bi);
      model.diffusion(s, xi, u, si);
      for (std::size_t d = 0; d < n; ++d) {
        if (!std::isfinite(bi[d]) || !std::isfinite(si[d])) {
          throw NonFiniteError("non-finite drift/diffusion at " + witness(s, xi, ui));
        }
        dw_wide[i * n + d] = dw[i];
      }
      visitor.step(k, i, xi, ui, dw[i]);
    }
    kern.euler_step(x.data(), drift.data(), diff.data(), dw_wide.data(), dt, x_next.data(),
                    count * n);
    for (std::size_t j = 0; j < count * n; ++j) {
      if (!std::isfinite(x_next[j])) {
        const std::size_t i = j / n;
        throw NonFiniteError("state overflow after step from " +
                             witness(s, StateView(x.data() + i * n, n), 0));
      }
    }
    x.swap(x_next);
  }
  for (std::size_t i = 0; i < count; ++i) visitor.final(i, StateView(x.data() + i * n, n));
}

template <typename MakeVisitor>
void run_blocks(const ProblemModel& model, const Policy& policy, StateView x0,
                const std::vector<double>& grid, std::size_t n_paths, std::uint64_t seed,
                MakeVisitor make_visitor) {
  const std::size_t n_blocks = (n_paths + kBlockPaths - 1) / kBlockPaths;
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t first = b * kBlockPaths;
    const std::size_t count = std::min(kBlockPaths, n_paths - first);
    auto visitor = make_visitor(first);
    simulate_block(model, policy, x0, grid, seed, b, count, visitor);
  });
}

}  // namespace

PathBundle simulate_paths(const ProblemModel& model, const Policy& policy, StateView x0,
                          std::size_t n_steps, std::size_t n_paths, std::uint64_t seed) {
  check_inputs(model, x0, n_steps, n_paths);
  if (model.controls().size() > 65536) throw ModelError("path storage supports |U| <= 65536");
  const std::size_t n = model.state_dim();
  PathBundle b;
  b.n_steps = n_steps;
  b.n_paths = n_paths;
  b.state_dim = n;
  b.seed = seed;
  b.time_grid = uniform_grid(model.horizon(), n_steps);
  b.x0.assign(x0.begin(), x0.end());
  b.X.resize((n_steps + 1) * n_paths * n);
  b.u.resize(n_steps * n_paths);
  b.dW.resize(n_steps * n_paths);

  struct Writer {
    PathBundle* b;
    std::size_t first;
    void step(std::size_t k, std::size_t i, StateView x, std::size_t u, double dw) {
      const std::size_t idx = k * b->n_paths + first + i;
      std::copy(x.begin(), x.end(), b->X.begin() + idx * b->state_dim);
      b->u[idx] = static_cast<std::uint16_t>(u);
      b->dW[idx] = dw;
    }
    void final(std::size_t i, StateView x) {
      const std::size_t idx = b->n_steps * b->n_paths + first + i;
      std::copy(x.begin(), x.end(), b->X.begin() + idx * b->state_dim);
    }
  };
  run_blocks(model, policy, x0, b.time_grid, n_paths, seed,
             [&](std::size_t first) { return Writer{&b, first}; });
  return b;
}

std::vector<double> path_costs(const ProblemModel& model, const PathBundle& bundle) {
  std::vector<double> costs(bundle.n_paths);
  parallel_for((bundle.n_paths + kBlockPaths - 1) / kBlockPaths, [&](std::size_t blk) {
    const std::size_t first = blk * kBlockPaths;
    const std::size_t last = std::min(bundle.n_paths, first + kBlockPaths);
    for (std::size_t i = first; i < last; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < bundle.n_steps; ++k) {
        const double s = bundle.time_grid[k];
        acc += model.running_cost(s, bundle.state(k, i), model.controls()[bundle.control(k, i)]) *
               bundle.dt(k);
      }
      costs[i] = acc + model.terminal_cost(bundle.state(bundle.n_steps, i));
    }
  });
  return costs;
}

std::vector<double> cost_samples(const ProblemModel& model, const Policy& policy, StateView x0,
                                 std::size_t n_steps, std::size_t n_paths, std::uint64_t seed) {
  check_inputs(model, x0, n_steps, n_paths);
  const std::vector<double> grid = uniform_grid(model.horizon(), n_steps);
  std::vector<double> costs(n_paths, 0.0);

  struct Accumulator {
    const ProblemModel* model;
    const std::vector<double>* grid;
    double* out;
    void step(std::size_t k, std::size_t i, StateView x, std::size_t u, double) {
      const double s = (*grid)[k];
      out[i] += model->running_cost(s, x, model->controls()[u]) * ((*grid)[k + 1] - (*grid)[k]);
    }
    void final(std::size_t i, StateView x) { out[i] = out[i] + model->terminal_cost(x); }
  };
  run_blocks(model, policy, x0, grid, n_paths, seed, [&](std::size_t first) {
    return Accumulator{&model, &grid, costs.data() + first};
  });
  return costs;
}

CostEstimate estimate_risk_cost(std::span<const double> costs, double mu) {
  if (costs.empty()) throw std::invalid_argument("estimate_risk_cost: no samples");
  if (!(mu > 0.0)) throw ModelError("risk parameter mu must be > 0");
  double c_max = costs[0];
  for (double c : costs) {
    if (!std::isfinite(c)) throw NonFiniteError("non-finite path cost");
    c_max = std::max(c_max, c);
  }
  const std::size_t n = costs.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(mu * (costs[i] - c_max));
  // Shift by the first weight so identical weights give an exact mean.
  const double w0 = w[0];
  double acc = 0.0;
  for (double v : w) acc += v - w0;
  const double mean = w0 + acc / static_cast<double>(n);
  double ss = 0.0;
  for (double v : w) ss += (v - mean) * (v - mean);

  CostEstimate est;
  est.mu = mu;
  est.n_paths = n;
  est.value = c_max + std::log(mean) / mu;
  if (n > 1) {
    const double se_mean = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    est.std_error = se_mean / (mu * mean);
  }
  return est;
}

CostEstimate risk_sensitive_cost(const ProblemModel& model, const PathBundle& bundle) {
  const std::vector<double> costs = path_costs(model, bundle);
  return estimate_risk_cost(costs, model.risk());
}

ExpansionTable expansion_from_costs(std::span<const double> costs, const std::vector<double>& mus) {
  for (std::size_t i = 0; i < mus.size(); ++i) {
    if (!(mus[i] > 0.0)) throw std::invalid_argument("expansion check needs mu > 0");
    for (std::size_t j = 0; j < i; ++j) {
      if (mus[i] == mus[j]) throw std::invalid_argument("expansion check needs distinct mu values");
    }
  }
  const std::size_t n = costs.size();
  const double c0 = costs[0];
  double acc = 0.0;
  for (double c : costs) acc += c - c0;
  const double mean = c0 + acc / static_cast<double>(n);
  double ss = 0.0;
  for (double c : costs) ss += (c - mean) * (c - mean);
  const double var = ss / static_cast<double>(n);

  ExpansionTable table;
  for (double mu : mus) {
    ExpansionRow row;
    row.mu = mu;
    row.cost = estimate_risk_cost(costs, mu).value;
    row.mean = mean;
    row.variance = var;
    row.prediction = mean + 0.5 * mu * var;
    row.residual = row.cost - row.prediction;
    table.rows.push_back(row);
  }
  table.slope = fitted_slope(table.rows);
  return table;
}

ExpansionTable small_mu_expansion_check(const ProblemModel& model, const Policy& policy,
                                        StateView x0, const std::vector<double>& mus,
                                        std::size_t n_steps, std::size_t n_paths,
                                        std::uint64_t seed) {
  const std::vector<double> costs = cost_samples(model, policy, x0, n_steps, n_paths, seed);
  return expansion_from_costs(costs, mus);
}

std::optional<double> fitted_slope(const std::vector<ExpansionRow>& rows) {
  if (rows.size() < 2) return std::nullopt;
  double sx = 0.0, sy = 0.0;
  for (const auto& r : rows) {
    if (r.residual == 0.0) return std::nullopt;
    sx += std::log(r.mu);
    sy += std::log(std::fabs(r.residual));
  }
  const double m = static_cast<double>(rows.size());
  const double mx = sx / m, my = sy / m;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& r : rows) {
    const double dx = std::log(r.mu) - mx;
    sxy += dx * (std::log(std::fabs(r.residual)) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

void write_paths_csv(std::ostream& out, const ProblemModel& model, const PathBundle& bundle,
                     std::size_t max_paths) {
  const std::size_t n = bundle.state_dim;
  const std::size_t m = model.control_dim();
  out << "path_id,k,s_k";
  for (std::size_t d = 0; d < n; ++d) out << ",x_" << d + 1;
  if (m == 1) {
    out << ",u";
  } else {
    for (std::size_t j = 0; j < m; ++j) out << ",u_" << j + 1;
  }
  out << ",dW\n";
  out.precision(17);
  const std::size_t paths = std::min(max_paths, bundle.n_paths);
  for (std::size_t i = 0; i < paths; ++i) {
    for (std::size_t k = 0; k <= bundle.n_steps; ++k) {
      out << i << ',' << k << ',' << bundle.time_grid[k];
      for (std::size_t d = 0; d < n; ++d) out << ',' << bundle.x(k, i, d);
      if (k < bundle.n_steps) {
        const ControlView u = model.controls()[bundle.control(k, i)];
        for (std::size_t j = 0; j < m; ++j) out << ',' << u[j];
        out << ',' << bundle.dw(k, i) << '\n';
      } else {
        for (std::size_t j = 0; j < m; ++j) out << ',';
        out << ",\n";
      }
    }
  }
}

}  // namespace rsc
