#include "rsc/regression.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "rsc/error.hpp"
#include "rsc/kernels.hpp"

namespace rsc {

std::string PolynomialBasis::describe() const {
  char buf[96];
  if (cells_per_dim > 0) {
    std::snprintf(buf, sizeof buf, "local_polynomial(total_degree=%zu, ridge=%g, cells_per_dim=%zu)",
                  degree, ridge, cells_per_dim);
  } else {
    std::snprintf(buf, sizeof buf, "polynomial(total_degree=%zu, ridge=%g)", degree, ridge);
  }
  return buf;
}

double shifted_mean(std::span<const double> v) {
  const double v0 = v[0];
  double acc = 0.0;
  for (double e : v) acc += e - v0;
  return v0 + acc / static_cast<double>(v.size());
}

namespace {

// Exponent vectors of all monomials with 1 <= total degree <= max_degree.
std::vector<std::vector<std::size_t>> monomials(std::size_t dim, std::size_t max_degree) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> e(dim, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t d, std::size_t left) {
    if (d == dim) {
      std::size_t total = 0;
      for (std::size_t v : e) total += v;
      if (total > 0) out.push_back(e);
      return;
    }
    for (std::size_t p = 0; p <= left; ++p) {
      e[d] = p;
      rec(d + 1, left - p);
    }
    e[d] = 0;
  };
  rec(0, max_degree);
  return out;
}

}  // namespace

StepRegression::StepRegression(const double* features, std::size_t n_paths, std::size_t dim,
                               const PolynomialBasis& basis, std::size_t step)
    : n_paths_(n_paths), step_(step), basis_(basis) {
  if (n_paths == 0) throw RankDeficientError("regression at step " + std::to_string(step) +
                                             ": no samples");
  if (basis.cells_per_dim <= 1) {
    cells_.emplace_back();
    build_cell(cells_.back(), features, dim, basis.degree, true);
    return;
  }

  // Equal-count quantile cuts per dimension; ties stay in one cell.
  const std::size_t m = basis.cells_per_dim;
  std::vector<std::size_t> cell_of(n_paths, 0);
  std::vector<double> col(n_paths);
  std::size_t stride = 1;
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < n_paths; ++i) col[i] = features[i * dim + d];
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts;
    for (std::size_t c = 1; c < m; ++c) cuts.push_back(sorted[c * n_paths / m]);
    for (std::size_t i = 0; i < n_paths; ++i) {
      const auto at = std::upper_bound(cuts.begin(), cuts.end(), col[i]) - cuts.begin();
      cell_of[i] += static_cast<std::size_t>(at) * stride;
    }
    stride *= m;
  }
  std::vector<std::vector<std::size_t>> members(stride);
  for (std::size_t i = 0; i < n_paths; ++i) members[cell_of[i]].push_back(i);
  std::vector<double> local;
  for (auto& mem : members) {
    if (mem.empty()) continue;
    cells_.emplace_back();
    Cell& cell = cells_.back();
    cell.members = std::move(mem);
    local.resize(cell.members.size() * dim);
    for (std::size_t j = 0; j < cell.members.size(); ++j) {
      for (std::size_t d = 0; d < dim; ++d) local[j * dim + d] = features[cell.members[j] * dim + d];
    }
    build_cell(cell, local.data(), dim, basis.degree, false);
  }
}

std::size_t StepRegression::n_columns() const {
  std::size_t n = 0;
  for (const auto& c : cells_) n = std::max(n, c.n_cols + 1);
  return n;
}

void StepRegression::build_cell(Cell& cell, const double* features, std::size_t dim,
                                std::size_t degree, bool strict) {
  const std::size_t count = cell.members.empty() ? n_paths_ : cell.members.size();
  // Standardize, dropping dimensions without spread.
  std::vector<std::vector<double>> z;
  std::vector<double> col(count);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < count; ++i) col[i] = features[i * dim + d];
    const double mean = shifted_mean(col);
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 1e-12 * std::max(1.0, std::fabs(mean)))) continue;
    for (double& v : col) v = (v - mean) / sd;
    z.push_back(col);
  }
  if (z.empty() || degree == 0) return;

  auto exps = monomials(z.size(), degree);
  if (!strict) {
    // Local cells lower the degree until the fit is overdetermined.
    while (degree > 0 && exps.size() + 1 >= count / 2) exps = monomials(z.size(), --degree);
    if (degree == 0) return;
  }
  const std::size_t n_cols = exps.size();
  if (n_cols + 1 >= count) {
    throw RankDeficientError("regression at step " + std::to_string(step_) + ": " +
                             std::to_string(n_cols + 1) + " basis functions for " +
                             std::to_string(count) + " paths");
  }
  cell.columns.assign(n_cols * count, 0.0);
  for (std::size_t c = 0; c < n_cols; ++c) {
    double* out = cell.columns.data() + c * count;
    for (std::size_t i = 0; i < count; ++i) {
      double v = 1.0;
      for (std::size_t d = 0; d < z.size(); ++d) {
        for (std::size_t p = 0; p < exps[c][d]; ++p) v *= z[d][i];
      }
      out[i] = v;
    }
    const double mean = shifted_mean(std::span<const double>(out, count));
    for (std::size_t i = 0; i < count; ++i) out[i] -= mean;
  }

  const auto& kern = kernels::active();
  const double inv_p = 1.0 / static_cast<double>(count);
  Eigen::MatrixXd g(n_cols, n_cols);
  for (std::size_t a = 0; a < n_cols; ++a) {
    for (std::size_t b = a; b < n_cols; ++b) {
      const double v = kern.dot(cell.columns.data() + a * count, cell.columns.data() + b * count,
                                count) * inv_p;
      g(a, b) = v;
      g(b, a) = v;
    }
    g(a, a) += basis_.ridge;
  }
  cell.gram.compute(g);
  if (cell.gram.info() != Eigen::Success || !(cell.gram.vectorD().minCoeff() > 0.0)) {
    if (!strict) {
      cell.columns.clear();
      return;
    }
    throw RankDeficientError("regression at step " + std::to_string(step_) +
                             ": singular normal equations");
  }
  cell.n_cols = n_cols;
}

void StepRegression::fit(std::span<const double> target, std::span<double> fitted) const {
  if (cells_.size() == 1 && cells_[0].members.empty()) {
    fit_cell(cells_[0], target, fitted);
    return;
  }
  std::vector<double> t, f;
  for (const auto& cell : cells_) {
    const std::size_t count = cell.members.size();
    t.resize(count);
    f.resize(count);
    for (std::size_t j = 0; j < count; ++j) t[j] = target[cell.members[j]];
    fit_cell(cell, t, f);
    for (std::size_t j = 0; j < count; ++j) fitted[cell.members[j]] = f[j];
  }
}

void StepRegression::fit_cell(const Cell& cell, std::span<const double> target,
                              std::span<double> fitted) const {
  const std::size_t count = target.size();
  const double mean = shifted_mean(target);
  for (std::size_t i = 0; i < count; ++i) fitted[i] = mean;
  if (cell.n_cols == 0) return;
  bool constant = true;
  for (std::size_t i = 1; i < count && constant; ++i) constant = target[i] == target[0];
  if (constant) return;
  const auto& kern = kernels::active();
  const double inv_p = 1.0 / static_cast<double>(count);
  Eigen::VectorXd rhs(cell.n_cols);
  // Columns are centred, so the target mean drops out of the cross products.
  for (std::size_t c = 0; c < cell.n_cols; ++c) {
    rhs(c) = kern.dot(cell.columns.data() + c * count, target.data(), count) * inv_p;
  }
  const Eigen::VectorXd beta = cell.gram.solve(rhs);
  if (!beta.allFinite()) {
    throw RankDeficientError("regression at step " + std::to_string(step_) +
                             ": non-finite coefficients");
  }
  for (std::size_t c = 0; c < cell.n_cols; ++c) {
    kern.axpy(beta(c), cell.columns.data() + c * count, fitted.data(), count);
  }
}

}  // namespace rsc
