#pragma once

// Per-time-step least squares on polynomial features of X_k, shared by the
// backward solvers. Features are standardized per dimension; columns are
// centred so the intercept is the sample mean of the target.
//
// With cells_per_dim > 0 the fit is local: each dimension is cut into
// equal-count quantile cells and every cell of the tensor mesh gets its own
// polynomial (degree lowered, down to the cell mean, where a cell is small).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rsc {

struct PolynomialBasis {
  std::size_t degree = 3;  // total degree of the monomials
  double ridge = 1e-8;     // added to the Gram diagonal, not to the intercept
  std::size_t cells_per_dim = 0;  // 0: one global polynomial
  std::string describe() const;
};

class StepRegression {
 public:
  // features: n_paths rows of dim entries (row i at features + i*dim).
  // Dimensions with (numerically) zero spread are dropped. Throws
  // RankDeficientError naming `step` when there are not enough paths.
  StepRegression(const double* features, std::size_t n_paths, std::size_t dim,
                 const PolynomialBasis& basis, std::size_t step);

  // Least-squares fit of target, evaluated at the sample points.
  void fit(std::span<const double> target, std::span<double> fitted) const;

  // Basis functions per cell (the largest cell when local).
  std::size_t n_columns() const;
  std::size_t n_cells() const { return cells_.size(); }
  std::size_t n_paths() const { return n_paths_; }

 private:
  struct Cell {
    std::vector<std::size_t> members;  // empty: every path, in order
    std::size_t n_cols = 0;            // non-constant columns
    std::vector<double> columns;       // column-major over members, centred
    Eigen::LDLT<Eigen::MatrixXd> gram;
  };
  void build_cell(Cell& cell, const double* features, std::size_t dim, std::size_t degree,
                  bool strict);
  void fit_cell(const Cell& cell, std::span<const double> target, std::span<double> fitted) const;

  std::size_t n_paths_ = 0;
  std::size_t step_ = 0;
  PolynomialBasis basis_;
  std::vector<Cell> cells_;
};

// Mean computed relative to the first element, exact for constant data.
double shifted_mean(std::span<const double> v);

}  // namespace rsc
