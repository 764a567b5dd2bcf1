#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"

// Dense linear programming over inequality form:
//
//   minimize / maximize  c . x   subject to  A x <= b,  x free.
//
// solve() returns the optimal point together with the dual multipliers
// lambda >= 0 of the constraint rows, which downstream code reads as the
// sensitivities of the optimal value to the right-hand side b.
//
// The engine underneath, detail::TableauLp, is a two-phase primal simplex on
// a dense tableau over nonnegative variables. It is built for the access
// pattern of the relaxation code: one constraint system per input box that
// only ever grows (a block of rows and variables per network layer), with
// many consecutive objectives solved against it. Appending rows keeps the
// current basis and repairs feasibility with phase-1 artificials on the
// violated rows only; swapping the objective re-prices and continues from
// the previous optimal basis, which typically takes a handful of pivots
// instead of a cold solve. Pricing is Dantzig with a permanent switch to
// Bland's rule after a long degenerate streak, which keeps the method
// finite.
//
// solve() checks its own answer (feasibility, stationarity, complementary
// slackness, strong duality) before returning and throws SolverStalled if
// the certificate does not hold — never a silently wrong answer.

namespace relucert {

enum class LpSense { Minimize, Maximize };
enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LinearProgram {
  Vector objective;         // c, one entry per column of the constraint matrix
  LpSense sense = LpSense::Minimize;
  Matrix constraints;       // A, m x d
  Vector rhs;               // b, one entry per row

  void validate() const {
    if (constraints.rows() == 0 || constraints.cols() == 0)
      throw InvalidInput("linear program needs at least one row and one column");
    if (objective.size() != constraints.cols())
      throw InvalidInput("objective length must match the constraint columns");
    if (rhs.size() != constraints.rows())
      throw InvalidInput("rhs length must match the constraint rows");
    if (!all_finite(objective) || !all_finite(constraints) || !all_finite(rhs))
      throw InvalidInput("linear program has non-finite entries");
  }
};

struct LpSolution {
  LpStatus status = LpStatus::Optimal;
  double objective_value = 0.0;  // +/-inf when unbounded, NaN when infeasible
  Vector primal;                 // empty unless Optimal
  Vector dual;                   // empty unless Optimal; one entry per row, >= 0
};

struct SimplexOptions {
  double feasibility_tol = 1e-9;   // phase-1 residual accepted as feasible
  double reduced_cost_tol = 1e-9;  // pricing threshold
  double pivot_tol = 1e-9;         // smallest acceptable pivot element
  double certificate_tol = 1e-7;   // relative tolerance of the final self-check
  long max_iterations = 0;         // per optimize() call; 0 = derived from size
  bool verify_certificates = true;
};

namespace detail {

// Growing dense simplex tableau over nonnegative variables x >= 0 with rows
// a . x <= b. Structural variables and rows may be appended at any time;
// columns are identified by kind so callers only ever see structural
// ordinals (0, 1, ... in order of creation).
class TableauLp {
 public:
  explicit TableauLp(const SimplexOptions& opt) : opt_(opt) {}

  Index rows() const { return n_rows_; }
  Index structurals() const { return static_cast<Index>(struct_cols_.size()); }
  long pivots() const { return pivots_; }

  // New nonnegative structural variables, zero coefficient in every existing
  // row; returns the ordinal of the first one.
  Index add_variables(Index count) {
    const Index first = structurals();
    for (Index k = 0; k < count; ++k) {
      const Index col = new_column(ColKind::Structural, structurals());
      struct_cols_.push_back(col);
    }
    return first;
  }

  // Append rows  coeffs . x <= rhs, coefficients indexed by structural
  // ordinal (columns beyond coeffs.cols() get zero). The current basis is
  // kept; feasibility is restored by a phase 1 over artificials on the
  // violated rows only. Returns false when that phase 1 proves the extended
  // system infeasible.
  bool append_rows(const Matrix& coeffs, const Vector& rhs) {
    if (coeffs.rows() != rhs.size() || coeffs.cols() > structurals())
      throw InvalidInput("append_rows shape mismatch");
    const Index first_row = n_rows_;
    for (Index r = 0; r < coeffs.rows(); ++r) {
      const Index slack = new_column(ColKind::Slack, n_rows_);
      const Index row = n_rows_++;
      reserve_rows(n_rows_);
      slack_col_.push_back(slack);
      auto full_row = tableau_.row(row).head(n_cols_);
      full_row.setZero();
      for (Index o = 0; o < coeffs.cols(); ++o)
        full_row(struct_cols_[static_cast<std::size_t>(o)]) = coeffs(r, o);
      full_row(slack) = 1.0;
      rhs_(row) = rhs(r);
      // Reduce against the current basis so basic columns stay unit.
      for (Index i = 0; i < row; ++i) {
        const double f = full_row(basis_[static_cast<std::size_t>(i)]);
        if (f != 0.0) {
          full_row -= f * tableau_.row(i).head(n_cols_);
          rhs_(row) -= f * rhs_(i);
        }
      }
      basis_.push_back(slack);
    }
    // Violated rows get sign-flipped and covered by a basic artificial each.
    std::vector<Index> violated;
    for (Index row = first_row; row < n_rows_; ++row) {
      if (rhs_(row) >= 0.0) continue;
      tableau_.row(row).head(n_cols_) = -tableau_.row(row).head(n_cols_);
      rhs_(row) = -rhs_(row);
      violated.push_back(row);
    }
    if (violated.empty()) return true;
    for (Index row : violated) {
      const Index art = new_column(ColKind::Artificial, -1);
      tableau_(row, art) = 1.0;
      basis_[static_cast<std::size_t>(row)] = art;
    }
    return restore_feasibility();
  }

  // Minimize cost . x (indexed by structural ordinal) from the current
  // basis. Returns Optimal or Unbounded.
  LpStatus optimize(const Vector& cost) {
    if (cost.size() != structurals()) throw InvalidInput("objective length mismatch");
    Vector full_cost = Vector::Zero(n_cols_);
    for (Index o = 0; o < cost.size(); ++o)
      full_cost(struct_cols_[static_cast<std::size_t>(o)]) = cost(o);
    price(full_cost);
    if (!pivot_loop()) return LpStatus::Unbounded;
    value_ = objective_;
    return LpStatus::Optimal;
  }

  double value() const { return value_; }

  Vector primal() const {
    Vector x = Vector::Zero(structurals());
    for (Index i = 0; i < n_rows_; ++i) {
      const Index col = basis_[static_cast<std::size_t>(i)];
      if (kind_[static_cast<std::size_t>(col)] == ColKind::Structural)
        x(ordinal_[static_cast<std::size_t>(col)]) = rhs_(i);
    }
    return x;
  }

  // Dual multiplier of row i with respect to its original right-hand side:
  // the reduced cost of the row's slack column, which is insensitive to
  // whether the stored row was sign-flipped. Nonnegative at an optimum up to
  // roundoff, which is clamped away.
  Vector row_duals() const {
    Vector lambda(n_rows_);
    for (Index i = 0; i < n_rows_; ++i)
      lambda(i) = std::max(0.0, reduced_cost_(slack_col_[static_cast<std::size_t>(i)]));
    return lambda;
  }

  // Reduced costs of the structural variables at the optimum: the dual
  // multipliers of the intrinsic x >= 0 bounds.
  Vector bound_duals() const {
    Vector r(structurals());
    for (Index o = 0; o < r.size(); ++o)
      r(o) = std::max(0.0, reduced_cost_(struct_cols_[static_cast<std::size_t>(o)]));
    return r;
  }

 private:
  enum class ColKind : char { Structural, Slack, Artificial };

  Index new_column(ColKind kind, Index ordinal) {
    const Index col = n_cols_++;
    reserve_cols(n_cols_);
    tableau_.col(col).head(n_rows_).setZero();
    kind_.push_back(kind);
    ordinal_.push_back(ordinal);
    return col;
  }

  void reserve_rows(Index rows) {
    if (rows > tableau_.rows()) {
      const Index grown = std::max(rows, tableau_.rows() + tableau_.rows() / 2 + 16);
      RowMajorMatrix bigger = RowMajorMatrix::Zero(grown, tableau_.cols());
      bigger.topRows(tableau_.rows()) = tableau_;
      tableau_.swap(bigger);
    }
    if (rows > rhs_.size()) rhs_.conservativeResize(tableau_.rows());
  }

  void reserve_cols(Index cols) {
    if (cols > tableau_.cols()) {
      const Index grown = std::max(cols, tableau_.cols() + tableau_.cols() / 2 + 32);
      RowMajorMatrix bigger = RowMajorMatrix::Zero(tableau_.rows(), grown);
      bigger.leftCols(tableau_.cols()) = tableau_;
      tableau_.swap(bigger);
    }
    if (cols > reduced_cost_.size()) reduced_cost_.conservativeResize(tableau_.cols());
  }

  void price(const Vector& full_cost) {
    reduced_cost_.head(n_cols_) = full_cost;
    objective_ = 0.0;
    for (Index i = 0; i < n_rows_; ++i) {
      const double cb = full_cost(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) {
        reduced_cost_.head(n_cols_) -= cb * tableau_.row(i).head(n_cols_).transpose();
        objective_ += cb * rhs_(i);
      }
    }
  }

  bool enterable(Index col) const {
    return kind_[static_cast<std::size_t>(col)] != ColKind::Artificial;
  }

  // Primal simplex iterations until optimality (true) or an unbounded
  // direction (false). Throws SolverStalled at the iteration cap.
  bool pivot_loop() {
    const long cap = opt_.max_iterations > 0
                         ? opt_.max_iterations
                         : 2000 + 200 * static_cast<long>(n_rows_ + structurals());
    const long bland_after = 3 * static_cast<long>(n_rows_ + structurals());
    long iterations = 0;
    long degenerate_streak = 0;
    bool bland = false;
    for (;;) {
      if (++iterations > cap)
        throw SolverStalled("simplex exceeded " + std::to_string(cap) + " pivots");

      Index entering = -1;
      if (!bland) {
        double best = -opt_.reduced_cost_tol;
        for (Index j = 0; j < n_cols_; ++j)
          if (reduced_cost_(j) < best && enterable(j)) {
            best = reduced_cost_(j);
            entering = j;
          }
      } else {
        for (Index j = 0; j < n_cols_; ++j)
          if (reduced_cost_(j) < -opt_.reduced_cost_tol && enterable(j)) {
            entering = j;
            break;
          }
      }
      if (entering < 0) return true;

      // Ratio test; ties go to the smallest basis index, which together with
      // Bland pricing rules out cycling.
      Index leaving = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n_rows_; ++i) {
        const double a = tableau_(i, entering);
        if (a <= opt_.pivot_tol) continue;
        const double ratio = rhs_(i) / a;
        if (ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          leaving = i;
        } else if (ratio <= best_ratio + 1e-12 &&
                   (leaving < 0 || basis_[static_cast<std::size_t>(i)] <
                                       basis_[static_cast<std::size_t>(leaving)])) {
          if (ratio < best_ratio) best_ratio = ratio;
          leaving = i;
        }
      }
      if (leaving < 0) return false;

      if (best_ratio <= 1e-12) {
        if (++degenerate_streak > bland_after) bland = true;
      } else {
        degenerate_streak = 0;
      }
      pivot(leaving, entering);
    }
  }

  void pivot(Index row, Index col) {
    const double p = tableau_(row, col);
    tableau_.row(row).head(n_cols_) /= p;
    rhs_(row) /= p;
    tableau_(row, col) = 1.0;
    for (Index i = 0; i < n_rows_; ++i) {
      if (i == row) continue;
      const double f = tableau_(i, col);
      if (f != 0.0) {
        tableau_.row(i).head(n_cols_) -= f * tableau_.row(row).head(n_cols_);
        rhs_(i) -= f * rhs_(row);
        tableau_(i, col) = 0.0;
      }
    }
    const double fc = reduced_cost_(col);
    if (fc != 0.0) {
      reduced_cost_.head(n_cols_) -= fc * tableau_.row(row).head(n_cols_).transpose();
      reduced_cost_(col) = 0.0;
      objective_ += fc * rhs_(row);
    }
    basis_[static_cast<std::size_t>(row)] = col;
    ++pivots_;
  }

  // Phase 1 over the artificials; afterwards swap any artificial still in
  // the basis for an enterable column on its row. A row where none remains
  // is redundant and keeps its zero-valued artificial, which never
  // re-enters.
  bool restore_feasibility() {
    Vector phase1_cost = Vector::Zero(n_cols_);
    for (Index j = 0; j < n_cols_; ++j)
      if (kind_[static_cast<std::size_t>(j)] == ColKind::Artificial) phase1_cost(j) = 1.0;
    price(phase1_cost);
    if (!pivot_loop()) throw InternalError("phase-1 simplex claims an unbounded direction");
    const double scale = 1.0 + rhs_.head(n_rows_).cwiseAbs().maxCoeff();
    if (objective_ > opt_.feasibility_tol * scale) return false;
    for (Index i = 0; i < n_rows_; ++i) {
      if (enterable(basis_[static_cast<std::size_t>(i)])) continue;
      // Pivot on the largest enterable coefficient: the artificial's value is
      // at most the feasibility tolerance, and dividing it by a tiny pivot
      // would blow that residue up into a real violation.
      Index best = -1;
      double magnitude = opt_.pivot_tol;
      for (Index j = 0; j < n_cols_; ++j) {
        if (!enterable(j)) continue;
        const double a = std::abs(tableau_(i, j));
        if (a > magnitude) {
          magnitude = a;
          best = j;
        }
      }
      if (best >= 0) pivot(i, best);
    }
    return true;
  }

  SimplexOptions opt_;
  Index n_rows_ = 0, n_cols_ = 0;
  RowMajorMatrix tableau_;          // coefficient columns; rhs kept separately
  Vector rhs_;                      // basic values per row, kept >= 0
  Vector reduced_cost_;
  std::vector<Index> basis_;        // basic column per row
  std::vector<Index> slack_col_;    // slack column per row
  std::vector<Index> struct_cols_;  // column of each structural ordinal
  std::vector<ColKind> kind_;       // per column
  std::vector<Index> ordinal_;      // per column: structural ordinal or row
  double objective_ = 0.0, value_ = 0.0;
  long pivots_ = 0;
};

// Certificate self-check on the minimize form. Throws on failure.
inline void verify_certificate(const Matrix& A, const Vector& b, const Vector& c, const Vector& x,
                               const Vector& lambda, double tol) {
  const double scale =
      1.0 + std::max({b.cwiseAbs().maxCoeff(), c.cwiseAbs().maxCoeff(), std::abs(c.dot(x))});
  const Vector residual = A * x - b;
  if (residual.maxCoeff() > tol * scale)
    throw SolverStalled("certificate check failed: primal infeasible by " +
                        std::to_string(residual.maxCoeff()));
  if (lambda.minCoeff() < -tol * scale)
    throw SolverStalled("certificate check failed: negative dual multiplier");
  const double stationarity = (A.transpose() * lambda + c).cwiseAbs().maxCoeff();
  if (stationarity > tol * scale)
    throw SolverStalled("certificate check failed: stationarity residual " +
                        std::to_string(stationarity));
  const double slackness = (lambda.array() * residual.array()).abs().maxCoeff();
  if (slackness > tol * scale)
    throw SolverStalled("certificate check failed: complementary slackness residual " +
                        std::to_string(slackness));
  const double duality_gap = std::abs(c.dot(x) + b.dot(lambda));
  if (duality_gap > tol * scale)
    throw SolverStalled("certificate check failed: duality gap " + std::to_string(duality_gap));
}

}  // namespace detail

inline LpSolution solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  lp.validate();
  const bool maximize = lp.sense == LpSense::Maximize;
  const Vector c = maximize ? Vector(-lp.objective) : lp.objective;
  const Index d = lp.constraints.cols();

  // Free variables become differences of nonnegatives: x = x+ - x-. The
  // split pair is dual-clean: the two reduced costs are exact negations, so
  // at an optimum neither bound carries multiplier mass and the row duals
  // coincide with the duals of the free-variable program.
  detail::TableauLp tableau(opt);
  tableau.add_variables(2 * d);
  Matrix split(lp.constraints.rows(), 2 * d);
  split.leftCols(d) = lp.constraints;
  split.rightCols(d) = -lp.constraints;

  LpSolution solution;
  if (!tableau.append_rows(split, lp.rhs)) {
    solution.status = LpStatus::Infeasible;
    solution.objective_value = std::numeric_limits<double>::quiet_NaN();
    return solution;
  }
  Vector split_cost(2 * d);
  split_cost.head(d) = c;
  split_cost.tail(d) = -c;
  solution.status = tableau.optimize(split_cost);
  if (solution.status == LpStatus::Unbounded) {
    solution.objective_value = maximize ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity();
    return solution;
  }

  const Vector split_x = tableau.primal();
  solution.primal = split_x.head(d) - split_x.tail(d);
  solution.dual = tableau.row_duals();
  if (opt.verify_certificates)
    detail::verify_certificate(lp.constraints, lp.rhs, c, solution.primal, solution.dual,
                               opt.certificate_tol);
  solution.objective_value = lp.objective.dot(solution.primal);
  return solution;
}

}  // namespace relucert
