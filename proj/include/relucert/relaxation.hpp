#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/lp.hpp"
#include "relucert/network.hpp"

// Convex relaxation of a ReLU network over an input box.
//
// Every hidden node z = max{zhat, 0} with pre-activation bounds l <= zhat <= u
// is relaxed to its triangle envelope
//
//   z >= 0,   z >= zhat,   z <= c zhat + d,
//
// with c = u~/(u~-l~), d = -u~ l~/(u~-l~) computed from the clamped bounds
// l~ = min{l,0}, u~ = max{u,0}. Stable nodes collapse to c=1,d=0 (active) or
// c=0,d=0 (inactive), where the envelope is the ReLU itself.
//
// Stacking the envelopes layer by layer yields one polytope per prefix of
// the network, over the concatenated variables [x; z_1; ...; z_depth], with
// the row layout
//
//   box rows [I; -I] <= [upper; -lower],
//   per hidden block:  -z <= 0,  W z_prev - z <= -b,  -DW z_prev + z <= Db+d.
//
// compute_bounds() walks the layers in order, bounding every pre-activation
// with a pair of LPs over the prefix polytope and building the next block
// from the resulting envelopes. The LPs are solved on a reduced system in
// which stable nodes are substituted away (their activation is an affine
// function of earlier variables), which shrinks the solver work without
// changing anything observable: the stored solutions are lifted back to the
// full row/column structure, with the multipliers of eliminated rows
// reconstructed exactly from the stationarity conditions.

namespace relucert {

// Triangle envelope c, d per node, for one weight layer after another.
struct EnvelopeCoefficients {
  std::vector<Vector> slope;      // c
  std::vector<Vector> intercept;  // d
  Index layers() const { return static_cast<Index>(slope.size()); }
};

// Degenerate pre-activation intervals (width below this) are treated as
// stable at the sign of their midpoint: the triangle coefficients would
// otherwise divide by a vanishing width.
inline constexpr double kDegenerateInterval = 1e-9;

// Stability used for building envelopes: like classify_node, except that a
// degenerately thin straddling interval counts as stable at its midpoint.
inline NodeState envelope_state(double lower, double upper) {
  const double clamped_lower = std::min(lower, 0.0);
  const double clamped_upper = std::max(upper, 0.0);
  if (clamped_upper - clamped_lower < kDegenerateInterval)
    return lower + upper >= 0.0 ? NodeState::StableActive : NodeState::StableInactive;
  return classify_node(lower, upper);
}

// Triangle coefficients for one node; handles all three stability cases.
inline std::pair<double, double> envelope_for(double lower, double upper) {
  switch (envelope_state(lower, upper)) {
    case NodeState::StableActive: return {1.0, 0.0};
    case NodeState::StableInactive: return {0.0, 0.0};
    case NodeState::Unstable: break;
  }
  const double l = std::min(lower, 0.0);
  const double u = std::max(upper, 0.0);
  return {u / (u - l), -u * l / (u - l)};
}

// Pre-activation bounds for every hidden node, together with the LP
// solutions that produced them. lower_solution[j][k] / upper_solution[j][k]
// are optimal for the depth-j polytope in its full row/column structure with
// the pure linear objective w_jk . z_j; the bound itself adds the bias:
// lower[j](k) = lower_solution[j][k].objective_value + b_j(k).
struct BoundsTable {
  std::vector<Vector> lower, upper;
  std::vector<std::vector<LpSolution>> lower_solution, upper_solution;

  Index layers() const { return static_cast<Index>(lower.size()); }
  Index nodes(Index j) const { return lower[static_cast<std::size_t>(j)].size(); }
  NodeState state(Index j, Index k) const {
    return classify_node(lower[static_cast<std::size_t>(j)](k),
                         upper[static_cast<std::size_t>(j)](k));
  }
};

inline std::vector<std::vector<NodeState>> node_stability(const BoundsTable& bounds) {
  std::vector<std::vector<NodeState>> states;
  for (Index j = 0; j < bounds.layers(); ++j) {
    std::vector<NodeState> layer;
    for (Index k = 0; k < bounds.nodes(j); ++k) layer.push_back(bounds.state(j, k));
    states.push_back(std::move(layer));
  }
  return states;
}

// The relaxation is exact exactly when no hidden node straddles zero.
inline bool is_exact(const BoundsTable& bounds) {
  for (Index j = 0; j < bounds.layers(); ++j)
    for (Index k = 0; k < bounds.nodes(j); ++k)
      if (bounds.state(j, k) == NodeState::Unstable) return false;
  return true;
}

inline nlohmann::json bounds_to_json(const BoundsTable& bounds) {
  nlohmann::json out = nlohmann::json::array();
  for (Index j = 0; j < bounds.layers(); ++j)
    for (Index k = 0; k < bounds.nodes(j); ++k)
      out.push_back({{"layer", j},
                     {"node", k},
                     {"lower", bounds.lower[static_cast<std::size_t>(j)](k)},
                     {"upper", bounds.upper[static_cast<std::size_t>(j)](k)},
                     {"state", to_string(bounds.state(j, k))}});
  return out;
}

// One prefix polytope in its full structure: variable blocks for the input
// and each included hidden layer, three row groups per hidden block.
struct LayeredPolytope {
  Matrix A;
  Vector b;
  std::vector<Index> block_width;  // [input width, hidden widths ...]
  std::vector<Index> block_col;    // first column of each block
  std::vector<Index> block_row;    // first row of each hidden block (index 0 unused)

  Index blocks() const { return static_cast<Index>(block_width.size()); }
  Index box_rows() const { return 2 * block_width[0]; }
  Index pos_row(Index block, Index node) const {
    return block_row[static_cast<std::size_t>(block)] + node;
  }
  Index mid_row(Index block, Index node) const {
    return block_row[static_cast<std::size_t>(block)] + block_width[static_cast<std::size_t>(block)] + node;
  }
  Index env_row(Index block, Index node) const {
    return block_row[static_cast<std::size_t>(block)] + 2 * block_width[static_cast<std::size_t>(block)] + node;
  }
};

// Assembles the polytope with the given number of variable blocks (>= 1;
// 1 means the input box alone). Needs envelope coefficients for the first
// blocks-1 weight layers.
inline LayeredPolytope build_polytope(const ReluNetwork& net, const InputBox& box,
                                      const EnvelopeCoefficients& coeffs, Index blocks) {
  if (box.size() != net.input_size()) throw InvalidInput("box width must match the network input");
  if (blocks < 1 || blocks > net.layer_count() - 1)
    throw InvalidInput("block count out of range for this network");
  if (coeffs.layers() < blocks - 1)
    throw InvalidInput("not enough envelope layers for the requested block count");

  LayeredPolytope poly;
  const Index n_in = net.input_size();
  Index cols = n_in, rows = 2 * n_in;
  poly.block_width.push_back(n_in);
  poly.block_col.push_back(0);
  poly.block_row.push_back(0);
  for (Index l = 1; l < blocks; ++l) {
    poly.block_width.push_back(net.width(l));
    poly.block_col.push_back(cols);
    poly.block_row.push_back(rows);
    cols += net.width(l);
    rows += 3 * net.width(l);
  }

  poly.A = Matrix::Zero(rows, cols);
  poly.b = Vector::Zero(rows);
  poly.A.block(0, 0, n_in, n_in).setIdentity();
  poly.A.block(n_in, 0, n_in, n_in) = -Matrix::Identity(n_in, n_in);
  poly.b.head(2 * n_in) = box.facet_bias();

  for (Index l = 1; l < blocks; ++l) {
    const Index w = l - 1;  // weight layer feeding this block
    const Matrix& W = net.weight(w);
    const Vector& bias = net.bias(w);
    const Vector& c = coeffs.slope[static_cast<std::size_t>(w)];
    const Vector& d = coeffs.intercept[static_cast<std::size_t>(w)];
    const Index n = net.width(l);
    const Index prev_col = poly.block_col[static_cast<std::size_t>(l) - 1];
    const Index prev_n = poly.block_width[static_cast<std::size_t>(l) - 1];
    const Index col = poly.block_col[static_cast<std::size_t>(l)];
    for (Index t = 0; t < n; ++t) {
      poly.A(poly.pos_row(l, t), col + t) = -1.0;
      poly.A.row(poly.mid_row(l, t)).segment(prev_col, prev_n) = W.row(t);
      poly.A(poly.mid_row(l, t), col + t) = -1.0;
      poly.b(poly.mid_row(l, t)) = -bias(t);
      poly.A.row(poly.env_row(l, t)).segment(prev_col, prev_n) = -c(t) * W.row(t);
      poly.A(poly.env_row(l, t), col + t) = 1.0;
      poly.b(poly.env_row(l, t)) = c(t) * bias(t) + d(t);
    }
  }
  return poly;
}

// The full-depth polytope together with the affine output map that the last
// weight layer applies on top of it: y = output_weight . z_last + output_bias.
struct OutputPolytope {
  LayeredPolytope polytope;
  Matrix output_weight;
  Vector output_bias;
};

inline OutputPolytope output_polytope(const ReluNetwork& net, const InputBox& box,
                                      const BoundsTable& bounds,
                                      const EnvelopeCoefficients& coeffs) {
  if (bounds.layers() != net.hidden_layer_count() || coeffs.layers() != net.hidden_layer_count())
    throw InvalidInput("output_polytope needs bounds and envelopes for every hidden layer");
  OutputPolytope out;
  out.polytope = build_polytope(net, box, coeffs, net.layer_count() - 1);
  out.output_weight = net.weight(net.weight_layer_count() - 1);
  out.output_bias = net.bias(net.weight_layer_count() - 1);
  return out;
}

struct RelaxationOptions {
  bool reduce_stable = true;  // substitute stable nodes out of the LPs
  SimplexOptions lp;
};

namespace detail {

// The working form of the prefix polytopes for one box: a growing TableauLp
// plus the bookkeeping needed to translate between three coordinate systems:
//
//   engine:  nonnegative tableau variables [x+ (n1), x- (n1), kept z ...]
//   reduced: [x (n1 free), kept z ...] — what A_red/b_red are written over
//   full:    every layer's activations, as in LayeredPolytope
//
// Stable nodes are not kept as variables when reduce_stable is set: their
// activation is an affine function of earlier variables (identity of the
// pre-activation when active, zero when inactive), tracked per layer in
// layer_map/layer_off. Kept nodes contribute one engine variable and two
// rows (mid, env); their z >= 0 row is the engine variable bound itself.
class PolytopeLpModel {
 public:
  PolytopeLpModel(const ReluNetwork& net, const InputBox& box, RelaxationOptions opts)
      : net_(&net), box_(box), opts_(opts), engine_(opts.lp) {
    const Index n = net.input_size();
    if (box.size() != n) throw InvalidInput("box width must match the network input");
    n_reduced_ = n;
    layer_map_.push_back(Matrix::Identity(n, n));
    layer_off_.push_back(Vector::Zero(n));
    a_reduced_ = Matrix::Zero(2 * n, n);
    a_reduced_.topRows(n).setIdentity();
    a_reduced_.bottomRows(n) = -Matrix::Identity(n, n);
    b_reduced_ = box.facet_bias();
    rebuild_engine();
  }

  Index blocks() const { return static_cast<Index>(block_.size()); }
  Index reduced_columns() const { return n_reduced_; }
  const Matrix& reduced_constraints() const { return a_reduced_; }
  const Vector& reduced_rhs() const { return b_reduced_; }

  // Both pre-activation bound LPs for node (j, k); requires blocks() == j.
  struct NodeBounds {
    double lower = 0.0, upper = 0.0;
    LpSolution lower_solution, upper_solution;  // full structure, pure linear value
  };

  NodeBounds bound_node(Index j, Index k) {
    if (blocks() != j) throw InternalError("bound_node called at the wrong depth");
    const Matrix& W = net_->weight(j);
    const double bias = net_->bias(j)(k);
    Vector objective = Vector::Zero(n_reduced_);
    objective.head(layer_map_.back().cols()) =
        layer_map_.back().transpose() * W.row(k).transpose();

    NodeBounds result;
    const Vector block_cost = W.row(k).transpose();
    result.lower_solution = solve_reduced(objective, block_cost, j, k, "lower");
    result.upper_solution = solve_reduced(-objective, -block_cost, j, k, "upper");
    result.upper_solution.objective_value = -result.upper_solution.objective_value;
    result.lower = result.lower_solution.objective_value + bias;
    result.upper = result.upper_solution.objective_value + bias;
    return result;
  }

  // Extends the model by the next hidden layer given its envelope data.
  void add_block(const Vector& slope, const Vector& intercept,
                 const std::vector<NodeState>& states) {
    const Index layer = blocks() + 1;            // hidden layer this block models
    const Index w = layer - 1;                   // weight layer feeding it
    const Index n = net_->width(layer);
    if (slope.size() != n || intercept.size() != n || static_cast<Index>(states.size()) != n)
      throw InvalidInput("add_block envelope data has the wrong width");

    const Matrix& W = net_->weight(w);
    Matrix zhat_map = Matrix::Zero(n, n_reduced_);
    zhat_map.leftCols(layer_map_.back().cols()) = W * layer_map_.back();
    Vector zhat_off = W * layer_off_.back() + net_->bias(w);

    BlockInfo info;
    info.states = states;
    info.slope = slope;
    info.intercept = intercept;
    info.z_column.assign(static_cast<std::size_t>(n), -1);
    info.first_row = a_reduced_.rows();
    for (Index t = 0; t < n; ++t)
      if (!opts_.reduce_stable || states[static_cast<std::size_t>(t)] == NodeState::Unstable)
        info.kept.push_back(t);
    const Index kept = static_cast<Index>(info.kept.size());

    // Extend the reduced system: one column and a (mid, env) row pair per
    // kept node; rows grouped by kind to mirror the full layout.
    Matrix grown_a = Matrix::Zero(a_reduced_.rows() + 2 * kept, n_reduced_ + kept);
    grown_a.topLeftCorner(a_reduced_.rows(), n_reduced_) = a_reduced_;
    Vector grown_b(b_reduced_.size() + 2 * kept);
    grown_b.head(b_reduced_.size()) = b_reduced_;
    Matrix next_map = Matrix::Zero(n, n_reduced_ + kept);
    Vector next_off = Vector::Zero(n);
    for (Index rank = 0; rank < kept; ++rank) {
      const Index t = info.kept[static_cast<std::size_t>(rank)];
      const Index z_col = n_reduced_ + rank;
      info.z_column[static_cast<std::size_t>(t)] = z_col;
      const Index mid = info.first_row + rank;
      const Index env = info.first_row + kept + rank;
      grown_a.row(mid).head(n_reduced_) = zhat_map.row(t);
      grown_a(mid, z_col) = -1.0;
      grown_b(mid) = -zhat_off(t);
      grown_a.row(env).head(n_reduced_) = -slope(t) * zhat_map.row(t);
      grown_a(env, z_col) = 1.0;
      grown_b(env) = slope(t) * zhat_off(t) + intercept(t);
      next_map(t, z_col) = 1.0;
    }
    for (Index t = 0; t < n; ++t) {
      if (info.z_column[static_cast<std::size_t>(t)] >= 0) continue;
      if (effective_active(states[static_cast<std::size_t>(t)])) {
        next_map.row(t).head(n_reduced_) = zhat_map.row(t);
        next_off(t) = zhat_off(t);
      }  // inactive rows stay zero
    }

    a_reduced_ = std::move(grown_a);
    b_reduced_ = std::move(grown_b);
    n_reduced_ += kept;
    layer_map_.push_back(std::move(next_map));
    layer_off_.push_back(std::move(next_off));
    block_.push_back(std::move(info));

    engine_.add_variables(kept);
    if (!engine_.append_rows(to_engine(a_reduced_.bottomRows(2 * kept)),
                             b_reduced_.tail(2 * kept)))
      throw InternalError("prefix polytope reported infeasible while adding block " +
                          std::to_string(layer));
  }

  // Feasible point of the full-depth polytope intersected with rows over the
  // network output, A_out . y <= b_out; std::nullopt when empty. The point
  // comes back in full structure.
  std::optional<Vector> output_section_point(const Matrix& a_out, const Vector& b_out) {
    if (blocks() != net_->hidden_layer_count())
      throw InternalError("output_section_point needs the full-depth model");
    const Matrix& W = net_->weight(net_->weight_layer_count() - 1);
    const Vector& bias = net_->bias(net_->weight_layer_count() - 1);
    Matrix composed = a_out * W;  // over the last activation block
    Matrix rows = Matrix::Zero(a_out.rows(), n_reduced_);
    rows.leftCols(layer_map_.back().cols()) = composed * layer_map_.back();
    Vector rhs = b_out - a_out * bias - composed * layer_off_.back();

    // Probe on a copy so the warm engine state survives for further
    // disjuncts; phase 1 starts from the polytope-feasible basis.
    TableauLp probe = engine_;
    if (!probe.append_rows(to_engine(rows), rhs)) return std::nullopt;
    return lift_point(from_engine(probe.primal()));
  }

  // Full-structure coordinates of a reduced point.
  Vector lift_point(const Vector& reduced) const {
    Index total = 0;
    for (Index l = 0; l <= blocks(); ++l) total += net_->width(l);
    Vector full(total);
    Index at = 0;
    for (Index l = 0; l <= blocks(); ++l) {
      const Matrix& map = layer_map_[static_cast<std::size_t>(l)];
      full.segment(at, net_->width(l)) =
          map * reduced.head(map.cols()) + layer_off_[static_cast<std::size_t>(l)];
      at += net_->width(l);
    }
    return full;
  }

 private:
  struct BlockInfo {
    std::vector<Index> kept;           // node ids with their own variable
    std::vector<Index> z_column;       // reduced column per node, -1 if pinned
    std::vector<NodeState> states;
    Vector slope, intercept;
    Index first_row = 0;               // first reduced row of the block
  };

  static bool effective_active(NodeState s) { return s == NodeState::StableActive; }

  // Reduced row block -> engine coefficients (inputs split into x+ - x-).
  Matrix to_engine(const Matrix& reduced_rows) const {
    const Index n = net_->input_size();
    Matrix rows(reduced_rows.rows(), n_reduced_ + n);
    rows.leftCols(n) = reduced_rows.leftCols(n);
    rows.middleCols(n, n) = -reduced_rows.leftCols(n);
    rows.rightCols(n_reduced_ - n) = reduced_rows.rightCols(n_reduced_ - n);
    return rows;
  }

  Vector to_engine_cost(const Vector& reduced_cost) const {
    const Index n = net_->input_size();
    Vector cost(n_reduced_ + n);
    cost.head(n) = reduced_cost.head(n);
    cost.segment(n, n) = -reduced_cost.head(n);
    cost.tail(n_reduced_ - n) = reduced_cost.tail(n_reduced_ - n);
    return cost;
  }

  Vector from_engine(const Vector& engine_point) const {
    const Index n = net_->input_size();
    Vector reduced(n_reduced_);
    reduced.head(n) = engine_point.head(n) - engine_point.segment(n, n);
    reduced.tail(n_reduced_ - n) = engine_point.tail(n_reduced_ - n);
    return reduced;
  }

  // Multipliers of the intrinsic z >= 0 bounds, re-indexed by reduced
  // column. The split input pair carries no bound multiplier mass at an
  // optimum (the pair's reduced costs cancel), so input entries are zero.
  Vector from_engine_bound_duals(const Vector& engine_duals) const {
    const Index n = net_->input_size();
    Vector reduced = Vector::Zero(n_reduced_);
    reduced.tail(n_reduced_ - n) = engine_duals.tail(n_reduced_ - n);
    return reduced;
  }

  void rebuild_engine() {
    engine_ = TableauLp(opts_.lp);
    engine_.add_variables(2 * net_->input_size() + (n_reduced_ - net_->input_size()));
    if (!engine_.append_rows(to_engine(a_reduced_), b_reduced_))
      throw InternalError("prefix polytope reported infeasible on rebuild");
  }

  // One bound LP with a warm start, self-check, and one cold retry. Returns
  // the full-structure solution for the *minimize* form of `cost`;
  // `block_cost` is the same objective written over the current last block's
  // nodes in full coordinates (the weight row, negated for upper bounds).
  LpSolution solve_reduced(const Vector& cost, const Vector& block_cost, Index j, Index k,
                           const char* which) {
    for (int attempt = 0;; ++attempt) {
      try {
        const LpStatus status = engine_.optimize(to_engine_cost(cost));
        if (status != LpStatus::Optimal)
          throw InternalError("bound LP for node (" + std::to_string(j) + "," +
                              std::to_string(k) + ") " + which + " came back " +
                              to_string(status));
        const Vector reduced_x = from_engine(engine_.primal());
        const Vector row_dual = engine_.row_duals();
        const Vector bound_dual = from_engine_bound_duals(engine_.bound_duals());
        check_reduced_certificate(cost, reduced_x, row_dual, bound_dual);
        return lift_solution(cost, block_cost, reduced_x, row_dual, bound_dual);
      } catch (const SolverStalled&) {
        if (attempt > 0) throw;
        rebuild_engine();  // refactorize and retry once from a cold basis
      }
    }
  }

  // KKT self-check of a reduced solve against the explicit reduced system;
  // cheap insurance against drift in the incrementally updated tableau.
  void check_reduced_certificate(const Vector& cost, const Vector& x, const Vector& row_dual,
                                 const Vector& bound_dual) const {
    const double tol = opts_.lp.certificate_tol;
    const double value = cost.dot(x);
    const double scale = 1.0 + std::max({b_reduced_.cwiseAbs().maxCoeff(),
                                         cost.cwiseAbs().maxCoeff(), std::abs(value)});
    const Vector residual = a_reduced_ * x - b_reduced_;
    if (residual.maxCoeff() > tol * scale)
      throw SolverStalled("reduced bound LP: primal infeasible");
    const Index n = net_->input_size();
    if (n_reduced_ > n && x.tail(n_reduced_ - n).minCoeff() < -tol * scale)
      throw SolverStalled("reduced bound LP: negative activation variable");
    Vector stationarity = cost + a_reduced_.transpose() * row_dual;
    stationarity.tail(n_reduced_ - n) -= bound_dual.tail(n_reduced_ - n);
    if (stationarity.cwiseAbs().maxCoeff() > tol * scale)
      throw SolverStalled("reduced bound LP: stationarity residual");
    if ((row_dual.array() * residual.array()).abs().maxCoeff() > tol * scale)
      throw SolverStalled("reduced bound LP: complementary slackness (rows)");
    if (n_reduced_ > n) {
      const auto z = x.tail(n_reduced_ - n).array();
      const auto r = bound_dual.tail(n_reduced_ - n).array();
      if ((z * r).abs().maxCoeff() > tol * scale)
        throw SolverStalled("reduced bound LP: complementary slackness (bounds)");
    }
    if (std::abs(value + b_reduced_.dot(row_dual)) > tol * scale)
      throw SolverStalled("reduced bound LP: duality gap");
  }

  // Row index helpers for the full structure at the current depth.
  Index full_rows() const {
    Index rows = 2 * net_->input_size();
    for (Index l = 1; l <= blocks(); ++l) rows += 3 * net_->width(l);
    return rows;
  }
  Index full_block_row(Index block) const {
    Index row = 2 * net_->input_size();
    for (Index l = 1; l < block; ++l) row += 3 * net_->width(l);
    return row;
  }

  // Lifts a reduced optimum to the full structure. `cost` is the minimize
  // objective over reduced columns, `block_cost` the same objective over the
  // last block's nodes in full coordinates; the latter enters the
  // stationarity conditions of eliminated last-block columns.
  LpSolution lift_solution(const Vector& cost, const Vector& block_cost, const Vector& x,
                           const Vector& row_dual, const Vector& bound_dual) const {
    const Index j = blocks();
    LpSolution full;
    full.status = LpStatus::Optimal;
    full.primal = lift_point(x);
    // Pure linear value over the last block's activations. Equal to the
    // reduced value cost . x plus whatever the substituted stable nodes
    // contribute through layer_off.
    full.objective_value = block_cost.dot(full.primal.tail(net_->width(j)));

    full.dual = Vector::Zero(full_rows());
    full.dual.head(2 * net_->input_size()) = row_dual.head(2 * net_->input_size());

    // Kept rows and variable bounds copy over; eliminated rows get their
    // multipliers from the stationarity condition of the pinned column:
    // lambda_pos + lambda_mid - lambda_env = g, split by sign according to
    // which rows are tight for the pinned node's state.
    std::vector<Vector> lam_pos(static_cast<std::size_t>(j) + 1),
        lam_mid(static_cast<std::size_t>(j) + 1), lam_env(static_cast<std::size_t>(j) + 1);
    for (Index l = j; l >= 1; --l) {
      const BlockInfo& info = block_[static_cast<std::size_t>(l) - 1];
      const Index n = net_->width(l);
      lam_pos[static_cast<std::size_t>(l)] = Vector::Zero(n);
      lam_mid[static_cast<std::size_t>(l)] = Vector::Zero(n);
      lam_env[static_cast<std::size_t>(l)] = Vector::Zero(n);
      const Index kept = static_cast<Index>(info.kept.size());
      for (Index rank = 0; rank < kept; ++rank) {
        const Index t = info.kept[static_cast<std::size_t>(rank)];
        lam_mid[static_cast<std::size_t>(l)](t) = row_dual(info.first_row + rank);
        lam_env[static_cast<std::size_t>(l)](t) = row_dual(info.first_row + kept + rank);
        lam_pos[static_cast<std::size_t>(l)](t) =
            bound_dual(info.z_column[static_cast<std::size_t>(t)]);
      }
      // g for every node of this block; only pinned entries are used.
      Vector g = Vector::Zero(n);
      if (l == j) g = block_cost;
      if (l < j) {
        const Matrix& W = net_->weight(l);
        const std::size_t next = static_cast<std::size_t>(l) + 1;
        const Vector mix = lam_mid[next] -
                           block_[next - 1].slope.cwiseProduct(lam_env[next]);
        g += W.transpose() * mix;
      }
      for (Index t = 0; t < n; ++t) {
        if (info.z_column[static_cast<std::size_t>(t)] >= 0) continue;
        if (effective_active(info.states[static_cast<std::size_t>(t)])) {
          lam_mid[static_cast<std::size_t>(l)](t) = std::max(g(t), 0.0);
          lam_env[static_cast<std::size_t>(l)](t) = std::max(-g(t), 0.0);
        } else {
          lam_pos[static_cast<std::size_t>(l)](t) = std::max(g(t), 0.0);
          lam_env[static_cast<std::size_t>(l)](t) = std::max(-g(t), 0.0);
        }
      }
      const Index row0 = full_block_row(l);
      full.dual.segment(row0, n) = lam_pos[static_cast<std::size_t>(l)];
      full.dual.segment(row0 + n, n) = lam_mid[static_cast<std::size_t>(l)];
      full.dual.segment(row0 + 2 * n, n) = lam_env[static_cast<std::size_t>(l)];
    }
    return full;
  }

  const ReluNetwork* net_;
  InputBox box_;
  RelaxationOptions opts_;
  TableauLp engine_;
  Matrix a_reduced_;
  Vector b_reduced_;
  Index n_reduced_ = 0;
  std::vector<Matrix> layer_map_;  // activation of layer l over reduced vars
  std::vector<Vector> layer_off_;
  std::vector<BlockInfo> block_;   // hidden blocks, block_[l-1] models layer l
};

}  // namespace detail

// Everything compute_bounds produces for one box: the bounds table, the
// envelopes derived from it, and the working model at full depth, ready for
// output-intersection queries against the same box. The model keeps a
// pointer to the network, which must outlive the result.
struct RelaxationResult {
  BoundsTable bounds;
  EnvelopeCoefficients coeffs;
  detail::PolytopeLpModel model;
};

inline RelaxationResult compute_bounds(const ReluNetwork& net, const InputBox& box,
                                       const RelaxationOptions& opts = {}) {
  detail::PolytopeLpModel model(net, box, opts);
  BoundsTable bounds;
  EnvelopeCoefficients coeffs;
  for (Index j = 0; j + 2 < net.layer_count(); ++j) {
    const Index n = net.width(j + 1);
    Vector lower(n), upper(n), slope(n), intercept(n);
    std::vector<LpSolution> lower_solution(static_cast<std::size_t>(n)),
        upper_solution(static_cast<std::size_t>(n));
    std::vector<NodeState> states(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
      auto node = model.bound_node(j, k);
      lower(k) = node.lower;
      upper(k) = node.upper;
      lower_solution[static_cast<std::size_t>(k)] = std::move(node.lower_solution);
      upper_solution[static_cast<std::size_t>(k)] = std::move(node.upper_solution);
      const auto [c, d] = envelope_for(lower(k), upper(k));
      slope(k) = c;
      intercept(k) = d;
      states[static_cast<std::size_t>(k)] = envelope_state(lower(k), upper(k));
    }
    bounds.lower.push_back(std::move(lower));
    bounds.upper.push_back(std::move(upper));
    bounds.lower_solution.push_back(std::move(lower_solution));
    bounds.upper_solution.push_back(std::move(upper_solution));
    coeffs.slope.push_back(slope);
    coeffs.intercept.push_back(intercept);
    model.add_block(slope, intercept, states);
  }
  return RelaxationResult{std::move(bounds), std::move(coeffs), std::move(model)};
}

}  // namespace relucert
