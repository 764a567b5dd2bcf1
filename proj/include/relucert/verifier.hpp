#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relucert/bound_rates.hpp"
#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/lp.hpp"
#include "relucert/network.hpp"
#include "relucert/relaxation.hpp"
#include "relucert/splitting.hpp"

// The verification driver. Given a network, an input box B and a forbidden
// output set S (a union of polyhedra), decide whether f(B) intersects S.
//
// Each box is relaxed with compute_bounds and its relaxed output set is
// intersected with every disjunct of S:
//
//   - no disjunct feasible: the true image avoids S over this box (the
//     relaxation contains the image), so the box is discharged;
//   - a disjunct is feasible and the relaxation is exact (every hidden node
//     stable): the LP point *is* a network input-output pair, so its input
//     block is a counterexample, double-checked against a forward pass;
//   - otherwise the box is bisected and both halves are pushed, low half on
//     top so it is explored first.
//
// Boxes whose axes are all at the width floor are closed as inconclusive;
// if any such leaf remains and no counterexample was found the verdict is
// Inconclusive, as it is on timeout or node budget exhaustion.

namespace relucert {

// One polyhedral piece of the forbidden set: { y : a y <= b }.
struct OutputDisjunct {
  Matrix a;
  Vector b;
};

// Forbidden set S = union of disjuncts over the network output space.
struct OutputSpec {
  std::vector<OutputDisjunct> disjuncts;
  Index output_size = 0;

  void validate() const {
    if (output_size <= 0) throw InvalidInput("output spec needs a positive output size");
    for (const auto& d : disjuncts) {
      if (d.a.cols() != output_size) throw InvalidInput("disjunct row width must match outputs");
      if (d.b.size() != d.a.rows()) throw InvalidInput("disjunct rhs length must match its rows");
      if (!all_finite(d.a) || !all_finite(d.b)) throw InvalidInput("disjunct must be finite");
    }
  }
};

// Whether an output point lies in the forbidden set, within tolerance.
inline bool spec_contains(const OutputSpec& spec, const Vector& y, double tol = 1e-6) {
  for (const auto& d : spec.disjuncts) {
    const double scale = 1.0 + (d.b.size() > 0 ? d.b.cwiseAbs().maxCoeff() : 0.0);
    if (((d.a * y - d.b).array() <= tol * scale).all()) return true;
  }
  return false;
}

// Confirms a candidate counterexample by an ordinary forward pass.
inline bool check_witness(const ReluNetwork& net, const InputBox& box, const OutputSpec& spec,
                          const Vector& x, double tol = 1e-6) {
  return box.contains(x, tol) && spec_contains(spec, forward(net, x), tol);
}

// Feasibility of the full-structure relaxed output set against one
// disjunct, via a standalone LP over [x; z_1; ...]. Returns a feasible
// point in full structure, or nullopt. This is the reference path; the
// verifier itself reuses the per-box reduced model instead.
inline std::optional<Vector> intersect_full(const OutputPolytope& out, const OutputDisjunct& d,
                                            const SimplexOptions& options = {}) {
  const Index cols = out.polytope.A.cols();
  const Index last_col = out.polytope.block_col.back();
  const Index last_n = out.polytope.block_width.back();
  LinearProgram lp;
  lp.objective = Vector::Zero(cols);
  lp.sense = LpSense::Minimize;
  lp.constraints = Matrix::Zero(out.polytope.A.rows() + d.a.rows(), cols);
  lp.constraints.topRows(out.polytope.A.rows()) = out.polytope.A;
  lp.constraints.bottomRows(d.a.rows()).middleCols(last_col, last_n) = d.a * out.output_weight;
  lp.rhs.resize(out.polytope.b.size() + d.b.size());
  lp.rhs.head(out.polytope.b.size()) = out.polytope.b;
  lp.rhs.tail(d.b.size()) = d.b - d.a * out.output_bias;
  const LpSolution sol = solve(lp, options);
  if (sol.status == LpStatus::Infeasible) return std::nullopt;
  return sol.primal;
}

enum class Verdict { DoesNotIntersect, Intersects, Inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::DoesNotIntersect: return "does-not-intersect";
    case Verdict::Intersects: return "intersects";
    case Verdict::Inconclusive: return "inconclusive";
  }
  throw InternalError("unhandled verdict");
}

struct VerifierOptions {
  SplitterKind splitter = SplitterKind::BoundEstimate;
  double timeout_seconds = 0.0;    // 0 = no limit; checked between boxes
  std::uint64_t max_nodes = 0;     // 0 = no limit on processed boxes
  double width_floor = 0.0;        // boxes with every axis at/below close as inconclusive
  bool early_counterexample = false;  // also test the box center against S
  bool use_reduction = true;          // solve bound LPs on the reduced system
  SimplexOptions lp;
};

struct RunStats {
  Verdict verdict = Verdict::Inconclusive;
  std::uint64_t nodes = 0;               // boxes whose bounds were computed
  std::uint64_t safe_leaves = 0;         // boxes discharged by empty intersection
  std::uint64_t inconclusive_leaves = 0; // boxes closed at the width floor
  std::uint64_t witness_rejections = 0;  // LP witnesses the forward pass refuted
  bool timed_out = false;
  bool node_limit_hit = false;
  double wall_seconds = 0.0;
  std::vector<std::uint64_t> depth_histogram;  // closed-leaf count per depth
  std::optional<Vector> witness;               // counterexample input, if Intersects
  std::optional<Vector> witness_output;

  double depth_mean() const {
    std::uint64_t leaves = 0, total = 0;
    for (std::size_t d = 0; d < depth_histogram.size(); ++d) {
      leaves += depth_histogram[d];
      total += depth_histogram[d] * d;
    }
    return leaves == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(leaves);
  }
  double depth_std() const {
    const double mean = depth_mean();
    std::uint64_t leaves = 0;
    double sq = 0.0;
    for (std::size_t d = 0; d < depth_histogram.size(); ++d) {
      leaves += depth_histogram[d];
      const double delta = static_cast<double>(d) - mean;
      sq += static_cast<double>(depth_histogram[d]) * delta * delta;
    }
    return leaves == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(leaves));
  }
};

inline nlohmann::json stats_to_json(const RunStats& stats) {
  nlohmann::json hist = nlohmann::json::array();
  for (std::size_t d = 0; d < stats.depth_histogram.size(); ++d)
    if (stats.depth_histogram[d] > 0) hist.push_back({d, stats.depth_histogram[d]});
  nlohmann::json out{{"verdict", to_string(stats.verdict)},
                     {"nodes", stats.nodes},
                     {"safe_leaves", stats.safe_leaves},
                     {"inconclusive_leaves", stats.inconclusive_leaves},
                     {"witness_rejections", stats.witness_rejections},
                     {"timed_out", stats.timed_out},
                     {"node_limit_hit", stats.node_limit_hit},
                     {"wall_ms", stats.wall_seconds * 1000.0},
                     {"depth_mean", stats.depth_mean()},
                     {"depth_std", stats.depth_std()},
                     {"depth_histogram", std::move(hist)}};
  if (stats.witness) {
    out["witness"] = std::vector<double>(stats.witness->begin(), stats.witness->end());
    out["witness_output"] =
        std::vector<double>(stats.witness_output->begin(), stats.witness_output->end());
  }
  return out;
}

inline RunStats verify(const ReluNetwork& net, const InputBox& box, const OutputSpec& spec,
                       const VerifierOptions& options = {}) {
  spec.validate();
  if (spec.output_size != net.output_size())
    throw InvalidInput("output spec width must match the network output");
  if (box.size() != net.input_size())
    throw InvalidInput("box width must match the network input");

  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  RelaxationOptions relax;
  relax.reduce_stable = options.use_reduction;
  relax.lp = options.lp;

  RunStats stats;
  const auto close_leaf = [&stats](Index depth) {
    if (stats.depth_histogram.size() <= static_cast<std::size_t>(depth))
      stats.depth_histogram.resize(static_cast<std::size_t>(depth) + 1, 0);
    ++stats.depth_histogram[static_cast<std::size_t>(depth)];
  };

  std::vector<std::pair<InputBox, Index>> pending;
  pending.emplace_back(box, 0);
  while (!pending.empty()) {
    if (options.timeout_seconds > 0.0 && elapsed() > options.timeout_seconds) {
      stats.timed_out = true;
      break;
    }
    if (options.max_nodes > 0 && stats.nodes >= options.max_nodes) {
      stats.node_limit_hit = true;
      break;
    }
    auto [current, depth] = std::move(pending.back());
    pending.pop_back();
    ++stats.nodes;

    RelaxationResult relaxed = compute_bounds(net, current, relax);
    std::optional<Vector> section;
    for (const auto& d : spec.disjuncts)
      if ((section = relaxed.model.output_section_point(d.a, d.b))) break;

    if (!section) {
      ++stats.safe_leaves;
      close_leaf(depth);
      continue;
    }

    if (is_exact(relaxed.bounds)) {
      Vector candidate = section->head(net.input_size());
      // Clamp LP-tolerance violations back into the box before re-checking.
      candidate = candidate.cwiseMax(current.lower).cwiseMin(current.upper);
      if (check_witness(net, box, spec, candidate)) {
        stats.verdict = Verdict::Intersects;
        stats.witness = candidate;
        stats.witness_output = forward(net, candidate);
        stats.wall_seconds = elapsed();
        return stats;
      }
      ++stats.witness_rejections;  // numerically marginal; close honestly
      ++stats.inconclusive_leaves;
      close_leaf(depth);
      continue;
    }

    if (options.early_counterexample) {
      const Vector center = (current.lower + current.upper) / 2.0;
      if (spec_contains(spec, forward(net, center))) {
        stats.verdict = Verdict::Intersects;
        stats.witness = center;
        stats.witness_output = forward(net, center);
        stats.wall_seconds = elapsed();
        return stats;
      }
    }

    Index axis;
    try {
      if (options.splitter == SplitterKind::BoundEstimate) {
        const BoundRates rates = bound_rates(net, relaxed.bounds);
        axis = be_split_axis(current, relaxed.bounds, rates, options.width_floor);
      } else {
        axis = iog_split_axis(net, current, relaxed.bounds, options.width_floor);
      }
    } catch (const DegenerateBox&) {
      ++stats.inconclusive_leaves;  // every axis at the width floor
      close_leaf(depth);
      continue;
    }

    auto [low, high] = current.bisect(axis);
    pending.emplace_back(std::move(high), depth + 1);
    pending.emplace_back(std::move(low), depth + 1);  // explored first
  }

  stats.wall_seconds = elapsed();
  if (stats.timed_out || stats.node_limit_hit || stats.inconclusive_leaves > 0)
    stats.verdict = Verdict::Inconclusive;
  else
    stats.verdict = Verdict::DoesNotIntersect;
  return stats;
}

}  // namespace relucert
