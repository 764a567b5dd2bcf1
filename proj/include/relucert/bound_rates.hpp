#pragma once

#include <vector>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/relaxation.hpp"

// Sensitivities of the relaxed pre-activation bounds to the input box's
// facet positions, read off the bound LPs' dual solutions.
//
// The box rows are x <= upper and -x <= -lower, so the first-layer right
// hand side is b1 = [upper; -lower] and growing any entry of b1 grows the
// box. For a bound LP with optimal multipliers lambda on those rows,
//
//   d(lower bound)/d(b1) = -lambda_box of the minimizing LP,
//   d(upper bound)/d(b1) = +lambda_box of the maximizing LP.
//
// Deeper layers add an indirect path: moving a facet moves earlier bounds,
// which tilt the triangle envelopes, which move the feasible set of the
// deeper LP. Differentiating an unstable envelope row z <= c zhat + d
// through c(l, u) and d(l, u) at the optimal pre-activation zhat*
// contributes, per unstable node (w, t) with bounds (l, u) and envelope
// multiplier lambda_env,
//
//   lambda_env * [ l (zhat* - l) du_wt + u (u - zhat*) dl_wt ] / (u - l)^2
//
// added to the lower-bound rate row (and subtracted from the upper-bound
// rate row), where dl_wt, du_wt are that node's already-computed rate rows.
// Stable nodes keep constant envelopes and drop out, so the recursion runs
// front to back over unstable nodes only.
//
// The rates are exact one-sided derivatives wherever the optimal basis is
// unique; at degenerate corners they pick one subgradient, which is all the
// splitting heuristic needs.

namespace relucert {

// Rate rows for every hidden node: lower[j].row(k) and upper[j].row(k) hold
// d(bound of node (j,k))/d(facet positions), 2*n_in columns ordered like
// facet_bias().
struct BoundRates {
  std::vector<Matrix> lower, upper;
  Index layers() const { return static_cast<Index>(lower.size()); }
};

namespace detail {

// Pre-activations of hidden layers 1..depth at a full-structure primal
// point [x; z_1; ...]; entry w bounds-indexes hidden layer w+1.
inline std::vector<Vector> hidden_preactivations(const ReluNetwork& net, const Vector& primal,
                                                 Index depth) {
  std::vector<Vector> zhat;
  Index offset = 0;
  for (Index w = 0; w < depth; ++w) {
    const Index prev = net.width(w);
    zhat.push_back(net.weight(w) * primal.segment(offset, prev) + net.bias(w));
    offset += prev;
  }
  return zhat;
}

}  // namespace detail

// Rates for the first hidden layer alone: pure multiplier readout.
inline void first_layer_rates(const BoundsTable& bounds, Index n_in, Matrix& dl, Matrix& du) {
  const Index n = bounds.nodes(0);
  dl.resize(n, 2 * n_in);
  du.resize(n, 2 * n_in);
  for (Index k = 0; k < n; ++k) {
    dl.row(k) =
        -bounds.lower_solution[0][static_cast<std::size_t>(k)].dual.head(2 * n_in).transpose();
    du.row(k) =
        bounds.upper_solution[0][static_cast<std::size_t>(k)].dual.head(2 * n_in).transpose();
  }
}

// Rates for every hidden layer, front to back.
inline BoundRates bound_rates(const ReluNetwork& net, const BoundsTable& bounds) {
  if (bounds.layers() != net.hidden_layer_count())
    throw InvalidInput("bound_rates needs bounds for every hidden layer");
  const Index n_in = net.input_size();
  BoundRates rates;
  rates.lower.resize(static_cast<std::size_t>(bounds.layers()));
  rates.upper.resize(static_cast<std::size_t>(bounds.layers()));
  if (bounds.layers() == 0) return rates;

  first_layer_rates(bounds, n_in, rates.lower[0], rates.upper[0]);

  for (Index j = 1; j < bounds.layers(); ++j) {
    const Index n = bounds.nodes(j);
    Matrix& dl = rates.lower[static_cast<std::size_t>(j)];
    Matrix& du = rates.upper[static_cast<std::size_t>(j)];
    dl.resize(n, 2 * n_in);
    du.resize(n, 2 * n_in);
    for (Index k = 0; k < n; ++k) {
      const LpSolution& lo =
          bounds.lower_solution[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      const LpSolution& up =
          bounds.upper_solution[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      dl.row(k) = -lo.dual.head(2 * n_in).transpose();
      du.row(k) = up.dual.head(2 * n_in).transpose();

      const auto zhat_lo = detail::hidden_preactivations(net, lo.primal, j);
      const auto zhat_up = detail::hidden_preactivations(net, up.primal, j);

      Index row = 2 * n_in;  // first row of block 1 in the full structure
      for (Index w = 0; w < j; ++w) {
        const Index m = bounds.nodes(w);
        const Matrix& dl_w = rates.lower[static_cast<std::size_t>(w)];
        const Matrix& du_w = rates.upper[static_cast<std::size_t>(w)];
        for (Index t = 0; t < m; ++t) {
          const double l = bounds.lower[static_cast<std::size_t>(w)](t);
          const double u = bounds.upper[static_cast<std::size_t>(w)](t);
          if (envelope_state(l, u) != NodeState::Unstable) continue;
          const double width2 = (u - l) * (u - l);
          const Index env = row + 2 * m + t;
          if (const double lam = lo.dual(env); lam > 0.0) {
            const double zh = zhat_lo[static_cast<std::size_t>(w)](t);
            dl.row(k) +=
                lam * (l * (zh - l) * du_w.row(t) + u * (u - zh) * dl_w.row(t)) / width2;
          }
          if (const double lam = up.dual(env); lam > 0.0) {
            const double zh = zhat_up[static_cast<std::size_t>(w)](t);
            du.row(k) -=
                lam * (l * (zh - l) * du_w.row(t) + u * (u - zh) * dl_w.row(t)) / width2;
          }
        }
        row += 3 * m;
      }
    }
  }
  return rates;
}

}  // namespace relucert
