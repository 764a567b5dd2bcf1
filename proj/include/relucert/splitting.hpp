#pragma once

#include <limits>
#include <string>
#include <vector>

#include "relucert/bound_rates.hpp"
#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/relaxation.hpp"

// Choosing which input axis to bisect when a box is inconclusive.
//
// The shadow-price rule prices each candidate split by what it is predicted
// to do to node instability. Bisecting axis i moves one box facet per child:
// the low child moves facet i (the upper bound) and the high child moves
// facet n_in + i (the lower bound, stored negated), each by -width/2 in
// facet_bias() coordinates. First-order estimates of every child's
// pre-activation bounds follow from the bound rates, and the axis with the
// smallest summed estimated instability over both children wins.
//
// The gradient rule is the classical baseline: an interval extension of the
// input-output Jacobian, column-wise amplitude times axis width ("smear"),
// largest wins.

namespace relucert {

// Axes at or below this width are never bisected.
inline constexpr double kMinSplitWidth = 1e-12;

enum class SplitterKind { BoundEstimate, InputOutputGradient };

inline std::string to_string(SplitterKind kind) {
  return kind == SplitterKind::BoundEstimate ? "be" : "iog";
}

inline SplitterKind splitter_from_string(const std::string& name) {
  if (name == "be") return SplitterKind::BoundEstimate;
  if (name == "iog") return SplitterKind::InputOutputGradient;
  throw InvalidInput("unknown splitter '" + name + "' (expected be or iog)");
}

enum class BoxHalf { Low, High };

// First-order prediction of every hidden node's bounds in one child of a
// bisection along `axis`.
struct ChildBoundEstimate {
  std::vector<Vector> lower, upper;
  Index layers() const { return static_cast<Index>(lower.size()); }
};

inline ChildBoundEstimate estimate_child_bounds(const InputBox& box, const BoundsTable& bounds,
                                                const BoundRates& rates, Index axis,
                                                BoxHalf half) {
  if (axis < 0 || axis >= box.size()) throw InvalidInput("split axis out of range");
  if (rates.layers() != bounds.layers())
    throw InvalidInput("estimate_child_bounds needs rates matching the bounds table");
  const double step = box.width(axis) / 2.0;  // facet moves by -step
  const Index facet = half == BoxHalf::Low ? axis : box.size() + axis;
  ChildBoundEstimate est;
  for (Index j = 0; j < bounds.layers(); ++j) {
    est.lower.push_back(bounds.lower[static_cast<std::size_t>(j)] -
                        step * rates.lower[static_cast<std::size_t>(j)].col(facet));
    est.upper.push_back(bounds.upper[static_cast<std::size_t>(j)] -
                        step * rates.upper[static_cast<std::size_t>(j)].col(facet));
  }
  return est;
}

// Total predicted instability: sum over nodes of max{0,u} * max{0,-l}, the
// area term that vanishes exactly for nodes predicted stable.
inline double estimated_instability(const ChildBoundEstimate& est) {
  double mass = 0.0;
  for (Index j = 0; j < est.layers(); ++j)
    mass += (est.upper[static_cast<std::size_t>(j)].cwiseMax(0.0).array() *
             (-est.lower[static_cast<std::size_t>(j)]).cwiseMax(0.0).array())
                .sum();
  return mass;
}

// Shadow-price axis choice: least summed estimated instability over both
// children; the earliest axis wins ties. Throws DegenerateBox when every
// axis is at or below the width floor.
inline Index be_split_axis(const InputBox& box, const BoundsTable& bounds,
                           const BoundRates& rates, double min_width = kMinSplitWidth) {
  min_width = std::max(min_width, kMinSplitWidth);
  Index best = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < box.size(); ++i) {
    if (box.width(i) <= min_width) continue;
    const double score =
        estimated_instability(estimate_child_bounds(box, bounds, rates, i, BoxHalf::Low)) +
        estimated_instability(estimate_child_bounds(box, bounds, rates, i, BoxHalf::High));
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  if (best < 0) throw DegenerateBox("no axis wider than the split floor");
  return best;
}

// Interval extension of the input-output Jacobian: activation derivatives
// are [1,1], [0,0] or [0,1] by node stability, propagated backwards from the
// output layer. Returns the smallest and largest Jacobian per entry.
inline std::pair<Matrix, Matrix> interval_jacobian(const ReluNetwork& net,
                                                   const BoundsTable& bounds) {
  if (bounds.layers() != net.hidden_layer_count())
    throw InvalidInput("interval_jacobian needs bounds for every hidden layer");
  Matrix lo = net.weight(net.weight_layer_count() - 1);
  Matrix hi = lo;
  for (Index l = net.hidden_layer_count(); l >= 1; --l) {
    for (Index t = 0; t < net.width(l); ++t) {
      switch (bounds.state(l - 1, t)) {
        case NodeState::StableActive: break;
        case NodeState::StableInactive:
          lo.col(t).setZero();
          hi.col(t).setZero();
          break;
        case NodeState::Unstable:
          lo.col(t) = lo.col(t).cwiseMin(0.0);
          hi.col(t) = hi.col(t).cwiseMax(0.0);
          break;
      }
    }
    const Matrix& W = net.weight(l - 1);
    const Matrix w_pos = W.cwiseMax(0.0), w_neg = W.cwiseMin(0.0);
    Matrix next_lo = lo * w_pos + hi * w_neg;
    Matrix next_hi = hi * w_pos + lo * w_neg;
    lo = std::move(next_lo);
    hi = std::move(next_hi);
  }
  return {std::move(lo), std::move(hi)};
}

// Gradient-smear axis choice: largest (max |Jacobian| over outputs) * width;
// the earliest axis wins ties. Throws DegenerateBox when every axis is at
// or below the width floor.
inline Index iog_split_axis(const ReluNetwork& net, const InputBox& box,
                            const BoundsTable& bounds, double min_width = kMinSplitWidth) {
  min_width = std::max(min_width, kMinSplitWidth);
  const auto [lo, hi] = interval_jacobian(net, bounds);
  const Vector amplitude = lo.cwiseAbs().cwiseMax(hi.cwiseAbs()).colwise().maxCoeff().transpose();
  Index best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < box.size(); ++i) {
    if (box.width(i) <= min_width) continue;
    const double score = amplitude(i) * box.width(i);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  if (best < 0) throw DegenerateBox("no axis wider than the split floor");
  return best;
}

}  // namespace relucert
