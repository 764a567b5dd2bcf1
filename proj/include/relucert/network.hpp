#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"

// Feedforward ReLU networks and axis-aligned input boxes.
//
// Layer numbering is 0-based throughout: layer 0 is the input, layer K-1 the
// output, layers 1..K-2 are hidden and apply z = max{zhat, 0} elementwise.
// Weight layer w (w = 0..K-2) maps the activations of layer w to the
// pre-activations of layer w+1:
//
//   zhat_{w+1} = W_w z_w + b_w
//
// The output layer is affine only — no ReLU after the last weight layer.

namespace relucert {

// Stability of one hidden node with respect to a pre-activation interval
// [lower, upper]: inactive if it can never fire, active if it always fires,
// unstable if the interval straddles zero. Ties at exactly zero are stable
// (the ReLU is linear on either closed half-line).
enum class NodeState { StableInactive, StableActive, Unstable };

inline NodeState classify_node(double lower, double upper) {
  if (upper <= 0.0) return NodeState::StableInactive;
  if (lower >= 0.0) return NodeState::StableActive;
  return NodeState::Unstable;
}

inline const char* to_string(NodeState s) {
  switch (s) {
    case NodeState::StableInactive: return "stable_inactive";
    case NodeState::StableActive: return "stable_active";
    case NodeState::Unstable: return "unstable";
  }
  return "?";
}

// Input scaling metadata as carried by the .nnet format: raw physical inputs
// are clipped to [min, max] and scaled to (x - mean) / range before entering
// the network; raw network outputs map back as y * range + mean (one shared
// mean/range pair for all outputs).
struct Normalization {
  Vector input_min, input_max, input_mean, input_range;
  double output_mean = 0.0;
  double output_range = 1.0;
};

class ReluNetwork {
 public:
  ReluNetwork(std::vector<Matrix> weights, std::vector<Vector> biases)
      : weights_(std::move(weights)), biases_(std::move(biases)) {
    if (weights_.empty() || weights_.size() != biases_.size())
      throw InvalidInput("network needs one bias vector per weight matrix, at least one layer");
    for (std::size_t w = 0; w < weights_.size(); ++w) {
      if (weights_[w].rows() == 0 || weights_[w].cols() == 0)
        throw InvalidInput("weight layer " + std::to_string(w) + " is empty");
      if (weights_[w].rows() != biases_[w].size())
        throw InvalidInput("weight/bias row mismatch at layer " + std::to_string(w));
      if (w + 1 < weights_.size() && weights_[w + 1].cols() != weights_[w].rows())
        throw InvalidInput("layer width mismatch between weight layers " + std::to_string(w) +
                           " and " + std::to_string(w + 1));
      if (!all_finite(weights_[w]) || !all_finite(biases_[w]))
        throw InvalidInput("non-finite entry in weight layer " + std::to_string(w));
    }
  }

  // Number of layers K, counting input and output.
  Index layer_count() const { return static_cast<Index>(weights_.size()) + 1; }
  Index hidden_layer_count() const { return layer_count() - 2; }
  Index weight_layer_count() const { return static_cast<Index>(weights_.size()); }

  Index width(Index layer) const {
    if (layer < 0 || layer >= layer_count())
      throw InvalidInput("layer index out of range");
    return layer == 0 ? weights_[0].cols() : weights_[layer - 1].rows();
  }
  Index input_size() const { return weights_.front().cols(); }
  Index output_size() const { return weights_.back().rows(); }

  const Matrix& weight(Index w) const { return weights_.at(static_cast<std::size_t>(w)); }
  const Vector& bias(Index w) const { return biases_.at(static_cast<std::size_t>(w)); }

  const std::optional<Normalization>& normalization() const { return normalization_; }
  void set_normalization(Normalization n) {
    const Index d = input_size();
    if (n.input_min.size() != d || n.input_max.size() != d || n.input_mean.size() != d ||
        n.input_range.size() != d)
      throw InvalidInput("normalization vectors must match the input width");
    if ((n.input_range.array() <= 0).any() || n.output_range <= 0)
      throw InvalidInput("normalization ranges must be positive");
    normalization_ = std::move(n);
  }

  // Clip a physical input to the declared range and scale it to network units.
  Vector normalize_input(const Vector& physical) const {
    const Normalization& n = require_normalization();
    Vector clipped = physical.cwiseMax(n.input_min).cwiseMin(n.input_max);
    return (clipped - n.input_mean).cwiseQuotient(n.input_range);
  }
  double denormalize_output(double y) const {
    const Normalization& n = require_normalization();
    return y * n.output_range + n.output_mean;
  }
  double normalize_output(double physical) const {
    const Normalization& n = require_normalization();
    return (physical - n.output_mean) / n.output_range;
  }

 private:
  const Normalization& require_normalization() const {
    if (!normalization_) throw InvalidInput("network carries no normalization metadata");
    return *normalization_;
  }

  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::optional<Normalization> normalization_;
};

// Axis-aligned box of network inputs, lower <= upper componentwise.
struct InputBox {
  Vector lower, upper;

  InputBox(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() == 0 || lower.size() != upper.size())
      throw InvalidInput("box needs matching nonempty lower/upper vectors");
    if (!all_finite(lower) || !all_finite(upper))
      throw InvalidInput("box bounds must be finite");
    if ((lower.array() > upper.array()).any())
      throw InvalidInput("box has lower > upper on some axis");
  }

  Index size() const { return lower.size(); }
  double width(Index axis) const { return upper(axis) - lower(axis); }

  // The box as the first constraint block: rows [I; -I], right-hand side
  // [upper; -lower]. Growing any entry of this vector grows the box.
  Vector facet_bias() const {
    Vector b(2 * size());
    b.head(size()) = upper;
    b.tail(size()) = -lower;
    return b;
  }

  bool contains(const Vector& x, double tol = 0.0) const {
    if (x.size() != size()) return false;
    return (x.array() >= lower.array() - tol).all() && (x.array() <= upper.array() + tol).all();
  }

  // Exact bisection along one axis; the midpoint belongs to both halves.
  std::pair<InputBox, InputBox> bisect(Index axis) const {
    if (axis < 0 || axis >= size()) throw InvalidInput("bisect axis out of range");
    const double mid = 0.5 * (lower(axis) + upper(axis));
    Vector lo_hi = upper, hi_lo = lower;
    lo_hi(axis) = mid;
    hi_lo(axis) = mid;
    return {InputBox(lower, lo_hi), InputBox(hi_lo, upper)};
  }
};

// Run the network forward on one input point.
inline Vector forward(const ReluNetwork& net, const Vector& x) {
  if (x.size() != net.input_size()) throw InvalidInput("input width mismatch in forward()");
  Vector z = x;
  const Index n_weights = net.weight_layer_count();
  for (Index w = 0; w < n_weights; ++w) {
    Vector zhat = net.weight(w) * z + net.bias(w);
    z = (w + 1 < n_weights) ? zhat.cwiseMax(0.0) : std::move(zhat);
  }
  return z;
}

// Forward pass that also records every hidden pre-activation, for checks that
// need to see inside the network. preactivations[w] holds zhat_{w+1} for
// hidden layers only (w = 0..K-3); output is the final affine result.
struct ForwardTrace {
  std::vector<Vector> preactivations;
  Vector output;
};

inline ForwardTrace forward_trace(const ReluNetwork& net, const Vector& x) {
  if (x.size() != net.input_size()) throw InvalidInput("input width mismatch in forward_trace()");
  ForwardTrace trace;
  Vector z = x;
  const Index n_weights = net.weight_layer_count();
  for (Index w = 0; w < n_weights; ++w) {
    Vector zhat = net.weight(w) * z + net.bias(w);
    if (w + 1 < n_weights) {
      trace.preactivations.push_back(zhat);
      z = zhat.cwiseMax(0.0);
    } else {
      trace.output = std::move(zhat);
    }
  }
  return trace;
}

}  // namespace relucert
