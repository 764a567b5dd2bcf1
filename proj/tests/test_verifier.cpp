#include <cmath>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "relucert/network.hpp"
#include "relucert/relaxation.hpp"
#include "relucert/verifier.hpp"
#include "support/oracles.hpp"

using relucert::Index;
using relucert::InputBox;
using relucert::Matrix;
using relucert::OutputDisjunct;
using relucert::OutputSpec;
using relucert::ReluNetwork;
using relucert::RunStats;
using relucert::Vector;
using relucert::Verdict;
using relucert::VerifierOptions;

namespace {

// y = x over one input, no hidden layer.
ReluNetwork identity_net() {
  Matrix w(1, 1);
  w << 1.0;
  Vector b = Vector::Zero(1);
  return ReluNetwork({w}, {b});
}

// y = relu(x) over one input.
ReluNetwork relu_net() {
  Matrix w(1, 1);
  w << 1.0;
  Vector b = Vector::Zero(1);
  return ReluNetwork({w, w}, {b, b});
}

// y = relu(x0 + x1) + relu(x0 - x1). Over [-1,1]^2 the true maximum is 2,
// but the root relaxation reaches 3: the two triangle envelopes are tight
// at incompatible corners, so discharging a threshold between 2 and 3
// requires input splitting.
ReluNetwork loose_sum_net() {
  Matrix w0(2, 2);
  w0 << 1.0, 1.0, 1.0, -1.0;
  Vector b0 = Vector::Zero(2);
  Matrix w1(1, 2);
  w1 << 1.0, 1.0;
  Vector b1 = Vector::Zero(1);
  return ReluNetwork({w0, w1}, {b0, b1});
}

// Forbidden set { y : y_0 >= threshold }.
OutputSpec at_least(double threshold) {
  OutputSpec spec;
  spec.output_size = 1;
  Matrix a(1, 1);
  a << -1.0;
  Vector b(1);
  b << -threshold;
  spec.disjuncts.push_back({a, b});
  return spec;
}

InputBox interval(double lo, double hi) {
  return InputBox{Vector::Constant(1, lo), Vector::Constant(1, hi)};
}

// Certified upper bound of a . y over the relaxed output set of one box.
double relaxed_direction_max(const ReluNetwork& net, const InputBox& box, const Vector& a) {
  auto relaxed = relucert::compute_bounds(net, box);
  const auto out = relucert::output_polytope(net, box, relaxed.bounds, relaxed.coeffs);
  relucert::LinearProgram lp;
  lp.sense = relucert::LpSense::Maximize;
  lp.constraints = out.polytope.A;
  lp.rhs = out.polytope.b;
  lp.objective = Vector::Zero(out.polytope.A.cols());
  lp.objective.tail(out.polytope.block_width.back()) =
      out.output_weight.transpose() * a;
  const relucert::LpSolution sol = relucert::solve(lp);
  REQUIRE(sol.status == relucert::LpStatus::Optimal);
  return sol.objective_value + a.dot(out.output_bias);
}

}  // namespace

TEST_CASE("forbidden-set membership and witness checks") {
  const OutputSpec spec = at_least(2.0);
  Vector y(1);
  y << 2.5;
  CHECK(relucert::spec_contains(spec, y));
  y << 2.0 - 1e-8;
  CHECK(relucert::spec_contains(spec, y));  // inside the tolerance band
  y << 1.5;
  CHECK_FALSE(relucert::spec_contains(spec, y));

  const ReluNetwork net = identity_net();
  const InputBox box = interval(0.0, 3.0);
  Vector x(1);
  x << 2.5;
  CHECK(relucert::check_witness(net, box, spec, x));
  x << 1.0;
  CHECK_FALSE(relucert::check_witness(net, box, spec, x));  // output misses S
  x << 4.0;
  CHECK_FALSE(relucert::check_witness(net, box, spec, x));  // outside the box

  SECTION("validation rejects malformed specs") {
    OutputSpec bad = at_least(0.0);
    bad.output_size = 0;
    CHECK_THROWS_AS(bad.validate(), relucert::InvalidInput);
    bad = at_least(0.0);
    bad.disjuncts[0].a.resize(1, 2);
    bad.disjuncts[0].a << 1.0, 1.0;
    CHECK_THROWS_AS(bad.validate(), relucert::InvalidInput);
    bad = at_least(0.0);
    bad.disjuncts[0].b(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(bad.validate(), relucert::InvalidInput);
  }
}

TEST_CASE("affine network resolves in one node") {
  const ReluNetwork net = identity_net();

  SECTION("image misses the forbidden set") {
    const RunStats stats = relucert::verify(net, interval(0.0, 1.0), at_least(2.0));
    CHECK(stats.verdict == Verdict::DoesNotIntersect);
    CHECK(stats.nodes == 1);
    CHECK(stats.safe_leaves == 1);
    CHECK(stats.inconclusive_leaves == 0);
    CHECK(stats.witness_rejections == 0);
    CHECK_FALSE(stats.witness.has_value());
    REQUIRE(stats.depth_histogram.size() == 1);
    CHECK(stats.depth_histogram[0] == 1);
  }
  SECTION("image reaches the forbidden set") {
    const OutputSpec spec = at_least(2.0);
    const InputBox box = interval(0.0, 3.0);
    const RunStats stats = relucert::verify(net, box, spec);
    CHECK(stats.verdict == Verdict::Intersects);
    CHECK(stats.nodes == 1);
    REQUIRE(stats.witness.has_value());
    REQUIRE(stats.witness_output.has_value());
    CHECK(box.contains(*stats.witness, 1e-9));
    CHECK((*stats.witness_output)(0) >= 2.0 - 1e-6);
    CHECK(relucert::spec_contains(spec, *stats.witness_output));
  }
}

TEST_CASE("stable relu boxes resolve without splitting") {
  const ReluNetwork net = relu_net();
  SECTION("inactive box, empty intersection") {
    const RunStats stats = relucert::verify(net, interval(-2.0, -1.0), at_least(1.0));
    CHECK(stats.verdict == Verdict::DoesNotIntersect);
    CHECK(stats.nodes == 1);
  }
  SECTION("inactive box, output pinned inside the set") {
    const RunStats stats = relucert::verify(net, interval(-2.0, -1.0), at_least(-0.5));
    CHECK(stats.verdict == Verdict::Intersects);
    CHECK(stats.nodes == 1);
    REQUIRE(stats.witness_output.has_value());
    CHECK((*stats.witness_output)(0) == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("unstable relu box splits and finds the true witness") {
  // relu([-1,1]) = [0,1]; the set { y >= 0.75 } is reachable only from
  // x >= 0.75. The root is inexact, the low half discharges, the high half
  // is exactly active and produces the witness: three nodes, in that order.
  const ReluNetwork net = relu_net();
  const OutputSpec spec = at_least(0.75);
  const InputBox box = interval(-1.0, 1.0);

  for (const auto splitter : {relucert::SplitterKind::BoundEstimate,
                              relucert::SplitterKind::InputOutputGradient}) {
    VerifierOptions options;
    options.splitter = splitter;
    const RunStats stats = relucert::verify(net, box, spec, options);
    CAPTURE(relucert::to_string(splitter));
    CHECK(stats.verdict == Verdict::Intersects);
    CHECK(stats.nodes == 3);  // root, low half, high half — low explored first
    CHECK(stats.safe_leaves == 1);
    REQUIRE(stats.depth_histogram.size() == 2);
    CHECK(stats.depth_histogram[1] == 1);
    REQUIRE(stats.witness.has_value());
    CHECK((*stats.witness)(0) >= 0.75 - 1e-6);
    CHECK((*stats.witness)(0) <= 1.0 + 1e-9);
  }
}

TEST_CASE("loose relaxation forces splits before discharging") {
  // True maximum 2, root relaxation reaches 3; a threshold of 2.5 sits in
  // between, so the root cannot discharge but subdivision must, with no
  // inconclusive leaves and no witness.
  const ReluNetwork net = loose_sum_net();
  const InputBox box{Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)};
  Vector direction(1);
  direction << 1.0;
  REQUIRE(relaxed_direction_max(net, box, direction) == Catch::Approx(3.0));

  for (const auto splitter : {relucert::SplitterKind::BoundEstimate,
                              relucert::SplitterKind::InputOutputGradient}) {
    VerifierOptions options;
    options.splitter = splitter;
    const RunStats stats = relucert::verify(net, box, at_least(2.5), options);
    CAPTURE(relucert::to_string(splitter));
    CHECK(stats.verdict == Verdict::DoesNotIntersect);
    CHECK(stats.nodes >= 3);   // the root must split at least once
    CHECK(stats.nodes <= 63);  // and the search must stay small
    CHECK(stats.safe_leaves >= 2);
    CHECK(stats.inconclusive_leaves == 0);
    CHECK_FALSE(stats.witness.has_value());
    std::uint64_t closed = 0;
    for (const auto count : stats.depth_histogram) closed += count;
    CHECK(closed == stats.safe_leaves);
  }
}

TEST_CASE("resource limits close the run as inconclusive") {
  const ReluNetwork net = relu_net();
  const OutputSpec spec = at_least(0.75);
  const InputBox box = interval(-1.0, 1.0);

  SECTION("node budget") {
    VerifierOptions options;
    options.max_nodes = 1;
    const RunStats stats = relucert::verify(net, box, spec, options);
    CHECK(stats.verdict == Verdict::Inconclusive);
    CHECK(stats.node_limit_hit);
    CHECK_FALSE(stats.timed_out);
    CHECK(stats.nodes == 1);
  }
  SECTION("timeout") {
    VerifierOptions options;
    options.timeout_seconds = 1e-12;
    const RunStats stats = relucert::verify(net, box, spec, options);
    CHECK(stats.verdict == Verdict::Inconclusive);
    CHECK(stats.timed_out);
    CHECK(stats.nodes == 0);
  }
  SECTION("width floor at the root") {
    VerifierOptions options;
    options.width_floor = 2.0;  // the whole axis is at the floor
    const RunStats stats = relucert::verify(net, box, spec, options);
    CHECK(stats.verdict == Verdict::Inconclusive);
    CHECK(stats.inconclusive_leaves == 1);
    CHECK(stats.nodes == 1);
    CHECK_FALSE(stats.timed_out);
    CHECK_FALSE(stats.node_limit_hit);
  }
}

TEST_CASE("early counterexample check saves work when the center hits") {
  const ReluNetwork net = relu_net();
  const InputBox box = interval(-1.0, 1.0);
  const OutputSpec spec = at_least(-0.1);  // every output qualifies

  VerifierOptions early;
  early.early_counterexample = true;
  const RunStats fast = relucert::verify(net, box, spec, early);
  CHECK(fast.verdict == Verdict::Intersects);
  CHECK(fast.nodes == 1);
  REQUIRE(fast.witness.has_value());
  CHECK((*fast.witness)(0) == Catch::Approx(0.0).margin(1e-12));  // the box center

  const RunStats slow = relucert::verify(net, box, spec);
  CHECK(slow.verdict == Verdict::Intersects);
  CHECK(slow.nodes == 2);  // root splits, low half is exactly inactive
}

TEST_CASE("reduction on and off agree") {
  struct Case {
    ReluNetwork net;
    InputBox box;
    double threshold;
  };
  const std::vector<Case> cases = {
      {relu_net(), interval(-1.0, 1.5), 0.75},
      {relu_net(), interval(-1.0, 1.5), 1.8},
      {loose_sum_net(), InputBox{Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)}, 2.5},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    VerifierOptions reduced, full;
    reduced.use_reduction = true;
    full.use_reduction = false;
    const RunStats a = relucert::verify(cases[i].net, cases[i].box, at_least(cases[i].threshold),
                                        reduced);
    const RunStats b = relucert::verify(cases[i].net, cases[i].box, at_least(cases[i].threshold),
                                        full);
    CAPTURE(i);
    CHECK(a.verdict == b.verdict);
    CHECK(a.nodes == b.nodes);
    CHECK(a.safe_leaves == b.safe_leaves);
    CHECK(a.inconclusive_leaves == b.inconclusive_leaves);
  }
}

TEST_CASE("argument validation") {
  const ReluNetwork net = relu_net();
  OutputSpec wide = at_least(0.0);
  wide.output_size = 2;
  wide.disjuncts[0].a.resize(1, 2);
  wide.disjuncts[0].a << 1.0, 1.0;
  CHECK_THROWS_AS(relucert::verify(net, interval(0.0, 1.0), wide), relucert::InvalidInput);
  CHECK_THROWS_AS(relucert::verify(net, InputBox{Vector::Zero(2), Vector::Ones(2)}, at_least(1.0)),
                  relucert::InvalidInput);
}

TEST_CASE("run statistics serialize faithfully") {
  const ReluNetwork net = relu_net();
  SECTION("safe run") {
    const RunStats stats = relucert::verify(net, interval(-2.0, -1.0), at_least(1.0));
    const nlohmann::json doc = relucert::stats_to_json(stats);
    CHECK(doc["verdict"] == "does-not-intersect");
    CHECK(doc["nodes"] == 1);
    CHECK(doc["safe_leaves"] == 1);
    CHECK(doc["timed_out"] == false);
    CHECK(doc["node_limit_hit"] == false);
    CHECK_FALSE(doc.contains("witness"));
    REQUIRE(doc["depth_histogram"].size() == 1);  // zero-count depths dropped
    CHECK(doc["depth_histogram"][0][0] == 0);
    CHECK(doc["depth_histogram"][0][1] == 1);
    CHECK(doc["depth_mean"].get<double>() == Catch::Approx(0.0));
  }
  SECTION("intersecting run records the witness") {
    const RunStats stats = relucert::verify(net, interval(0.5, 2.0), at_least(1.0));
    const nlohmann::json doc = relucert::stats_to_json(stats);
    CHECK(doc["verdict"] == "intersects");
    REQUIRE(doc.contains("witness"));
    REQUIRE(doc["witness"].size() == 1);
    CHECK(doc["witness_output"][0].get<double>() >= 1.0 - 1e-6);
  }
}

TEST_CASE("reduced and full-structure intersection agree") {
  // The verifier probes the warm reduced model; intersect_full solves the
  // explicit layered polytope from scratch. Feasibility must match on both
  // paths, and any returned point must satisfy the full row system.
  std::mt19937_64 rng(3100);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int feasible_seen = 0, infeasible_seen = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const ReluNetwork net = oracle::random_network(rng, {2, 3, 2, 2}, 1.2);
    const InputBox box = oracle::random_box(rng, 2);
    auto relaxed = relucert::compute_bounds(net, box);
    const auto out = relucert::output_polytope(net, box, relaxed.bounds, relaxed.coeffs);
    const Vector y_center = relucert::forward(net, Vector((box.lower + box.upper) / 2.0));

    for (int probe = 0; probe < 6; ++probe) {
      Matrix a(1, 2);
      a << unit(rng), unit(rng);
      Vector b(1);
      // Alternate between rows that keep the center's output reachable and
      // rows pushed far below anything the relaxed set can reach.
      b(0) = probe % 2 == 0 ? a.row(0).dot(y_center) + 0.05 : a.row(0).dot(y_center) - 200.0;
      const OutputDisjunct d{a, b};

      const auto full = relucert::intersect_full(out, d);
      const auto reduced = relaxed.model.output_section_point(d.a, d.b);
      CAPTURE(trial, probe);
      REQUIRE(full.has_value() == reduced.has_value());
      (full ? feasible_seen : infeasible_seen) += 1;

      if (reduced) {
        const Vector& point = *reduced;
        REQUIRE(point.size() == out.polytope.A.cols());
        const double scale = 1.0 + out.polytope.b.cwiseAbs().maxCoeff();
        CHECK((out.polytope.A * point - out.polytope.b).maxCoeff() <= 1e-7 * scale);
        const Vector y = out.output_weight * point.tail(net.width(net.layer_count() - 2)) +
                         out.output_bias;
        CHECK((d.a * y - d.b).maxCoeff() <= 1e-7 * (1.0 + d.b.cwiseAbs().maxCoeff()));
      }
    }
  }
  // Both branches must actually occur for the comparison to mean anything.
  CHECK(feasible_seen > 0);
  CHECK(infeasible_seen > 0);
}

TEST_CASE("splitters agree with sampling on random instances") {
  // Property check over random instances: conclusive verdicts from either
  // splitter must agree with each other, never contradict sampled reachable
  // points, and discharge thresholds certified unreachable at the root.
  std::mt19937_64 rng(3300);
  int intersects = 0, safe = 0;
  for (int trial = 0; trial < 9; ++trial) {
    const ReluNetwork net = oracle::random_network(rng, {2, 3, 3, 2}, 1.1);
    const InputBox box = oracle::random_box(rng, 2, 0.4, 0.6);

    Vector a(2);
    a << 1.0, -1.0;
    double sample_max = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < 200; ++s) {
      const Vector x = oracle::random_point_in(rng, box);
      sample_max = std::max(sample_max, a.dot(relucert::forward(net, x)));
    }
    const double certified_max = relaxed_direction_max(net, box, a);
    REQUIRE(certified_max >= sample_max - 1e-6);

    double threshold;
    const int kind = trial % 3;
    if (kind == 0)
      threshold = sample_max - 1e-2;        // demonstrably reachable
    else if (kind == 1)
      threshold = certified_max + 0.5;      // certified unreachable
    else
      threshold = (sample_max + certified_max) / 2.0 + 1e-3;  // no ground truth

    OutputSpec spec;
    spec.output_size = 2;
    Matrix rows(1, 2);
    rows << -a(0), -a(1);  // forbid { a . y >= threshold }
    Vector rhs(1);
    rhs << -threshold;
    spec.disjuncts.push_back({rows, rhs});

    VerifierOptions be, iog;
    be.splitter = relucert::SplitterKind::BoundEstimate;
    iog.splitter = relucert::SplitterKind::InputOutputGradient;
    be.max_nodes = 2000;
    iog.max_nodes = 2000;
    const RunStats rb = relucert::verify(net, box, spec, be);
    const RunStats ri = relucert::verify(net, box, spec, iog);
    CAPTURE(trial, kind, threshold, sample_max, certified_max);

    if (kind == 0) {
      CHECK(rb.verdict != Verdict::DoesNotIntersect);
      CHECK(ri.verdict != Verdict::DoesNotIntersect);
      if (rb.verdict == Verdict::Intersects) {
        ++intersects;
        REQUIRE(rb.witness.has_value());
        CHECK(relucert::check_witness(net, box, spec, *rb.witness, 1e-5));
      }
    } else if (kind == 1) {
      CHECK(rb.verdict == Verdict::DoesNotIntersect);
      CHECK(ri.verdict == Verdict::DoesNotIntersect);
      ++safe;
    }
    if (rb.verdict != Verdict::Inconclusive && ri.verdict != Verdict::Inconclusive)
      CHECK(rb.verdict == ri.verdict);
    if (rb.verdict == Verdict::Intersects)
      CHECK(relucert::check_witness(net, box, spec, *rb.witness, 1e-5));
    if (ri.verdict == Verdict::Intersects)
      CHECK(relucert::check_witness(net, box, spec, *ri.witness, 1e-5));
  }
  CHECK(intersects > 0);
  CHECK(safe > 0);
}
