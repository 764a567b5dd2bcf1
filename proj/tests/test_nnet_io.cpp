#include <random>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "relucert/nnet_io.hpp"
#include "support/oracles.hpp"

using relucert::Index;
using relucert::Normalization;
using relucert::ReluNetwork;
using relucert::Vector;

namespace {

// A 2-2-1 network written out by hand in the benchmark text format.
const char* kTinyNnet = R"(// a hand-written fixture
// with a two-line comment
2,2,1,2,
2,2,1,
0
-1.0,-2.0,
1.0,2.0,
0.0,0.0,0.5,
1.0,1.0,2.0,
// weight layer 0, then its biases
1.0,0.5,
-1.0,2.0,
0.25,
-0.25,
// weight layer 1
1.0,-1.0,
0.125,
)";

Normalization tiny_norm() {
  Normalization n;
  n.input_min = Vector::Constant(2, -1.0);
  n.input_max = Vector::Constant(2, 1.0);
  n.input_mean = Vector::Zero(2);
  n.input_range = Vector::Ones(2);
  return n;
}

}  // namespace

TEST_CASE("reading the hand-written fixture") {
  std::istringstream in(kTinyNnet);
  const ReluNetwork net = relucert::read_nnet(in);
  CHECK(net.layer_count() == 3);
  CHECK(net.input_size() == 2);
  CHECK(net.output_size() == 1);
  CHECK(net.weight(0)(0, 0) == 1.0);
  CHECK(net.weight(0)(0, 1) == 0.5);
  CHECK(net.weight(0)(1, 0) == -1.0);
  CHECK(net.weight(0)(1, 1) == 2.0);
  CHECK(net.bias(0)(0) == 0.25);
  CHECK(net.bias(0)(1) == -0.25);
  CHECK(net.weight(1)(0, 0) == 1.0);
  CHECK(net.weight(1)(0, 1) == -1.0);
  CHECK(net.bias(1)(0) == 0.125);
  REQUIRE(net.normalization().has_value());
  CHECK(net.normalization()->input_min(0) == -1.0);
  CHECK(net.normalization()->input_max(1) == 2.0);
  CHECK(net.normalization()->output_mean == 0.5);
  CHECK(net.normalization()->output_range == 2.0);

  // f(x) = relu(W0 x + b0) . [1, -1] + 0.125, checked at a point by hand:
  // x = (1, 1): pre = (1.75, 0.75), post = same, out = 1.0 + 0.125.
  Vector x(2);
  x << 1.0, 1.0;
  CHECK_THAT(relucert::forward(net, x)(0), Catch::Matchers::WithinAbs(1.125, 1e-12));
}

TEST_CASE("text round trip preserves the network exactly") {
  std::mt19937_64 rng(13);
  ReluNetwork net = oracle::random_network(rng, {3, 5, 4, 2}, 1.2);
  Normalization norm;
  norm.input_min = Vector::Constant(3, -2.0);
  norm.input_max = Vector::Constant(3, 2.0);
  norm.input_mean = Vector::Constant(3, 0.25);
  norm.input_range = Vector::Constant(3, 1.5);
  norm.output_mean = 3.0;
  norm.output_range = 0.5;
  net.set_normalization(norm);

  std::ostringstream out;
  relucert::write_nnet(net, out);
  std::istringstream in(out.str());
  const ReluNetwork back = relucert::read_nnet(in);

  REQUIRE(back.layer_count() == net.layer_count());
  for (Index w = 0; w < net.weight_layer_count(); ++w) {
    CHECK((back.weight(w) - net.weight(w)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.bias(w) - net.bias(w)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(back.normalization()->output_mean == 3.0);
  CHECK(back.normalization()->output_range == 0.5);
}

TEST_CASE("json round trip preserves the network exactly") {
  std::mt19937_64 rng(17);
  ReluNetwork net = oracle::random_network(rng, {2, 4, 3}, 0.8);
  net.set_normalization(tiny_norm());
  const ReluNetwork back = relucert::network_from_json(relucert::network_to_json(net));
  for (Index w = 0; w < net.weight_layer_count(); ++w) {
    CHECK((back.weight(w) - net.weight(w)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.bias(w) - net.bias(w)).cwiseAbs().maxCoeff() == 0.0);
  }
  REQUIRE(back.normalization().has_value());
  CHECK(back.normalization()->input_range(0) == 1.0);
}

TEST_CASE("parse errors carry line numbers") {
  // Bad token on what is physically line 5 (after two comments).
  std::istringstream in("// c\n2,2,1,2,\n2,2,1,\n0\n-1.0,oops,\n");
  try {
    relucert::read_nnet(in);
    FAIL("expected ParseError");
  } catch (const relucert::ParseError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
}

TEST_CASE("truncated file reports end of input") {
  std::istringstream in("2,2,1,2,\n2,2,1,\n");
  CHECK_THROWS_AS(relucert::read_nnet(in), relucert::ParseError);
}

TEST_CASE("layer size line must agree with the header") {
  std::istringstream in("2,2,1,2,\n3,2,1,\n0\n");  // first size is not the input width
  CHECK_THROWS_AS(relucert::read_nnet(in), relucert::ParseError);
}

TEST_CASE("json parse failures are wrapped") {
  CHECK_THROWS_AS(relucert::network_from_json(nlohmann::json{{"weights", 3}}),
                  relucert::ParseError);
}
