#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/verifier.hpp"

// The ACAS Xu benchmark: ten properties checked against a family of 45
// collision-avoidance networks (5 inputs, 5 advisory scores, 6 hidden
// layers of 50). Properties are written over physical units — distances in
// feet, angles in radians, speeds in feet per second — and each names the
// subset of networks it applies to.
//
// A property states a box of input ranges (open ends fall back to the
// network's operating range) and a *desired* output condition. Verification
// works on the negation: the forbidden set handed to the verifier is the
// complement of the desired condition, compiled to a union of polyhedra
// over the raw network outputs, with thresholds mapped through the output
// normalization. A property holds exactly when the verifier returns
// DoesNotIntersect on every one of its boxes; the benchmark calls that
// "unsatisfied" when the forbidden set is reachable instead.

namespace relucert::acas {

inline constexpr Index kInputCount = 5;
inline constexpr Index kOutputCount = 5;

// Input order: distance rho, angle to intruder theta, intruder heading psi,
// own speed, intruder speed.
inline constexpr Index kRho = 0, kTheta = 1, kPsi = 2, kOwnSpeed = 3, kIntruderSpeed = 4;

// Advisory score order. The system follows the advisory with the lowest
// score.
inline constexpr Index kClearOfConflict = 0, kWeakLeft = 1, kWeakRight = 2, kStrongLeft = 3,
                       kStrongRight = 4;

// A condition over the (denormalized) advisory scores. Scalar kinds talk
// about one output; AllOf/AnyOf combine subconditions.
struct Condition {
  enum class Kind { AtMost, AtLeast, Minimal, NotMinimal, Maximal, NotMaximal, AllOf, AnyOf };
  Kind kind = Kind::AtMost;
  Index output = -1;
  double threshold = 0.0;
  std::vector<Condition> terms;

  static Condition at_most(Index output, double threshold) {
    return {Kind::AtMost, output, threshold, {}};
  }
  static Condition at_least(Index output, double threshold) {
    return {Kind::AtLeast, output, threshold, {}};
  }
  static Condition minimal(Index output) { return {Kind::Minimal, output, 0.0, {}}; }
  static Condition not_minimal(Index output) { return {Kind::NotMinimal, output, 0.0, {}}; }
  static Condition maximal(Index output) { return {Kind::Maximal, output, 0.0, {}}; }
  static Condition not_maximal(Index output) { return {Kind::NotMaximal, output, 0.0, {}}; }
  static Condition all_of(std::vector<Condition> terms) {
    return {Kind::AllOf, -1, 0.0, std::move(terms)};
  }
  static Condition any_of(std::vector<Condition> terms) {
    return {Kind::AnyOf, -1, 0.0, std::move(terms)};
  }
};

// Input ranges in physical units; an unset end means "the network's
// operating range".
struct RangeBox {
  std::vector<std::optional<double>> lower, upper;

  static RangeBox open() {
    RangeBox box;
    box.lower.assign(static_cast<std::size_t>(kInputCount), std::nullopt);
    box.upper.assign(static_cast<std::size_t>(kInputCount), std::nullopt);
    return box;
  }
  RangeBox& set_lower(Index axis, double v) {
    lower[static_cast<std::size_t>(axis)] = v;
    return *this;
  }
  RangeBox& set_upper(Index axis, double v) {
    upper[static_cast<std::size_t>(axis)] = v;
    return *this;
  }
  RangeBox& set(Index axis, double lo, double hi) { return set_lower(axis, lo).set_upper(axis, hi); }
};

// One benchmark property. An empty network list means "all 45".
struct Property {
  std::string name;
  std::vector<std::pair<int, int>> networks;
  std::vector<RangeBox> boxes;
  Condition desired;

  bool applies_to(const std::optional<std::pair<int, int>>& id) const {
    if (networks.empty() || !id) return true;  // unknown identity: run it
    for (const auto& n : networks)
      if (n == *id) return true;
    return false;
  }
};

// --- built-in catalog -----------------------------------------------------

inline std::vector<Property> builtin_properties() {
  std::vector<Property> props;
  const auto grid = [](int x_from, int x_to, std::vector<std::pair<int, int>> skip = {}) {
    std::vector<std::pair<int, int>> ids;
    for (int x = x_from; x <= x_to; ++x)
      for (int y = 1; y <= 9; ++y) {
        const std::pair<int, int> id{x, y};
        bool skipped = false;
        for (const auto& s : skip) skipped = skipped || s == id;
        if (!skipped) ids.push_back(id);
      }
    return ids;
  };

  const RangeBox distant_slow = RangeBox::open()
                                    .set_lower(kRho, 55947.691)
                                    .set_lower(kOwnSpeed, 1145.0)
                                    .set_upper(kIntruderSpeed, 60.0);
  props.push_back({"phi1", {}, {distant_slow}, Condition::at_most(kClearOfConflict, 1500.0)});
  props.push_back(
      {"phi2", grid(2, 5, {{4, 2}, {5, 3}}), {distant_slow}, Condition::not_maximal(kClearOfConflict)});

  props.push_back({"phi3", grid(1, 5, {{1, 7}, {1, 8}, {1, 9}}),
                   {RangeBox::open()
                        .set(kRho, 1500.0, 1800.0)
                        .set(kTheta, -0.06, 0.06)
                        .set_lower(kPsi, 3.10)
                        .set_lower(kOwnSpeed, 980.0)
                        .set_lower(kIntruderSpeed, 960.0)},
                   Condition::not_minimal(kClearOfConflict)});
  props.push_back({"phi4", grid(1, 5, {{1, 7}, {1, 8}, {1, 9}}),
                   {RangeBox::open()
                        .set(kRho, 1500.0, 1800.0)
                        .set(kTheta, -0.06, 0.06)
                        .set(kPsi, 0.0, 0.0)
                        .set_lower(kOwnSpeed, 1000.0)
                        .set(kIntruderSpeed, 700.0, 800.0)},
                   Condition::not_minimal(kClearOfConflict)});
  props.push_back({"phi5",
                   {{1, 1}},
                   {RangeBox::open()
                        .set(kRho, 250.0, 400.0)
                        .set(kTheta, 0.2, 0.4)
                        .set(kPsi, -3.141592, -3.141592 + 0.005)
                        .set(kOwnSpeed, 100.0, 400.0)
                        .set(kIntruderSpeed, 0.0, 400.0)},
                   Condition::minimal(kStrongRight)});
  props.push_back({"phi6",
                   {{1, 1}},
                   {RangeBox::open()
                        .set(kRho, 12000.0, 62000.0)
                        .set(kTheta, 0.7, 3.141592)
                        .set(kPsi, -3.141592, -3.141592 + 0.005)
                        .set(kOwnSpeed, 100.0, 1200.0)
                        .set(kIntruderSpeed, 0.0, 1200.0),
                    RangeBox::open()
                        .set(kRho, 12000.0, 62000.0)
                        .set(kTheta, -3.141592, -0.7)
                        .set(kPsi, -3.141592, -3.141592 + 0.005)
                        .set(kOwnSpeed, 100.0, 1200.0)
                        .set(kIntruderSpeed, 0.0, 1200.0)},
                   Condition::minimal(kClearOfConflict)});
  props.push_back({"phi7",
                   {{1, 9}},
                   {RangeBox::open()
                        .set(kRho, 0.0, 60760.0)
                        .set(kTheta, -3.141592, 3.141592)
                        .set(kPsi, -3.141592, 3.141592)
                        .set(kOwnSpeed, 100.0, 1200.0)
                        .set(kIntruderSpeed, 0.0, 1200.0)},
                   Condition::all_of({Condition::not_minimal(kStrongRight),
                                      Condition::not_minimal(kStrongLeft)})});
  props.push_back({"phi8",
                   {{2, 9}},
                   {RangeBox::open()
                        .set(kRho, 0.0, 60760.0)
                        .set(kTheta, -3.141592, -0.75 * 3.141592)
                        .set(kPsi, -0.1, 0.1)
                        .set(kOwnSpeed, 600.0, 1200.0)
                        .set(kIntruderSpeed, 600.0, 1200.0)},
                   Condition::any_of({Condition::minimal(kWeakLeft),
                                      Condition::minimal(kClearOfConflict)})});
  props.push_back({"phi9",
                   {{3, 3}},
                   {RangeBox::open()
                        .set(kRho, 2000.0, 7000.0)
                        .set(kTheta, -0.4, -0.14)
                        .set(kPsi, -3.141592, -3.141592 + 0.01)
                        .set(kOwnSpeed, 100.0, 150.0)
                        .set(kIntruderSpeed, 0.0, 150.0)},
                   Condition::minimal(kStrongLeft)});
  props.push_back({"phi10",
                   {{4, 5}},
                   {RangeBox::open()
                        .set(kRho, 36000.0, 60760.0)
                        .set(kTheta, 0.7, 3.141592)
                        .set(kPsi, -3.141592, -3.141592 + 0.01)
                        .set(kOwnSpeed, 900.0, 1200.0)
                        .set(kIntruderSpeed, 600.0, 1200.0)},
                   Condition::minimal(kClearOfConflict)});
  return props;
}

inline const Property& builtin_property(const std::string& name) {
  static const std::vector<Property> props = builtin_properties();
  for (const auto& p : props)
    if (p.name == name) return p;
  throw InvalidInput("unknown built-in property '" + name + "'");
}

// --- compilation to verifier inputs ----------------------------------------

namespace detail {

// One polyhedral disjunct under construction: rows over raw outputs.
struct ProtoDisjunct {
  std::vector<Vector> rows;
  std::vector<double> rhs;
};

inline ProtoDisjunct merge(const ProtoDisjunct& a, const ProtoDisjunct& b) {
  ProtoDisjunct out = a;
  out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
  out.rhs.insert(out.rhs.end(), b.rhs.begin(), b.rhs.end());
  return out;
}

inline Vector unit_diff(Index plus, Index minus) {
  Vector row = Vector::Zero(kOutputCount);
  row(plus) = 1.0;
  row(minus) = -1.0;
  return row;
}

// Negation of a condition as a union of closed polyhedra over the raw
// (normalized) outputs. Strict inequalities in the complement are closed
// up, which only adds a measure-zero boundary; the forward-pass witness
// check keeps reported counterexamples honest.
inline std::vector<ProtoDisjunct> negate(const Condition& c, const Normalization& norm) {
  const auto single_row = [](Vector row, double rhs) {
    ProtoDisjunct d;
    d.rows.push_back(std::move(row));
    d.rhs.push_back(rhs);
    return d;
  };
  const auto normalized = [&norm](double threshold) {
    return (threshold - norm.output_mean) / norm.output_range;
  };
  std::vector<ProtoDisjunct> out;
  switch (c.kind) {
    case Condition::Kind::AtMost: {  // complement: y_o >= T
      Vector row = Vector::Zero(kOutputCount);
      row(c.output) = -1.0;
      out.push_back(single_row(std::move(row), -normalized(c.threshold)));
      break;
    }
    case Condition::Kind::AtLeast: {  // complement: y_o <= T
      Vector row = Vector::Zero(kOutputCount);
      row(c.output) = 1.0;
      out.push_back(single_row(std::move(row), normalized(c.threshold)));
      break;
    }
    case Condition::Kind::Minimal:  // complement: some y_j <= y_o
      for (Index j = 0; j < kOutputCount; ++j)
        if (j != c.output) out.push_back(single_row(unit_diff(j, c.output), 0.0));
      break;
    case Condition::Kind::NotMinimal: {  // complement: y_o <= all y_j
      ProtoDisjunct d;
      for (Index j = 0; j < kOutputCount; ++j) {
        if (j == c.output) continue;
        d.rows.push_back(unit_diff(c.output, j));
        d.rhs.push_back(0.0);
      }
      out.push_back(std::move(d));
      break;
    }
    case Condition::Kind::Maximal:  // complement: some y_j >= y_o
      for (Index j = 0; j < kOutputCount; ++j)
        if (j != c.output) out.push_back(single_row(unit_diff(c.output, j), 0.0));
      break;
    case Condition::Kind::NotMaximal: {  // complement: y_o >= all y_j
      ProtoDisjunct d;
      for (Index j = 0; j < kOutputCount; ++j) {
        if (j == c.output) continue;
        d.rows.push_back(unit_diff(j, c.output));
        d.rhs.push_back(0.0);
      }
      out.push_back(std::move(d));
      break;
    }
    case Condition::Kind::AllOf:  // complement: union of complements
      for (const auto& term : c.terms) {
        auto sub = negate(term, norm);
        out.insert(out.end(), sub.begin(), sub.end());
      }
      break;
    case Condition::Kind::AnyOf: {  // complement: cross product of complements
      std::vector<ProtoDisjunct> acc{ProtoDisjunct{}};
      for (const auto& term : c.terms) {
        const auto sub = negate(term, norm);
        std::vector<ProtoDisjunct> next;
        for (const auto& a : acc)
          for (const auto& s : sub) next.push_back(merge(a, s));
        acc = std::move(next);
      }
      out = std::move(acc);
      break;
    }
  }
  return out;
}

}  // namespace detail

// Forbidden set for a desired condition: its complement over the raw
// network outputs, thresholds mapped through the output normalization.
inline OutputSpec compile_forbidden_set(const Condition& desired, const Normalization& norm) {
  OutputSpec spec;
  spec.output_size = kOutputCount;
  for (auto& proto : detail::negate(desired, norm)) {
    OutputDisjunct d;
    d.a.resize(static_cast<Index>(proto.rows.size()), kOutputCount);
    d.b.resize(static_cast<Index>(proto.rhs.size()));
    for (std::size_t r = 0; r < proto.rows.size(); ++r) {
      d.a.row(static_cast<Index>(r)) = proto.rows[r].transpose();
      d.b(static_cast<Index>(r)) = proto.rhs[r];
    }
    spec.disjuncts.push_back(std::move(d));
  }
  spec.validate();
  return spec;
}

// Physical input ranges -> normalized InputBox: open ends fall back to the
// operating range, closed ends are clipped into it, then everything is
// scaled the way the network expects its inputs.
inline InputBox compile_box(const RangeBox& ranges, const Normalization& norm) {
  if (static_cast<Index>(ranges.lower.size()) != kInputCount ||
      static_cast<Index>(ranges.upper.size()) != kInputCount)
    throw InvalidInput("property box must cover all five inputs");
  Vector lower(kInputCount), upper(kInputCount);
  for (Index i = 0; i < kInputCount; ++i) {
    double lo = norm.input_min(i), hi = norm.input_max(i);
    if (const auto& v = ranges.lower[static_cast<std::size_t>(i)]) lo = std::max(lo, *v);
    if (const auto& v = ranges.upper[static_cast<std::size_t>(i)]) hi = std::min(hi, *v);
    if (lo > hi)
      throw InvalidInput("property range lies outside the network operating range on axis " +
                         std::to_string(i));
    lower(i) = (lo - norm.input_mean(i)) / norm.input_range(i);
    upper(i) = (hi - norm.input_mean(i)) / norm.input_range(i);
  }
  return InputBox{std::move(lower), std::move(upper)};
}

// A property made concrete against one network's normalization.
struct CompiledProperty {
  std::string name;
  std::vector<InputBox> boxes;
  OutputSpec forbidden;
};

inline CompiledProperty compile_property(const Property& prop, const ReluNetwork& net) {
  if (net.input_size() != kInputCount || net.output_size() != kOutputCount)
    throw InvalidInput("property compilation expects a 5-in/5-out network");
  if (!net.normalization())
    throw InvalidInput("property compilation needs the network's normalization data");
  const Normalization& norm = *net.normalization();
  CompiledProperty out;
  out.name = prop.name;
  for (const auto& ranges : prop.boxes) out.boxes.push_back(compile_box(ranges, norm));
  out.forbidden = compile_forbidden_set(prop.desired, norm);
  return out;
}

// --- JSON form --------------------------------------------------------------

inline nlohmann::json condition_to_json(const Condition& c) {
  switch (c.kind) {
    case Condition::Kind::AtMost:
      return {{"kind", "at-most"}, {"output", c.output}, {"threshold", c.threshold}};
    case Condition::Kind::AtLeast:
      return {{"kind", "at-least"}, {"output", c.output}, {"threshold", c.threshold}};
    case Condition::Kind::Minimal: return {{"kind", "minimal"}, {"output", c.output}};
    case Condition::Kind::NotMinimal: return {{"kind", "not-minimal"}, {"output", c.output}};
    case Condition::Kind::Maximal: return {{"kind", "maximal"}, {"output", c.output}};
    case Condition::Kind::NotMaximal: return {{"kind", "not-maximal"}, {"output", c.output}};
    case Condition::Kind::AllOf:
    case Condition::Kind::AnyOf: {
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& t : c.terms) terms.push_back(condition_to_json(t));
      return {{"kind", c.kind == Condition::Kind::AllOf ? "all-of" : "any-of"},
              {"terms", std::move(terms)}};
    }
  }
  throw InternalError("unhandled condition kind");
}

inline Condition condition_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "all-of" || kind == "any-of") {
      std::vector<Condition> terms;
      for (const auto& t : j.at("terms")) terms.push_back(condition_from_json(t));
      return kind == "all-of" ? Condition::all_of(std::move(terms))
                              : Condition::any_of(std::move(terms));
    }
    const Index output = j.at("output").get<Index>();
    if (output < 0 || output >= kOutputCount)
      throw InvalidInput("condition output index out of range");
    if (kind == "at-most") return Condition::at_most(output, j.at("threshold").get<double>());
    if (kind == "at-least") return Condition::at_least(output, j.at("threshold").get<double>());
    if (kind == "minimal") return Condition::minimal(output);
    if (kind == "not-minimal") return Condition::not_minimal(output);
    if (kind == "maximal") return Condition::maximal(output);
    if (kind == "not-maximal") return Condition::not_maximal(output);
    throw InvalidInput("unknown condition kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad condition object: ") + e.what());
  }
}

inline nlohmann::json property_to_json(const Property& p) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& box : p.boxes) {
    nlohmann::json lower = nlohmann::json::array(), upper = nlohmann::json::array();
    for (const auto& v : box.lower) v ? lower.push_back(*v) : lower.push_back(nullptr);
    for (const auto& v : box.upper) v ? upper.push_back(*v) : upper.push_back(nullptr);
    boxes.push_back({{"lower", std::move(lower)}, {"upper", std::move(upper)}});
  }
  nlohmann::json networks;
  if (p.networks.empty()) {
    networks = "all";
  } else {
    networks = nlohmann::json::array();
    for (const auto& [x, y] : p.networks) networks.push_back({x, y});
  }
  return {{"name", p.name},
          {"networks", std::move(networks)},
          {"boxes", std::move(boxes)},
          {"desired", condition_to_json(p.desired)}};
}

inline Property property_from_json(const nlohmann::json& j) {
  try {
    Property p;
    p.name = j.at("name").get<std::string>();
    const auto& networks = j.at("networks");
    if (networks.is_string()) {
      if (networks.get<std::string>() != "all")
        throw InvalidInput("networks must be \"all\" or a list of [x, y] pairs");
    } else {
      for (const auto& n : networks)
        p.networks.emplace_back(n.at(0).get<int>(), n.at(1).get<int>());
    }
    for (const auto& b : j.at("boxes")) {
      RangeBox box = RangeBox::open();
      const auto& lower = b.at("lower");
      const auto& upper = b.at("upper");
      if (static_cast<Index>(lower.size()) != kInputCount ||
          static_cast<Index>(upper.size()) != kInputCount)
        throw InvalidInput("property box must cover all five inputs");
      for (Index i = 0; i < kInputCount; ++i) {
        if (!lower[static_cast<std::size_t>(i)].is_null())
          box.lower[static_cast<std::size_t>(i)] = lower[static_cast<std::size_t>(i)].get<double>();
        if (!upper[static_cast<std::size_t>(i)].is_null())
          box.upper[static_cast<std::size_t>(i)] = upper[static_cast<std::size_t>(i)].get<double>();
      }
      p.boxes.push_back(std::move(box));
    }
    p.desired = condition_from_json(j.at("desired"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad property object: ") + e.what());
  }
}

inline nlohmann::json properties_to_json(const std::vector<Property>& props) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : props) list.push_back(property_to_json(p));
  return {{"properties", std::move(list)}};
}

inline std::vector<Property> properties_from_json(const nlohmann::json& j) {
  std::vector<Property> props;
  try {
    for (const auto& p : j.at("properties")) props.push_back(property_from_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad property file: ") + e.what());
  }
  return props;
}

inline std::vector<Property> load_properties(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open property file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad JSON in '") + path + "': " + e.what());
  }
  return properties_from_json(j);
}

// --- locating benchmark networks on disk ------------------------------------

// Benchmark filenames carry the network's grid position as two adjacent
// integer tokens, e.g. ACASXU_run2a_2_9_batch_2000.nnet -> (2, 9).
inline std::optional<std::pair<int, int>> network_id_from_name(const std::string& filename) {
  const std::string stem = std::filesystem::path(filename).stem().string();
  std::vector<std::optional<int>> tokens;
  std::string token;
  const auto flush = [&] {
    if (token.empty()) return;
    bool numeric = true;
    for (char ch : token) numeric = numeric && std::isdigit(static_cast<unsigned char>(ch));
    tokens.push_back(numeric && token.size() <= 4 ? std::optional<int>(std::stoi(token))
                                                  : std::nullopt);
    token.clear();
  };
  for (char ch : stem) {
    if (ch == '_' || ch == '-' || ch == '.') {
      flush();
    } else {
      token.push_back(ch);
    }
  }
  flush();
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (!tokens[i] || !tokens[i + 1]) continue;
    const int x = *tokens[i], y = *tokens[i + 1];
    if (x >= 1 && x <= 5 && y >= 1 && y <= 9) return std::pair<int, int>{x, y};
  }
  return std::nullopt;
}

// Scans a directory for .nnet files whose names identify a grid position.
inline std::map<std::pair<int, int>, std::string> find_networks(const std::string& dir) {
  std::map<std::pair<int, int>, std::string> found;
  if (!std::filesystem::is_directory(dir)) return found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".nnet") continue;
    if (const auto id = network_id_from_name(entry.path().filename().string()))
      found.emplace(*id, entry.path().string());
  }
  return found;
}

// Manifest file format: {"networks": [{"x": 1, "y": 1, "path": "..."}]}.
// Paths are taken relative to the manifest's own directory.
inline std::map<std::pair<int, int>, std::string> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad JSON in '") + path + "': " + e.what());
  }
  std::map<std::pair<int, int>, std::string> found;
  const auto base = std::filesystem::path(path).parent_path();
  try {
    for (const auto& n : j.at("networks")) {
      std::filesystem::path net_path = n.at("path").get<std::string>();
      if (net_path.is_relative()) net_path = base / net_path;
      found.emplace(std::pair<int, int>{n.at("x").get<int>(), n.at("y").get<int>()},
                    net_path.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad manifest: ") + e.what());
  }
  return found;
}

}  // namespace relucert::acas
