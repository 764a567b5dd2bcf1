#pragma once

#include <cctype>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relucert/errors.hpp"
#include "relucert/network.hpp"

// Readers and writers for the two network file formats we speak:
//
//  * .nnet — the plain-text format used by the ACAS Xu release: leading "//"
//    comment lines, then comma-separated header lines (layer counts, layer
//    sizes, a deprecated flag, input mins/maxes, normalization means/ranges),
//    then weight rows and bias rows per layer.
//  * .json — a small structured format for hand-written test networks:
//    {"weights": [[[...]]], "biases": [[...]], "normalization": {...}?}.

namespace relucert {

namespace detail {

// Pulls comma-separated numbers out of .nnet lines. The canonical files end
// every line with a trailing comma, which we tolerate, as well as blank
// fields and stray whitespace.
inline std::vector<double> split_numbers(const std::string& line, long line_no) {
  std::vector<double> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    std::size_t a = field.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    std::size_t b = field.find_last_not_of(" \t\r");
    const std::string token = field.substr(a, b - a + 1);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ParseError("expected a number, got \"" + token + "\"", line_no);
    }
  }
  return out;
}

class NnetLineReader {
 public:
  explicit NnetLineReader(std::istream& in) : in_(in) {}

  // Next line that carries data: comments ("//...") and blank lines skipped.
  std::vector<double> next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::size_t a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos) continue;
      if (line.compare(a, 2, "//") == 0) continue;
      std::vector<double> values = split_numbers(line, line_no_);
      if (!values.empty()) return values;
    }
    throw ParseError(std::string("file ended while reading ") + what, line_no_);
  }

  long line() const { return line_no_; }

 private:
  std::istream& in_;
  long line_no_ = 0;
};

inline Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Index>(v.size()));
  for (Index i = 0; i < out.size(); ++i) out(i) = v[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace detail

inline ReluNetwork read_nnet(std::istream& in) {
  detail::NnetLineReader reader(in);

  std::vector<double> header = reader.next("the layer-count header");
  if (header.size() < 4)
    throw ParseError("header needs numLayers, inputSize, outputSize, maxLayerSize", reader.line());
  const Index n_weight_layers = static_cast<Index>(header[0]);
  const Index input_size = static_cast<Index>(header[1]);
  const Index output_size = static_cast<Index>(header[2]);
  if (n_weight_layers < 1 || input_size < 1 || output_size < 1)
    throw ParseError("header layer counts must be positive", reader.line());

  std::vector<double> sizes_line = reader.next("the layer-size list");
  if (static_cast<Index>(sizes_line.size()) != n_weight_layers + 1)
    throw ParseError("expected " + std::to_string(n_weight_layers + 1) + " layer sizes", reader.line());
  std::vector<Index> sizes;
  for (double s : sizes_line) {
    if (s < 1) throw ParseError("layer sizes must be positive", reader.line());
    sizes.push_back(static_cast<Index>(s));
  }
  if (sizes.front() != input_size || sizes.back() != output_size)
    throw ParseError("layer-size list disagrees with the header", reader.line());

  reader.next("the deprecated flag line");
  Vector in_min = detail::to_vector(reader.next("input minimums"));
  Vector in_max = detail::to_vector(reader.next("input maximums"));
  Vector means = detail::to_vector(reader.next("normalization means"));
  Vector ranges = detail::to_vector(reader.next("normalization ranges"));
  if (in_min.size() != input_size || in_max.size() != input_size)
    throw ParseError("input min/max lines must have one entry per input", reader.line());
  if (means.size() != input_size + 1 || ranges.size() != input_size + 1)
    throw ParseError("means/ranges lines must have inputSize+1 entries", reader.line());

  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (Index w = 0; w < n_weight_layers; ++w) {
    Matrix W(sizes[static_cast<std::size_t>(w) + 1], sizes[static_cast<std::size_t>(w)]);
    for (Index r = 0; r < W.rows(); ++r) {
      std::vector<double> row = reader.next("a weight row");
      if (static_cast<Index>(row.size()) != W.cols())
        throw ParseError("weight row " + std::to_string(r) + " of layer " + std::to_string(w) +
                             " has " + std::to_string(row.size()) + " entries, expected " +
                             std::to_string(W.cols()),
                         reader.line());
      W.row(r) = detail::to_vector(row).transpose();
    }
    Vector b(W.rows());
    for (Index r = 0; r < b.size(); ++r) {
      std::vector<double> row = reader.next("a bias entry");
      if (row.size() != 1)
        throw ParseError("bias row " + std::to_string(r) + " of layer " + std::to_string(w) +
                             " must hold exactly one entry",
                         reader.line());
      b(r) = row[0];
    }
    weights.push_back(std::move(W));
    biases.push_back(std::move(b));
  }

  ReluNetwork net(std::move(weights), std::move(biases));
  Normalization norm;
  norm.input_min = std::move(in_min);
  norm.input_max = std::move(in_max);
  norm.input_mean = means.head(input_size);
  norm.input_range = ranges.head(input_size);
  norm.output_mean = means(input_size);
  norm.output_range = ranges(input_size);
  net.set_normalization(std::move(norm));
  return net;
}

inline ReluNetwork load_nnet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open network file: " + path);
  return read_nnet(in);
}

inline void write_nnet(const ReluNetwork& net, std::ostream& out) {
  if (!net.normalization())
    throw InvalidInput("write_nnet needs a network with normalization metadata");
  const Normalization& norm = *net.normalization();
  out << std::setprecision(std::numeric_limits<double>::max_digits10);

  auto csv = [&out](auto&& values) {
    for (Index i = 0; i < values.size(); ++i) out << values(i) << ",";
    out << "\n";
  };

  out << "// network export\n";
  out << net.weight_layer_count() << "," << net.input_size() << "," << net.output_size() << ","
      << [&] {
           Index m = 0;
           for (Index l = 0; l < net.layer_count(); ++l) m = std::max(m, net.width(l));
           return m;
         }()
      << ",\n";
  for (Index l = 0; l < net.layer_count(); ++l) out << net.width(l) << ",";
  out << "\n0,\n";
  csv(norm.input_min);
  csv(norm.input_max);
  Vector means(net.input_size() + 1), ranges(net.input_size() + 1);
  means << norm.input_mean, norm.output_mean;
  ranges << norm.input_range, norm.output_range;
  csv(means);
  csv(ranges);
  for (Index w = 0; w < net.weight_layer_count(); ++w) {
    for (Index r = 0; r < net.weight(w).rows(); ++r) csv(net.weight(w).row(r));
    for (Index r = 0; r < net.bias(w).size(); ++r) out << net.bias(w)(r) << ",\n";
  }
}

inline void save_nnet(const ReluNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write network file: " + path);
  write_nnet(net, out);
}

inline ReluNetwork network_from_json(const nlohmann::json& j) {
  try {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    for (const auto& wj : j.at("weights")) {
      Matrix W(static_cast<Index>(wj.size()), static_cast<Index>(wj.at(0).size()));
      for (Index r = 0; r < W.rows(); ++r)
        for (Index c = 0; c < W.cols(); ++c) W(r, c) = wj.at(r).at(c).get<double>();
      weights.push_back(std::move(W));
    }
    for (const auto& bj : j.at("biases")) {
      Vector b(static_cast<Index>(bj.size()));
      for (Index r = 0; r < b.size(); ++r) b(r) = bj.at(r).get<double>();
      biases.push_back(std::move(b));
    }
    ReluNetwork net(std::move(weights), std::move(biases));
    if (j.contains("normalization")) {
      const auto& nj = j.at("normalization");
      auto vec = [](const nlohmann::json& a) {
        Vector v(static_cast<Index>(a.size()));
        for (Index i = 0; i < v.size(); ++i) v(i) = a.at(i).get<double>();
        return v;
      };
      Normalization norm;
      norm.input_min = vec(nj.at("input_min"));
      norm.input_max = vec(nj.at("input_max"));
      norm.input_mean = vec(nj.at("input_mean"));
      norm.input_range = vec(nj.at("input_range"));
      norm.output_mean = nj.at("output_mean").get<double>();
      norm.output_range = nj.at("output_range").get<double>();
      net.set_normalization(std::move(norm));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad network JSON: ") + e.what());
  }
}

inline nlohmann::json network_to_json(const ReluNetwork& net) {
  nlohmann::json j;
  for (Index w = 0; w < net.weight_layer_count(); ++w) {
    nlohmann::json wj = nlohmann::json::array();
    for (Index r = 0; r < net.weight(w).rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < net.weight(w).cols(); ++c) row.push_back(net.weight(w)(r, c));
      wj.push_back(std::move(row));
    }
    j["weights"].push_back(std::move(wj));
    nlohmann::json bj = nlohmann::json::array();
    for (Index r = 0; r < net.bias(w).size(); ++r) bj.push_back(net.bias(w)(r));
    j["biases"].push_back(std::move(bj));
  }
  if (net.normalization()) {
    const Normalization& n = *net.normalization();
    auto arr = [](const Vector& v) {
      nlohmann::json a = nlohmann::json::array();
      for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
      return a;
    };
    j["normalization"] = {{"input_min", arr(n.input_min)},   {"input_max", arr(n.input_max)},
                          {"input_mean", arr(n.input_mean)}, {"input_range", arr(n.input_range)},
                          {"output_mean", n.output_mean},    {"output_range", n.output_range}};
  }
  return j;
}

// Loads a network from either supported format, picked by file extension.
inline ReluNetwork load_network(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open network file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad JSON in ") + path + ": " + e.what());
    }
    return network_from_json(j);
  }
  return load_nnet(path);
}

}  // namespace relucert
