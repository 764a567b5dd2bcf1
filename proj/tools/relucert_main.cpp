// Command line front end.
//
//   relucert verify   --net m.nnet --property phi1 [--splitter be] ...
//   relucert verify   --net m.json --spec problem.json ...
//   relucert compare  --net m.nnet --property phi2 ...   (be vs. iog)
//   relucert bounds   --net m.nnet --property phi1 [--box-index 0]
//   relucert acas     --nets-dir nets/ [--property phi3] ...
//
// Exit status: 0 when every requested verdict was reached (either way),
// 2 when any run was inconclusive (timeout, node budget, width floor),
// 1 on errors.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "relucert/relucert.hpp"

namespace {

using nlohmann::json;

// One verification problem in raw network coordinates.
struct Problem {
  std::string label;
  std::vector<relucert::InputBox> boxes;
  relucert::OutputSpec forbidden;
};

relucert::Vector to_vector(const json& j) {
  relucert::Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<relucert::Index>(i)) = j[i].get<double>();
  return v;
}

relucert::Matrix to_matrix(const json& j) {
  if (j.empty()) return relucert::Matrix(0, 0);
  relucert::Matrix m(j.size(), j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size())
      throw relucert::ParseError("matrix rows must have equal length");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<relucert::Index>(r), static_cast<relucert::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

// Raw problem file: box and forbidden set over network inputs/outputs,
// no normalization involved:
// {"box": {"lower": [...], "upper": [...]},
//  "forbidden": [{"a": [[...]], "b": [...]}, ...]}
Problem load_problem(const std::string& path, const relucert::ReluNetwork& net) {
  std::ifstream in(path);
  if (!in) throw relucert::InvalidInput("cannot open spec file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw relucert::ParseError(std::string("bad JSON in '") + path + "': " + e.what());
  }
  Problem problem;
  problem.label = path;
  try {
    problem.boxes.push_back(
        relucert::InputBox{to_vector(j.at("box").at("lower")), to_vector(j.at("box").at("upper"))});
    problem.forbidden.output_size = net.output_size();
    for (const auto& d : j.at("forbidden"))
      problem.forbidden.disjuncts.push_back(
          relucert::OutputDisjunct{to_matrix(d.at("a")), to_vector(d.at("b"))});
  } catch (const json::exception& e) {
    throw relucert::ParseError(std::string("bad spec file: ") + e.what());
  }
  problem.forbidden.validate();
  return problem;
}

// Property by name, from a property file if given, else the built-in set.
relucert::acas::Property find_property(const std::string& name,
                                       const std::string& properties_file) {
  const std::vector<relucert::acas::Property> props =
      properties_file.empty() ? relucert::acas::builtin_properties()
                              : relucert::acas::load_properties(properties_file);
  for (const auto& p : props)
    if (p.name == name) return p;
  throw relucert::InvalidInput("no property named '" + name + "'");
}

Problem compile_problem(const relucert::acas::Property& prop, const relucert::ReluNetwork& net) {
  relucert::acas::CompiledProperty compiled = relucert::acas::compile_property(prop, net);
  return Problem{compiled.name, std::move(compiled.boxes), std::move(compiled.forbidden)};
}

// Verdict over all of a problem's boxes, with per-box stats.
struct ProblemResult {
  relucert::Verdict verdict = relucert::Verdict::DoesNotIntersect;
  std::vector<relucert::RunStats> boxes;
};

ProblemResult run_problem(const relucert::ReluNetwork& net, const Problem& problem,
                          const relucert::VerifierOptions& options, bool verbose) {
  ProblemResult result;
  for (std::size_t i = 0; i < problem.boxes.size(); ++i) {
    relucert::RunStats stats = relucert::verify(net, problem.boxes[i], problem.forbidden, options);
    if (verbose)
      std::cerr << "  box " << i << ": " << to_string(stats.verdict) << ", " << stats.nodes
                << " boxes explored, " << std::fixed << std::setprecision(1)
                << stats.wall_seconds * 1000.0 << " ms, leaf depth " << std::setprecision(2)
                << stats.depth_mean() << " +/- " << stats.depth_std() << "\n";
    result.boxes.push_back(std::move(stats));
    if (result.boxes.back().verdict == relucert::Verdict::Intersects) {
      result.verdict = relucert::Verdict::Intersects;
      return result;  // one reachable forbidden point settles the problem
    }
    if (result.boxes.back().verdict == relucert::Verdict::Inconclusive)
      result.verdict = relucert::Verdict::Inconclusive;
  }
  return result;
}

json result_to_json(const ProblemResult& result) {
  json boxes = json::array();
  for (const auto& s : result.boxes) boxes.push_back(relucert::stats_to_json(s));
  std::uint64_t nodes = 0;
  double wall = 0.0;
  for (const auto& s : result.boxes) {
    nodes += s.nodes;
    wall += s.wall_seconds;
  }
  return json{{"verdict", to_string(result.verdict)},
              {"nodes", nodes},
              {"wall_ms", wall * 1000.0},
              {"boxes", std::move(boxes)}};
}

void write_histogram(const ProblemResult& result, const std::string& path) {
  std::vector<std::uint64_t> merged;
  for (const auto& s : result.boxes) {
    if (merged.size() < s.depth_histogram.size()) merged.resize(s.depth_histogram.size(), 0);
    for (std::size_t d = 0; d < s.depth_histogram.size(); ++d) merged[d] += s.depth_histogram[d];
  }
  std::ofstream out(path);
  if (!out) throw relucert::InvalidInput("cannot write histogram file '" + path + "'");
  out << "depth,leaves\n";
  for (std::size_t d = 0; d < merged.size(); ++d)
    if (merged[d] > 0) out << d << "," << merged[d] << "\n";
}

int exit_code(relucert::Verdict v) { return v == relucert::Verdict::Inconclusive ? 2 : 0; }

// Shared flags for the solver-driving subcommands.
struct CommonArgs {
  std::string net_path, property, properties_file, spec_path, out_path, histogram_path;
  std::string splitter = "be";
  double timeout_s = 0.0, width_floor = 0.0;
  std::uint64_t max_nodes = 0;
  bool early_counterexample = false, no_reduction = false, verbose = false;

  void attach(CLI::App& cmd, bool with_splitter = true) {
    cmd.add_option("--net", net_path, "network file (.nnet or .json)")->required();
    cmd.add_option("--property", property, "benchmark property name (e.g. phi1)");
    cmd.add_option("--properties-file", properties_file,
                   "property definitions to use instead of the built-in set");
    cmd.add_option("--spec", spec_path, "raw problem file (box + forbidden set)");
    if (with_splitter)
      cmd.add_option("--splitter", splitter, "split rule: be or iog")
          ->check(CLI::IsMember({"be", "iog"}));
    cmd.add_option("--timeout-s", timeout_s, "wall clock budget per box, seconds (0 = none)");
    cmd.add_option("--width-floor", width_floor, "close boxes whose axes are all this narrow");
    cmd.add_option("--max-nodes", max_nodes, "box budget per verification (0 = none)");
    cmd.add_flag("--early-counterexample", early_counterexample,
                 "also test each box center against the forbidden set");
    cmd.add_flag("--no-reduction", no_reduction, "keep stable nodes in the bound LPs");
    cmd.add_flag("-v,--verbose", verbose, "per-box progress on stderr");
  }

  relucert::ReluNetwork load_net() const { return relucert::load_network(net_path); }

  Problem load(const relucert::ReluNetwork& net) const {
    if (spec_path.empty() == property.empty())
      throw relucert::InvalidInput("give exactly one of --property or --spec");
    if (!spec_path.empty()) return load_problem(spec_path, net);
    return compile_problem(find_property(property, properties_file), net);
  }

  relucert::VerifierOptions options() const {
    relucert::VerifierOptions opt;
    opt.splitter = relucert::splitter_from_string(splitter);
    opt.timeout_seconds = timeout_s;
    opt.width_floor = width_floor;
    opt.max_nodes = max_nodes;
    opt.early_counterexample = early_counterexample;
    opt.use_reduction = !no_reduction;
    return opt;
  }
};

int cmd_verify(const CommonArgs& args) {
  const relucert::ReluNetwork net = args.load_net();
  const Problem problem = args.load(net);
  const ProblemResult result = run_problem(net, problem, args.options(), args.verbose);
  json report = result_to_json(result);
  report["problem"] = problem.label;
  report["net"] = args.net_path;
  report["splitter"] = args.splitter;
  if (!args.out_path.empty()) {
    std::ofstream out(args.out_path);
    if (!out) throw relucert::InvalidInput("cannot write '" + args.out_path + "'");
    out << report.dump(2) << "\n";
  }
  if (!args.histogram_path.empty()) write_histogram(result, args.histogram_path);
  std::cout << to_string(result.verdict) << "\n";
  for (const auto& s : result.boxes)
    if (s.witness) {
      std::cout << "witness:";
      for (relucert::Index i = 0; i < s.witness->size(); ++i) std::cout << " " << (*s.witness)(i);
      std::cout << "\n";
    }
  return exit_code(result.verdict);
}

int cmd_compare(const CommonArgs& args) {
  const relucert::ReluNetwork net = args.load_net();
  const Problem problem = args.load(net);
  json report{{"problem", problem.label}, {"net", args.net_path}};
  int worst = 0;
  for (const std::string splitter : {"be", "iog"}) {
    relucert::VerifierOptions opt = args.options();
    opt.splitter = relucert::splitter_from_string(splitter);
    const ProblemResult result = run_problem(net, problem, opt, args.verbose);
    std::uint64_t nodes = 0;
    double wall = 0.0;
    for (const auto& s : result.boxes) {
      nodes += s.nodes;
      wall += s.wall_seconds;
    }
    std::cout << splitter << ": " << to_string(result.verdict) << ", " << nodes << " boxes, "
              << std::fixed << std::setprecision(1) << wall * 1000.0 << " ms\n";
    report[splitter] = result_to_json(result);
    worst = std::max(worst, exit_code(result.verdict));
  }
  if (!args.out_path.empty()) {
    std::ofstream out(args.out_path);
    if (!out) throw relucert::InvalidInput("cannot write '" + args.out_path + "'");
    out << report.dump(2) << "\n";
  }
  return worst;
}

int cmd_bounds(const CommonArgs& args, std::size_t box_index) {
  const relucert::ReluNetwork net = args.load_net();
  const Problem problem = args.load(net);
  if (box_index >= problem.boxes.size())
    throw relucert::InvalidInput("box index out of range for this problem");
  relucert::RelaxationOptions opt;
  opt.reduce_stable = !args.no_reduction;
  const relucert::RelaxationResult result =
      relucert::compute_bounds(net, problem.boxes[box_index], opt);
  json report{{"net", args.net_path},
              {"problem", problem.label},
              {"box", box_index},
              {"exact", relucert::is_exact(result.bounds)},
              {"bounds", relucert::bounds_to_json(result.bounds)}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_acas(const std::string& nets_dir, const std::string& manifest_path,
             const std::string& property_filter, const std::string& properties_file,
             const CommonArgs& args) {
  std::map<std::pair<int, int>, std::string> nets;
  if (!manifest_path.empty()) {
    nets = relucert::acas::load_manifest(manifest_path);
  } else if (!nets_dir.empty()) {
    nets = relucert::acas::find_networks(nets_dir);
  } else {
    throw relucert::InvalidInput("give --nets-dir or --nets-manifest");
  }
  if (nets.empty()) throw relucert::InvalidInput("no benchmark networks found");

  std::vector<relucert::acas::Property> props = properties_file.empty()
                                                    ? relucert::acas::builtin_properties()
                                                    : relucert::acas::load_properties(properties_file);
  if (!property_filter.empty()) {
    std::vector<relucert::acas::Property> kept;
    for (auto& p : props)
      if (p.name == property_filter) kept.push_back(std::move(p));
    if (kept.empty()) throw relucert::InvalidInput("no property named '" + property_filter + "'");
    props = std::move(kept);
  }

  std::ofstream out;
  if (!args.out_path.empty()) {
    out.open(args.out_path);
    if (!out) throw relucert::InvalidInput("cannot write '" + args.out_path + "'");
    out << "property,network,verdict,nodes,wall_ms,depth_mean,depth_std\n";
  }

  int worst = 0;
  for (const auto& prop : props) {
    for (const auto& [id, path] : nets) {
      if (!prop.applies_to(id)) continue;
      const relucert::ReluNetwork net = relucert::load_nnet(path);
      const Problem problem = compile_problem(prop, net);
      const ProblemResult result = run_problem(net, problem, args.options(), args.verbose);
      std::uint64_t nodes = 0;
      double wall = 0.0, mean = 0.0, stdev = 0.0;
      std::vector<std::uint64_t> merged;
      for (const auto& s : result.boxes) {
        nodes += s.nodes;
        wall += s.wall_seconds;
        if (merged.size() < s.depth_histogram.size()) merged.resize(s.depth_histogram.size(), 0);
        for (std::size_t d = 0; d < s.depth_histogram.size(); ++d)
          merged[d] += s.depth_histogram[d];
      }
      relucert::RunStats summary;
      summary.depth_histogram = merged;
      mean = summary.depth_mean();
      stdev = summary.depth_std();
      std::cout << prop.name << " N" << id.first << "," << id.second << ": "
                << to_string(result.verdict) << " (" << nodes << " boxes, " << std::fixed
                << std::setprecision(1) << wall * 1000.0 << " ms)\n";
      if (out.is_open())
        out << prop.name << "," << id.first << "_" << id.second << ","
            << to_string(result.verdict) << "," << nodes << "," << wall * 1000.0 << "," << mean
            << "," << stdev << "\n";
      worst = std::max(worst, exit_code(result.verdict));
    }
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LP-based reachability checks for feedforward ReLU networks"};
  app.require_subcommand(1);

  CommonArgs verify_args, compare_args, bounds_args;
  std::size_t box_index = 0;

  CLI::App* verify = app.add_subcommand("verify", "decide one network against one property");
  verify_args.attach(*verify);
  verify->add_option("--out", verify_args.out_path, "write the run report as JSON");
  verify->add_option("--histogram-out", verify_args.histogram_path,
                     "write the leaf depth histogram as CSV");

  CLI::App* compare = app.add_subcommand("compare", "run both split rules on the same problem");
  compare_args.attach(*compare, /*with_splitter=*/false);
  compare->add_option("--out", compare_args.out_path, "write both run reports as JSON");

  CLI::App* bounds = app.add_subcommand("bounds", "print the relaxed node bounds for one box");
  bounds_args.attach(*bounds, /*with_splitter=*/false);
  bounds->add_option("--box-index", box_index, "which of the property's boxes to relax");

  std::string nets_dir, manifest_path, acas_property, acas_properties_file;
  CommonArgs acas_args;
  CLI::App* acas = app.add_subcommand("acas", "run benchmark properties over a set of networks");
  acas->add_option("--nets-dir", nets_dir, "directory of benchmark .nnet files");
  acas->add_option("--nets-manifest", manifest_path, "manifest naming the benchmark networks");
  acas->add_option("--property", acas_property, "run a single property (default: all)");
  acas->add_option("--properties-file", acas_properties_file,
                   "property definitions to use instead of the built-in set");
  acas->add_option("--splitter", acas_args.splitter, "split rule: be or iog")
      ->check(CLI::IsMember({"be", "iog"}));
  acas->add_option("--timeout-s", acas_args.timeout_s, "wall clock budget per box, seconds");
  acas->add_option("--width-floor", acas_args.width_floor,
                   "close boxes whose axes are all this narrow");
  acas->add_option("--max-nodes", acas_args.max_nodes, "box budget per verification");
  acas->add_flag("--early-counterexample", acas_args.early_counterexample,
                 "also test each box center against the forbidden set");
  acas->add_flag("--no-reduction", acas_args.no_reduction, "keep stable nodes in the bound LPs");
  acas->add_option("--out", acas_args.out_path, "write one CSV row per property/network pair");
  acas->add_flag("-v,--verbose", acas_args.verbose, "per-box progress on stderr");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(verify_args);
    if (compare->parsed()) return cmd_compare(compare_args);
    if (bounds->parsed()) return cmd_bounds(bounds_args, box_index);
    if (acas->parsed())
      return cmd_acas(nets_dir, manifest_path, acas_property, acas_properties_file, acas_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
