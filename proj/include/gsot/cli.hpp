#pragma once

// Command-line front end with one subcommand per solver. Every run prints a
// one-line JSON summary on stdout. A failed run exits with 1 for invalid
// input or a numerical failure, and with 2 for no convergence under --strict.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gsot/barycenter.hpp"
#include "gsot/io.hpp"
#include "gsot/lp_oracle.hpp"
#include "gsot/transport.hpp"

namespace gsot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNotConverged = 2;

struct RegularizerFlags {
  std::string kind;
  double lambda = 0.0;
  std::optional<double> qtilde;

  RegularizerSpec build() const {
    if (kind == "entropic") return RegularizerSpec::entropic(lambda);
    if (kind == "quadratic") return RegularizerSpec::quadratic(lambda);
    if (!qtilde) throw Error(ErrorKind::InvalidInput, "--reg tsallis requires --qtilde");
    return RegularizerSpec::tsallis(lambda, *qtilde);
  }
};

struct TransportFlags {
  RegularizerFlags reg;
  std::string cost, source, target, out, trace;
  double tol = 1e-9;
  int max_iters = 10000;
  bool log_domain = false;
  bool strict = false;
};

struct BarycenterFlags {
  RegularizerFlags reg;
  std::vector<std::string> inputs;
  std::vector<double> weights;
  int iters = 0;
  std::string out, trace, cost;
  bool invert = false;
  bool log_domain = false;
  std::string grid_scale = "unit";
  std::string metric = "sqeuclidean";
};

struct OracleFlags {
  std::string cost, source, target, out;
};

namespace detail {

inline std::string json_or_na(const std::optional<double>& x) {
  return x && std::isfinite(*x) ? format_number(*x) : "\"n/a\"";
}

inline void add_regularizer_flags(CLI::App* cmd, RegularizerFlags& f) {
  cmd->add_option("--reg", f.kind, "regularizer")->required()->check(CLI::IsMember({"entropic", "quadratic", "tsallis"}));
  cmd->add_option("--lambda", f.lambda, "regularization strength")->required();
  cmd->add_option("--qtilde", f.qtilde, "Tsallis index (tsallis only)");
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  for (auto& ch : tail) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return tail == suffix;
}

inline bool is_pgm_path(const std::string& path) { return has_suffix(path, ".pgm"); }

}  // namespace detail

inline int cmd_transport(const TransportFlags& f, std::ostream& out) {
  const auto reg = f.reg.build();
  const auto cost = read_cost_csv(read_file(f.cost));
  const auto p = read_histogram_csv(read_file(f.source));
  const auto q = read_histogram_csv(read_file(f.target));
  SolverConfig cfg;
  cfg.tol = f.tol;
  cfg.max_iters = f.max_iters;
  cfg.log_domain = f.log_domain;
  cfg.strict = false;  // reported below, after the outputs are written
  cfg.validate();
  const auto result = solve_transport(reg, cost, p, q, cfg);
  write_file(f.out, write_matrix_csv(result.plan));
  if (!f.trace.empty()) write_file(f.trace, write_trace_json(result.trace));
  const auto& last = result.trace.back();
  out << "{\"value\":" << format_number(last.primal) << ",\"dual\":" << detail::json_or_na(last.dual)
      << ",\"iterations\":" << result.iterations << ",\"converged\":" << (result.converged ? "true" : "false")
      << ",\"row_err\":" << format_number(last.row_err) << ",\"col_err\":" << format_number(last.col_err) << "}\n";
  return (f.strict && !result.converged) ? kExitNotConverged : kExitOk;
}

inline int cmd_barycenter(const BarycenterFlags& f, std::ostream& out) {
  const auto reg = f.reg.build();
  if (f.inputs.empty()) throw Error(ErrorKind::InvalidInput, "--inputs is empty");
  const bool pgm = detail::is_pgm_path(f.inputs.front());
  for (const auto& path : f.inputs) {
    if (detail::is_pgm_path(path) != pgm) throw Error(ErrorKind::InvalidInput, "--inputs mixes PGM and CSV files");
  }
  if (f.iters < 1) throw Error(ErrorKind::InvalidInput, "--iters must be >= 1");

  std::vector<Histogram> inputs;
  GridSpec grid;
  int maxval = 255;
  for (const auto& path : f.inputs) {
    if (pgm) {
      auto img = read_pgm(read_file(path), f.invert);
      if (!inputs.empty() && (img.grid.height != grid.height || img.grid.width != grid.width)) {
        throw Error(ErrorKind::InvalidInput, "input images differ in size");
      }
      grid.height = img.grid.height;
      grid.width = img.grid.width;
      if (inputs.empty()) maxval = img.maxval;
      inputs.push_back(std::move(img.histogram));
    } else {
      inputs.push_back(read_histogram_csv(read_file(path)));
    }
  }
  const BarycenterProblem problem(std::move(inputs),
                                  Eigen::Map<const Vector>(f.weights.data(), static_cast<Index>(f.weights.size())));

  CostMatrix cost;
  if (!f.cost.empty()) {
    cost = read_cost_csv(read_file(f.cost));
  } else if (pgm) {
    grid.scale = f.grid_scale == "pixel" ? GridScale::Pixel : GridScale::UnitSquare;
    grid.metric = f.metric == "euclidean" ? GridMetric::Euclidean : GridMetric::SquaredEuclidean;
    cost = grid_cost(grid);
  } else {
    throw Error(ErrorKind::InvalidInput, "CSV inputs need --cost");
  }

  BarycenterOptions opts;
  opts.solver.max_iters = f.iters;
  opts.fixed_iterations = true;
  const auto result = (reg.is_entropic() && !f.log_domain)
                          ? entropic_barycenter(gibbs_kernel(cost, reg.lambda()), problem, opts)
                          : generalized_barycenter(reg, cost, problem, opts);

  if (pgm) {
    write_file(f.out, write_pgm(result.barycenter, grid, maxval, f.invert));
  } else {
    write_file(f.out, write_histogram_csv(result.barycenter));
  }
  if (!f.trace.empty()) write_file(f.trace, write_barycenter_trace_json(result.trace));

  double value = 0.0;
  for (std::size_t k = 0; k < result.plans.size(); ++k) {
    value += problem.weights()[static_cast<Index>(k)] * potential(reg, cost, result.plans[k]);
  }
  const auto& last = result.trace.back();
  out << "{\"value\":" << format_number(value) << ",\"dual\":\"n/a\",\"iterations\":" << result.iterations
      << ",\"row_err\":" << format_number(last.row_err) << ",\"col_err\":" << format_number(last.consensus_err)
      << "}\n";
  return kExitOk;
}

inline int cmd_oracle(const OracleFlags& f, std::ostream& out) {
  const auto cost = read_cost_csv(read_file(f.cost));
  const auto p = read_histogram_csv(read_file(f.source));
  const auto q = read_histogram_csv(read_file(f.target));
  const auto sol = exact_transport(cost, p, q);
  if (!f.out.empty()) write_file(f.out, write_matrix_csv(sol.plan));
  out << "{\"value\":" << format_number(sol.value) << ",\"nonzeros\":" << sol.nonzeros << "}\n";
  return kExitOk;
}

/// Parses argv and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Regularized optimal transport and barycenters"};
  app.require_subcommand(1);

  TransportFlags tf;
  auto* transport = app.add_subcommand("transport", "solve a regularized transport problem");
  detail::add_regularizer_flags(transport, tf.reg);
  transport->add_option("--cost", tf.cost, "cost matrix CSV")->required();
  transport->add_option("--source", tf.source, "source histogram CSV")->required();
  transport->add_option("--target", tf.target, "target histogram CSV")->required();
  transport->add_option("--out", tf.out, "plan CSV to write")->required();
  transport->add_option("--trace", tf.trace, "trace JSON to write");
  transport->add_option("--tol", tf.tol, "L1 marginal tolerance");
  transport->add_option("--max-iters", tf.max_iters, "iteration cap");
  transport->add_flag("--log-domain", tf.log_domain, "log-domain entropic updates");
  transport->add_flag("--strict", tf.strict, "exit 2 unless converged");

  BarycenterFlags bf;
  auto* barycenter = app.add_subcommand("barycenter", "compute a regularized barycenter");
  detail::add_regularizer_flags(barycenter, bf.reg);
  barycenter->add_option("--inputs", bf.inputs, "input histograms (CSV or PGM)")->required()->delimiter(',');
  barycenter->add_option("--weights", bf.weights, "barycentric weights")->required()->delimiter(',');
  barycenter->add_option("--iters", bf.iters, "number of sweeps")->required();
  barycenter->add_option("--out", bf.out, "barycenter file to write")->required();
  barycenter->add_option("--trace", bf.trace, "trace JSON to write");
  barycenter->add_option("--cost", bf.cost, "cost matrix CSV (default: pixel grid for PGM inputs)");
  barycenter->add_flag("--invert", bf.invert, "white pixels carry zero mass");
  barycenter->add_flag("--log-domain", bf.log_domain, "entropic: log-domain potential updates");
  barycenter->add_option("--grid-scale", bf.grid_scale, "pixel coordinates: unit or pixel")
      ->check(CLI::IsMember({"unit", "pixel"}));
  barycenter->add_option("--metric", bf.metric, "grid metric")->check(CLI::IsMember({"sqeuclidean", "euclidean"}));

  OracleFlags of;
  auto* oracle = app.add_subcommand("oracle", "exact unregularized transport");
  oracle->add_option("--cost", of.cost, "cost matrix CSV")->required();
  oracle->add_option("--source", of.source, "source histogram CSV")->required();
  oracle->add_option("--target", of.target, "target histogram CSV")->required();
  oracle->add_option("--out", of.out, "plan CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*transport) return cmd_transport(tf, out);
    if (*barycenter) return cmd_barycenter(bf, out);
    return cmd_oracle(of, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::NotConverged ? kExitNotConverged : kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace gsot::cli
