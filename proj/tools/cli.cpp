#include "cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "otsns/baselines.hpp"
#include "otsns/problems.hpp"
#include "otsns/trace_csv.hpp"

namespace otsns::cli {

namespace {

using nlohmann::json;

struct SolverFlags {
  int n1 = 20;
  int n2 = 100;
  std::string sparsity = "2/n";
  double stop_kl = 1e-25;
  double stop_l1 = 1e-12;
  double cg_tol = 1e-10;
  int cg_max_iters = 0;  // 0: library default
  double c1 = 1e-4;
  double shrink = 0.5;
  int backtracks = 40;
  bool plain = false;
  bool jacobi = false;
  bool dynamic_switch = false;
  int max_iters = 1'000'000;
  int lbfgs_memory = 10;

  void attach(CLI::App& app) {
    app.add_option("--n1", n1, "Sinkhorn warm-up iterations")->capture_default_str();
    app.add_option("--n2", n2, "Maximum second-stage iterations")->capture_default_str();
    app.add_option("--target-sparsity", sparsity, "Kept fraction lambda, e.g. 0.02 or 2/n")
        ->capture_default_str();
    app.add_option("--stop-kl", stop_kl, "Stop when marginal KL falls to this")
        ->capture_default_str();
    app.add_option("--stop-l1", stop_l1, "Stop when l1 marginal error falls to this (0 = off)")
        ->capture_default_str();
    app.add_option("--cg-tol", cg_tol, "CG relative residual tolerance")->capture_default_str();
    app.add_option("--cg-max-iters", cg_max_iters, "CG iteration cap (0 = 1000)")
        ->capture_default_str();
    app.add_option("--armijo-c1", c1)->capture_default_str();
    app.add_option("--armijo-shrink", shrink)->capture_default_str();
    app.add_option("--armijo-max-backtracks", backtracks)->capture_default_str();
    app.add_flag("--plain", plain, "Plain potential with a Tikhonov shift instead of the rank-1 term");
    app.add_flag("--jacobi", jacobi, "Jacobi-preconditioned CG");
    app.add_flag("--dynamic-switch", dynamic_switch, "Leave Sinkhorn early on stagnation/sparsity");
    app.add_option("--max-iters", max_iters, "Iteration cap for Sinkhorn-only runs")
        ->capture_default_str();
    app.add_option("--lbfgs-memory", lbfgs_memory)->capture_default_str();
  }

  SolverConfig config(std::size_t n) const {
    SolverConfig c = SolverConfig::defaults_for(n);
    c.n1 = n1;
    c.n2 = n2;
    c.target_sparsity = parse_sparsity(sparsity, n);
    c.stop_marginal_kl = stop_kl;
    c.stop_l1_error = stop_l1;
    c.cg_rel_tol = cg_tol;
    if (cg_max_iters > 0) c.cg_max_iters = cg_max_iters;
    c.armijo_c1 = c1;
    c.armijo_shrink = shrink;
    c.armijo_max_backtracks = backtracks;
    c.augmented = !plain;
    c.jacobi = jacobi;
    c.dynamic_switch = dynamic_switch;
    validate(c, n);
    return c;
  }

  SolveOptions options() const {
    if (lbfgs_memory < 1) throw ValidationError("--lbfgs-memory must be at least 1");
    if (max_iters < 0) throw ValidationError("--max-iters must be non-negative");
    return {max_iters, lbfgs_memory};
  }
};

json config_json(const SolverConfig& c, const SolveOptions& o, std::string_view sparsity_text) {
  return {
      {"n1", c.n1},
      {"n2", c.n2},
      {"target_sparsity", c.target_sparsity},
      {"target_sparsity_text", sparsity_text},
      {"cg_rel_tol", c.cg_rel_tol},
      {"cg_max_iters", c.cg_max_iters},
      {"armijo_c1", c.armijo_c1},
      {"armijo_shrink", c.armijo_shrink},
      {"armijo_max_backtracks", c.armijo_max_backtracks},
      {"stop_marginal_kl", c.stop_marginal_kl},
      {"stop_l1_error", c.stop_l1_error},
      {"augmented", c.augmented},
      {"jacobi", c.jacobi},
      {"dynamic_switch", c.dynamic_switch},
      {"sinkhorn_max_iters", o.sinkhorn_max_iters},
      {"lbfgs_memory", o.lbfgs_memory},
  };
}

std::string_view second_stage_name(Method m) {
  switch (m) {
    case Method::sns: return "newton";
    case Method::dense_newton: return "dense_newton";
    case Method::lbfgs: return "lbfgs";
    case Method::sinkhorn: break;
  }
  return "";
}

Method require_method(std::string_view name) {
  const auto m = parse_method(name);
  if (!m) {
    throw ValidationError("unknown solver '" + std::string(name) +
                          "' (expected sinkhorn, sns, newton-dense or lbfgs)");
  }
  return *m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::filesystem::path default_report_path(const std::filesystem::path& problem) {
  std::string name = problem.filename().string();
  if (name.ends_with(".otp.json")) name.resize(name.size() - 9);
  return problem.parent_path() / (name + ".report.json");
}

int cmd_gen(const std::string& kind, std::size_t n, std::uint64_t seed, double eta,
            const std::string& img_a, const std::string& img_b, const std::string& metric,
            double smoothing, const std::string& out_path, std::ostream& out) {
  Problem p;
  ProblemMetadata meta;
  if (kind == "random-assignment" || kind == "rank-one") {
    if (n == 0) throw CLI::ValidationError("--n", "required (>= 1) for kind " + kind);
    p = kind == "rank-one" ? gen_rank_one(n, seed) : gen_random_assignment(n, seed);
    meta["seed"] = static_cast<double>(seed);
  } else if (kind == "image-pair") {
    if (img_a.empty() || img_b.empty()) {
      throw CLI::ValidationError("--img-a/--img-b", "required for kind image-pair");
    }
    p = image_pair_problem(load_image(img_a), load_image(img_b), parse_grid_metric(metric),
                           smoothing, eta);
    meta["smoothing_eps"] = smoothing;
  } else {
    throw CLI::ValidationError("--kind", "unknown kind '" + kind + "'");
  }
  p.eta = eta;
  save_problem(p, out_path, meta);
  out << "wrote " << out_path << " (n = " << p.size() << ")\n";
  return kOk;
}

int cmd_solve(const std::string& problem_path, const std::string& solver, const SolverFlags& flags,
              std::string trace_path, std::string report_path, std::string duals_path,
              std::ostream& out) {
  const Problem problem = load_problem(problem_path);
  const ProblemMetadata meta = load_problem_metadata(problem_path);
  const Method method = require_method(solver);
  const SolverConfig config = flags.config(problem.size());
  const SolveOptions options = flags.options();

  if (report_path.empty()) report_path = default_report_path(problem_path).string();
  if (trace_path.empty()) {
    trace_path = report_path;
    if (trace_path.ends_with(".json")) trace_path.resize(trace_path.size() - 5);
    trace_path += ".trace.csv";
  }
  if (duals_path.empty()) {
    duals_path = report_path;
    if (duals_path.ends_with(".json")) duals_path.resize(duals_path.size() - 5);
    duals_path += ".duals.json";
  }

  CsvTraceWriter trace(trace_path);
  const SolveResult result = solve(problem, method, config, options, trace);
  const LogPlan plan = make_log_plan(problem, result.duals);

  write_text(duals_path, json{{"x", result.duals.x}, {"y", result.duals.y}}.dump() + "\n");

  json stages;
  stages["sinkhorn"] = {{"iterations", result.sinkhorn.iterations},
                        {"seconds", result.sinkhorn.seconds}};
  if (method != Method::sinkhorn) {
    stages[std::string(second_stage_name(method))] = {{"iterations", result.second.iterations},
                                                      {"seconds", result.second.seconds},
                                                      {"fallbacks", result.fallbacks}};
  }
  json report = {
      {"problem", problem_path},
      {"n", problem.size()},
      {"eta", problem.eta},
      {"solver", to_string(method)},
      {"config", config_json(config, options, flags.sparsity)},
      {"problem_metadata", meta},
      {"stages", stages},
      {"total_iterations", result.total_iterations()},
      {"converged", result.converged},
      {"transport_cost", transport_cost(plan, problem)},
      {"marginal_kl", result.marginal_kl},
      {"l1_marginal_error", result.l1_error},
      {"trace_path", trace_path},
      {"duals_path", duals_path},
  };
  write_text(report_path, report.dump(2) + "\n");
  out << to_string(method) << ": " << result.total_iterations() << " iterations, marginal_kl "
      << result.marginal_kl << (result.converged ? "" : " (not converged)") << "\n";
  return kOk;
}

template <class T>
std::vector<T> split_list(const std::string& text, const std::string& flag) {
  std::vector<T> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) {
      items.push_back(item);
    } else {
      T v{};
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || end != item.data() + item.size()) {
        throw CLI::ValidationError(flag, "cannot parse '" + item + "'");
      }
      items.push_back(v);
    }
  }
  if (items.empty()) throw CLI::ValidationError(flag, "empty list");
  return items;
}

int cmd_bench(const std::string& problem_path, const std::string& solvers_text,
              const std::string& etas_text, const SolverFlags& flags, const std::string& out_path,
              std::ostream& out, std::ostream& err) {
  const Problem base = load_problem(problem_path);
  std::vector<Method> methods;
  for (const auto& name : split_list<std::string>(solvers_text, "--solvers")) {
    methods.push_back(require_method(name));
  }
  const std::vector<double> etas =
      etas_text.empty() ? std::vector<double>{base.eta} : split_list<double>(etas_text, "--etas");
  const SolverConfig config = flags.config(base.size());
  const SolveOptions options = flags.options();

  std::ofstream file;
  std::ostream* sink = &out;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw IoError("cannot write " + out_path);
    sink = &file;
  }
  *sink << "solver,eta,total_seconds,total_iterations,newton_iterations,final_marginal_kl,status\n";
  for (double eta : etas) {
    Problem p = base;
    p.eta = eta;
    for (Method m : methods) {
      NullTrace none;
      std::ostringstream row;
      row.precision(17);
      try {
        const Stopwatch clock;
        const SolveResult r = solve(p, m, config, options, none);
        row << to_string(m) << ',' << eta << ',' << clock.seconds() << ','
            << r.total_iterations() << ',' << r.second.iterations << ',' << r.marginal_kl << ','
            << (r.converged ? "ok" : "unconverged");
      } catch (const Error& e) {
        err << "bench: " << to_string(m) << " at eta " << eta << " failed: " << e.what() << "\n";
        row << to_string(m) << ',' << eta << ",,,,,failed";
      }
      *sink << row.str() << '\n' << std::flush;
    }
  }
  return kOk;
}

}  // namespace

double parse_sparsity(std::string_view text, std::size_t n) {
  double numerator = 0.0;
  std::string_view rest = text;
  if (text.ends_with("/n")) rest = text.substr(0, text.size() - 2);
  const auto [end, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), numerator);
  if (ec != std::errc() || end != rest.data() + rest.size() || !(numerator > 0.0)) {
    throw ValidationError("cannot parse target sparsity '" + std::string(text) + "'");
  }
  return text.ends_with("/n") ? numerator / static_cast<double>(n) : numerator;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropic optimal transport by Sinkhorn-Newton-Sparse"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a problem file");
  std::string kind, img_a, img_b, metric = "l2sq", gen_out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double eta = 1.0, smoothing = 1e-6;
  gen->add_option("--kind", kind, "random-assignment | rank-one | image-pair")->required();
  gen->add_option("--n", n, "Problem size");
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--eta", eta)->capture_default_str();
  gen->add_option("--img-a", img_a, "Source image (.pgm or .csv)");
  gen->add_option("--img-b", img_b, "Target image (.pgm or .csv)");
  gen->add_option("--metric", metric, "l1 | l2sq")->capture_default_str();
  gen->add_option("--smoothing", smoothing)->capture_default_str();
  gen->add_option("--out", gen_out, "Output <name>.otp.json")->required();

  auto* solve_cmd = app.add_subcommand("solve", "Solve a problem file");
  std::string problem_path, solver = "sns", trace_path, report_path, duals_path;
  SolverFlags solve_flags;
  solve_cmd->add_option("problem", problem_path, "Problem <name>.otp.json")->required();
  solve_cmd->add_option("--solver", solver, "sinkhorn | sns | newton-dense | lbfgs")
      ->capture_default_str();
  solve_cmd->add_option("--trace", trace_path, "Trace CSV path");
  solve_cmd->add_option("--report", report_path, "Report JSON path");
  solve_cmd->add_option("--duals", duals_path, "Final duals JSON path");
  solve_flags.attach(*solve_cmd);

  auto* bench = app.add_subcommand("bench", "Compare solvers across eta values");
  std::string bench_problem, solvers = "sinkhorn,sns", etas, bench_out;
  SolverFlags bench_flags;
  bench->add_option("problem", bench_problem, "Problem <name>.otp.json")->required();
  bench->add_option("--solvers", solvers)->capture_default_str();
  bench->add_option("--etas", etas, "Comma-separated eta values (default: the file's eta)");
  bench->add_option("--out", bench_out, "CSV path (default stdout)");
  bench_flags.attach(*bench);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (*gen) return cmd_gen(kind, n, seed, eta, img_a, img_b, metric, smoothing, gen_out, out);
    if (*solve_cmd) {
      return cmd_solve(problem_path, solver, solve_flags, trace_path, report_path, duals_path,
                       out);
    }
    return cmd_bench(bench_problem, solvers, etas, bench_flags, bench_out, out, err);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kIo;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  }
}

}  // namespace otsns::cli
