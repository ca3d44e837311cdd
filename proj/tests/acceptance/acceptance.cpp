// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
//   otsns_acceptance                 run every criterion
//   otsns_acceptance 3 7             run a subset
//   otsns_acceptance --trace-digest  print trace digests of criteria 2, 5, 7

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "otsns/baselines.hpp"
#include "otsns/lyapunov.hpp"
#include "otsns/oracle.hpp"
#include "otsns/problems.hpp"
#include "otsns/sinkhorn.hpp"
#include "otsns/sparse_newton.hpp"
#include "otsns/trace_csv.hpp"

namespace {

using namespace otsns;

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// FNV-1a over timing-free trace rows.
class DigestTrace final : public TraceSink {
 public:
  void record(const TraceRecord& row) override {
    for (char ch : format_trace_row(row, false) + "\n") {
      hash_ ^= static_cast<unsigned char>(ch);
      hash_ *= 1099511628211ULL;
    }
    ++rows_;
  }
  std::uint64_t hash() const noexcept { return hash_; }
  std::size_t rows() const noexcept { return rows_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ULL;
  std::size_t rows_ = 0;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

/// The "machine accuracy" stop used by the CLI.
SolverConfig machine_accuracy(std::size_t n) {
  SolverConfig c = SolverConfig::defaults_for(n);
  c.stop_l1_error = 1e-12;
  return c;
}

double dual_distance(const DualPotentials& a, const DualPotentials& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a.x[i] - b.x[i]) * (a.x[i] - b.x[i]) + (a.y[i] - b.y[i]) * (a.y[i] - b.y[i]);
  }
  return std::sqrt(s);
}

DualPotentials unpack(const Vector& z) {
  const std::size_t n = z.size() / 2;
  return {Vector(z.begin(), z.begin() + n), Vector(z.begin() + n, z.end())};
}

Vector pack(const DualPotentials& d) {
  Vector z(d.x);
  z.insert(z.end(), d.y.begin(), d.y.end());
  return z;
}

// Per-component relative error with a floor of 1e-3 of the largest reference
// component, so entries that are zero up to rounding do not divide by ~0.
double relative_error(const Vector& got, const Vector& ref) {
  double scale = 0.0;
  for (double v : ref) scale = std::max(scale, std::fabs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const double denom = std::max(std::fabs(ref[k]), 1e-3 * scale);
    worst = std::max(worst, std::fabs(got[k] - ref[k]) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const std::array<double, 3> etas{1.0, 10.0, 100.0};
  double grad_worst = 0.0, hess_worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = 2 + i % 9;
    Problem p = gen_random_assignment(n, 100 + i);
    p.eta = etas[i % 3];
    NullTrace nt;
    // A few Sinkhorn steps put the plan at unit scale; the perturbation keeps
    // the gradient well away from zero.
    DualPotentials d = sinkhorn::run(p, DualPotentials::zeros(n), 3, nt);
    std::mt19937_64 rng(i);
    std::uniform_real_distribution<double> noise(-0.5 / p.eta, 0.5 / p.eta);
    for (double& v : d.x) v += noise(rng);
    for (double& v : d.y) v += noise(rng);

    for (bool aug : {false, true}) {
      auto f = [&](const Vector& z) {
        return aug ? augmented_potential(p, unpack(z)) : potential(p, unpack(z));
      };
      auto g = [&](const Vector& z) {
        return aug ? augmented_gradient(p, unpack(z)) : gradient(p, unpack(z));
      };
      const Vector z = pack(d);
      const Vector grad = g(z);
      const double h = 1e-6 / std::max(1.0, std::sqrt(p.eta));
      Vector fd(z.size());
      for (std::size_t k = 0; k < z.size(); ++k) {
        Vector zp = z, zm = z;
        zp[k] += h;
        zm[k] -= h;
        fd[k] = (f(zp) - f(zm)) / (2 * h);
      }
      grad_worst = std::max(grad_worst, relative_error(grad, fd));

      HessianOperator op = negated_hessian(p, d, aug);
      std::normal_distribution<double> gauss;
      for (int trial = 0; trial < 3; ++trial) {
        Vector u(z.size());
        for (double& v : u) v = gauss(rng);
        const double hh = 1e-5 / p.eta;
        Vector zp = z, zm = z;
        for (std::size_t k = 0; k < z.size(); ++k) {
          zp[k] += hh * u[k];
          zm[k] -= hh * u[k];
        }
        const Vector gp = g(zp), gm = g(zm);
        Vector diff(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) diff[k] = -(gp[k] - gm[k]) / (2 * hh);
        hess_worst = std::max(hess_worst, relative_error(hessian_matvec(op, u), diff));
      }
    }
  }
  return {grad_worst <= 1e-5 && hess_worst <= 1e-4,
          fmt("max gradient rel err %.2e (<= 1e-5), max Hessian matvec rel err %.2e (<= 1e-4)",
              grad_worst, hess_worst)};
}

Outcome criterion_2(TraceSink& trace) {
  const std::array<double, 4> etas{0.1, 1.0, 4.0, 10.0};
  const std::array<Method, 4> methods{Method::sinkhorn, Method::sns, Method::dense_newton,
                                      Method::lbfgs};
  double worst = 0.0;
  bool all_converged = true;
  for (double eta : etas) {
    Problem p{Matrix(2, 2), {0.5, 0.5}, {0.5, 0.5}, eta};
    p.cost(0, 1) = p.cost(1, 0) = 1.0;
    const Matrix ref = oracle::entropic_2x2_reference(eta);
    for (Method m : methods) {
      SolverConfig c = SolverConfig::defaults_for(2);
      c.stop_marginal_kl = 1e-25;
      SolveResult r = solve(p, m, c, {}, trace);
      all_converged = all_converged && r.converged;
      const Matrix plan = to_plan(make_log_plan(p, r.duals));
      for (std::size_t k = 0; k < 4; ++k) {
        worst = std::max(worst, std::fabs(plan.values()[k] - ref.values()[k]));
      }
    }
  }
  return {worst <= 1e-10 && all_converged,
          fmt("4 solvers x 4 etas, max entry error %.2e (<= 1e-10), all converged: %s", worst,
              all_converged ? "yes" : "no")};
}

Outcome criterion_3() {
  double worst_drop = 0.0, worst_row = 0.0, worst_col = 0.0;
  const std::array<double, 3> etas{1.0, 10.0, 100.0};
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 2 + i % 19;
    Problem p = gen_random_assignment(n, 300 + i);
    p.eta = etas[i % 3];
    DualPotentials d = DualPotentials::zeros(n);
    double f = potential(p, d);
    for (int it = 0; it < 200; ++it) {
      for (int half = 0; half < 2; ++half) {
        d = half == 0 ? sinkhorn::x_step(p, d) : sinkhorn::y_step(p, d);
        const double next = potential(p, d);
        worst_drop = std::max(worst_drop, (f - next) / std::max(1.0, std::fabs(f)));
        f = next;
        const LogPlan plan = make_log_plan(p, d);
        const Vector sums = half == 0 ? log_row_sums(plan) : log_col_sums(plan);
        const Vector& target = half == 0 ? p.row_marginal : p.col_marginal;
        double err = 0.0;
        for (std::size_t k = 0; k < n; ++k) err += std::fabs(std::exp(sums[k]) - target[k]);
        (half == 0 ? worst_row : worst_col) = std::max(half == 0 ? worst_row : worst_col, err);
      }
    }
  }
  const bool ok = worst_drop <= 1e-12 && worst_row <= 1e-12 && worst_col <= 1e-12;
  return {ok, fmt("max relative f decrease %.2e, row l1 after x-step %.2e, col l1 after "
                  "y-step %.2e (all <= 1e-12)",
                  std::max(worst_drop, 0.0), worst_row, worst_col)};
}

Outcome criterion_4() {
  const std::size_t n = 30;
  Problem p = gen_random_assignment(n, 4);
  p.eta = 100;
  NullTrace nt;
  SolverConfig c = SolverConfig::defaults_for(n);
  c.target_sparsity = 1.0;
  const DualPotentials warm = sinkhorn::run(p, DualPotentials::zeros(n), c.n1, nt);
  double worst = 0.0;
  int compared = 0;
  for (int k = 1; k <= 10; ++k) {
    c.n2 = k;
    const NewtonResult s = sparse_newton::run(p, warm, c, nt);
    const NewtonResult d = run_dense_newton(p, warm, c, nt);
    worst = std::max(worst, dual_distance(s.duals, d.duals));
    ++compared;
    if (s.converged && d.converged && s.iterations < k && d.iterations < k) break;
  }
  return {worst <= 1e-6,
          fmt("%d iterate pairs, max ||z_sns - z_dense||_2 = %.2e (<= 1e-6)", compared, worst)};
}

Outcome criterion_5(TraceSink& trace) {
  const std::size_t n = 100;
  Problem p = gen_random_assignment(n, 7);
  p.eta = 400;
  SolverConfig c = SolverConfig::defaults_for(n);
  c.n1 = 20;
  c.target_sparsity = 2.0 / n;
  c.stop_marginal_kl = 1e-20;
  c.n2 = 1000;  // let the Newton stage finish so the Sinkhorn ratio is measured
  const SolveResult sns = solve_sns(p, c, trace);
  const bool sns_ok = sns.converged && sns.marginal_kl <= 1e-20;
  const bool newton_ok = sns.second.iterations <= 40;

  const SolveResult sk = solve(p, Method::sinkhorn, c, {}, trace);
  const bool ratio_ok = sk.converged && sk.total_iterations() >= 20 * sns.total_iterations();
  return {sns_ok && newton_ok && ratio_ok,
          fmt("SNS converged %s in %d Sinkhorn + %d Newton (<= 40) = %d; Sinkhorn-only %d "
              "(ratio %.0fx, >= 20x)",
              sns_ok ? "yes" : "no", sns.sinkhorn.iterations, sns.second.iterations,
              sns.total_iterations(), sk.total_iterations(),
              double(sk.total_iterations()) / std::max(1, sns.total_iterations()))};
}

Problem two_gaussian_pair(double eta) {
  const std::array<GaussianBlob, 2> a{{{3.0, 3.5, 1.5, 1.0}, {9.5, 10.0, 2.0, 0.8}}};
  const std::array<GaussianBlob, 2> b{{{3.5, 10.0, 1.8, 0.9}, {10.0, 3.0, 1.5, 1.0}}};
  return image_pair_problem(gaussian_image(14, 14, a), gaussian_image(14, 14, b),
                            GridMetric::l2_squared, 1e-6, eta);
}

Outcome criterion_6() {
  const std::array<double, 3> etas{50.0, 150.0, 300.0};
  std::string detail;
  bool ok = true;
  int prev_gap = -1;
  for (double eta : etas) {
    const Problem p = two_gaussian_pair(eta);
    SolverConfig c = machine_accuracy(p.size());
    c.target_sparsity = 15.0 / p.size();
    NullTrace nt;
    const SolveResult sns = solve(p, Method::sns, c, {}, nt);
    const SolveResult sk = solve(p, Method::sinkhorn, c, {}, nt);
    const int gap = sk.total_iterations() - sns.total_iterations();
    ok = ok && sns.converged && sk.converged && gap > 0 && gap > prev_gap;
    prev_gap = gap;
    detail += fmt("%seta=%g: SNS %d vs Sinkhorn %d", detail.empty() ? "" : "; ", eta,
                  sns.total_iterations(), sk.total_iterations());
  }
  return {ok, detail + " (SNS fewer at every eta, gap widening)"};
}

Outcome criterion_7(TraceSink& trace) {
  double worst_eta = 0.0, worst_t = 0.0, worst_eps = 0.0;
  int instances = 0;
  for (std::size_t n = 4; n <= 7; ++n) {
    int found = 0;
    for (std::uint64_t seed = 0; found < 2; ++seed) {
      Problem p = gen_random_assignment(n, seed);
      const oracle::AssignmentResult opt = oracle::brute_force_assignment(p.cost);
      if (opt.optimal_permutations.size() != 1) continue;
      ++found;
      ++instances;

      std::vector<double> by_eta;
      LogPlan last;
      for (double mult : {10.0, 20.0, 40.0}) {
        p.eta = mult * n;
        const SolveResult r = solve(p, Method::sns, machine_accuracy(n), {}, trace);
        last = make_log_plan(p, r.duals);
        by_eta.push_back(oracle::dist_to_optimal_vertices(last, opt));
      }
      std::vector<double> by_t;
      DualPotentials d = DualPotentials::zeros(n);
      int done = 0;
      for (int t : {10, 40, 160}) {
        d = sinkhorn::run(p, d, t - done, trace);
        done = t;
        by_t.push_back(oracle::dist_to_optimal_vertices(make_log_plan(p, d), opt));
      }
      for (std::size_t k = 1; k < 3; ++k) {
        worst_eta = std::max(worst_eta, by_eta[k] / by_eta[k - 1]);
        worst_t = std::max(worst_t, by_t[k] / by_t[k - 1]);
      }
      worst_eps = std::max(worst_eps, oracle::sparsity_profile(last, 2.0 / n).eps);
    }
  }
  const bool ok = worst_eta <= 1.1 && worst_t <= 1.1 && worst_eps <= 0.01;
  return {ok, fmt("%d unique-optimum instances: worst dist ratio over eta %.3f, over t %.3f "
                  "(<= 1.1), max eps at lambda=2/n %.2e (<= 0.01)",
                  instances, worst_eta, worst_t, worst_eps)};
}

Outcome criterion_8() {
  const std::size_t n = 50;
  Problem p = gen_rank_one(n, 3);
  p.eta = 50;
  SolverConfig c = SolverConfig::defaults_for(n);
  c.target_sparsity = 15.0 / n;
  c.stop_marginal_kl = 1e-20;
  NullTrace nt;
  const SolveResult as_written = solve_sns(p, c, nt);

  // The warm start alone solves a separable kernel exactly, so the Newton
  // stage is also exercised from perturbed optimal duals.
  int iters = 0, fallbacks = 0, runs_ok = 0;
  const int runs = 5;
  for (int k = 0; k < runs; ++k) {
    DualPotentials d = as_written.duals;
    std::mt19937_64 rng(k);
    std::uniform_real_distribution<double> noise(-2.0 / p.eta, 2.0 / p.eta);
    for (double& v : d.x) v += noise(rng);
    for (double& v : d.y) v += noise(rng);
    const NewtonResult r = sparse_newton::run(p, d, c, nt);
    iters += r.iterations;
    fallbacks += r.fallbacks;
    runs_ok += r.converged && r.marginal_kl <= 1e-20;
  }
  const bool ok = as_written.converged && as_written.marginal_kl <= 1e-20 && runs_ok == runs &&
                  fallbacks * 10 <= iters;
  return {ok, fmt("solve: kl %.1e after %d+%d iterations; perturbed starts: %d/%d converged, "
                  "%d fallbacks in %d Newton iterations (<= 10%%)",
                  as_written.marginal_kl, as_written.sinkhorn.iterations,
                  as_written.second.iterations, runs_ok, runs, fallbacks, iters)};
}

Outcome criterion_9() {
  const std::size_t n = 400;
  Problem p = gen_random_assignment(n, 7);
  p.eta = 4.0 * n;
  SolverConfig c = SolverConfig::defaults_for(n);
  c.n2 = 5;
  c.stop_marginal_kl = 0.0;
  NullTrace nt;
  const DualPotentials warm = sinkhorn::run(p, DualPotentials::zeros(n), c.n1, nt);
  double dense = 1e300, sparse = 1e300;
  for (int rep = 0; rep < 3; ++rep) {
    Stopwatch a;
    const NewtonResult d = run_dense_newton(p, warm, c, nt);
    dense = std::min(dense, a.seconds() / d.iterations);
    Stopwatch b;
    const NewtonResult s = sparse_newton::run(p, warm, c, nt);
    sparse = std::min(sparse, b.seconds() / s.iterations);
  }
  const double ratio = dense / sparse;
  return {ratio >= 5.0, fmt("dense %.4f s/iter, SNS %.4f s/iter, ratio %.2f (>= 5)", dense,
                            sparse, ratio)};
}

Outcome criterion_10() {
  const std::size_t n = 100;
  Problem p = gen_random_assignment(n, 7);
  p.eta = 400;
  SolverConfig c = SolverConfig::defaults_for(n);
  c.stop_marginal_kl = 1e-12;
  c.n2 = 100000;
  NullTrace nt;
  const DualPotentials warm = sinkhorn::run(p, DualPotentials::zeros(n), c.n1, nt);
  const NewtonResult sns = sparse_newton::run(p, warm, c, nt);
  const NewtonResult lb = run_lbfgs(p, warm, 10, c, nt);
  const bool ok = sns.converged && lb.converged && lb.iterations >= 3 * sns.iterations;
  return {ok, fmt("SNS Newton %d iterations, L-BFGS(10) %d iterations (ratio %.1f, >= 3)",
                  sns.iterations, lb.iterations,
                  double(lb.iterations) / std::max(1, sns.iterations))};
}

std::string digests() {
  DigestTrace t2, t5, t7;
  criterion_2(t2);
  criterion_5(t5);
  criterion_7(t7);
  std::ostringstream out;
  for (const DigestTrace* t : {&t2, &t5, &t7}) out << std::hex << t->hash() << ':' << std::dec
                                                   << t->rows() << '\n';
  return out.str();
}

std::string run_child(const std::string& self) {
  const std::string cmd = "OT_SNS_THREADS=1 '" + self + "' --trace-digest";
  std::string out;
  if (FILE* pipe = popen(cmd.c_str(), "r")) {
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    if (pclose(pipe) != 0) out += "child failed\n";
  }
  return out;
}

Outcome criterion_11(const std::string& self) {
  const std::string a = run_child(self);
  const std::string b = run_child(self);
  const bool ok = !a.empty() && a == b && a.find("failed") == std::string::npos;
  std::string shown = a;
  std::replace(shown.begin(), shown.end(), '\n', ' ');
  return {ok, "digests (criteria 2, 5, 7) " + shown + (a == b ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--trace-digest") {
      std::fputs(digests().c_str(), stdout);
      return 0;
    }
    int id = 0;
    const auto [end, err] = std::from_chars(arg.data(), arg.data() + arg.size(), id);
    if (err != std::errc() || end != arg.data() + arg.size() || id < 1 || id > 11) {
      std::fprintf(stderr, "usage: %s [--trace-digest | criterion numbers 1-11...]\n", argv[0]);
      return arg == "--help" || arg == "-h" ? 0 : 2;
    }
    wanted.push_back(id);
  }
  const std::string self = "/proc/self/exe";
  // /proc/self/exe names whoever reads it; resolve it for the child.
  std::error_code ec;
  const std::string resolved = std::filesystem::read_symlink(self, ec).string();

  NullTrace nt;
  struct Criterion {
    const char* name;
    double budget_seconds;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {"gradient/Hessian vs finite differences", 10, criterion_1},
      {"2x2 closed-form oracle", 5, [&] { return criterion_2(nt); }},
      {"Sinkhorn invariants", 30, criterion_3},
      {"lambda=1 SNS matches dense Newton", 30, criterion_4},
      {"random assignment n=100 eta=400", 300, [&] { return criterion_5(nt); }},
      {"14x14 image pair eta sweep", 600, criterion_6},
      {"oracle checks on small assignments", 120, [&] { return criterion_7(nt); }},
      {"rank-1 cost robustness", 120, criterion_8},
      {"dense vs sparse Newton cost per iteration", 300, criterion_9},
      {"L-BFGS vs SNS Newton stage", 300, criterion_10},
      {"trace determinism", 900, [&] { return criterion_11(ec ? self : resolved); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    Stopwatch clock;
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = clock.seconds();
    if (seconds > criteria[i].budget_seconds) {
      o.pass = false;
      o.detail += fmt(" (over the %.0fs budget)", criteria[i].budget_seconds);
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].name,
                o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
