#include "otsns/baselines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <deque>

#include "ascent.hpp"
#include "otsns/sinkhorn.hpp"

namespace otsns {

namespace {

constexpr int kRidgeAttempts = 6;  // ridge up to 1e-4 of the largest diagonal entry

constexpr double kCurvatureFloor = 1e-12;

Eigen::MatrixXd assemble_dense(const PlanEvaluation& eval, double eta, bool augmented,
                               double shift) {
  const auto n = static_cast<Eigen::Index>(eval.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const double scale = eta * std::exp(eval.log_scale);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = eval.scaled_plan.row(static_cast<std::size_t>(i)).data();
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = scale * row[j];
      m(i, n + j) = v;
      m(n + j, i) = v;
    }
    m(i, i) = eta * std::exp(eval.log_row_sums[static_cast<std::size_t>(i)]) + shift;
    m(n + i, n + i) = eta * std::exp(eval.log_col_sums[static_cast<std::size_t>(i)]) + shift;
  }
  if (augmented) {
    m.topLeftCorner(n, n).array() += 1.0;
    m.bottomRightCorner(n, n).array() += 1.0;
    m.topRightCorner(n, n).array() -= 1.0;
    m.bottomLeftCorner(n, n).array() -= 1.0;
  }
  return m;
}

// Two-loop recursion state. Pairs are (s, w) with s the step in z and
// w = g_old - g_new, so that s.w > 0 for the concave objective.
class LbfgsMemory {
 public:
  explicit LbfgsMemory(std::size_t memory) : memory_(memory) {}

  void observe(const Vector& z, const Vector& g) {
    if (!last_z_.empty()) {
      Vector s(z.size()), w(z.size());
      double sw = 0.0, ss = 0.0, ww = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        s[k] = z[k] - last_z_[k];
        w[k] = last_g_[k] - g[k];
        sw += s[k] * w[k];
        ss += s[k] * s[k];
        ww += w[k] * w[k];
      }
      if (sw > kCurvatureFloor * std::sqrt(ss) * std::sqrt(ww)) {
        pairs_.push_back({std::move(s), std::move(w), 1.0 / sw, sw / ww});
        if (pairs_.size() > memory_) pairs_.pop_front();
      }
    }
    last_z_ = z;
    last_g_ = g;
  }

  Vector direction(const Vector& g) const {
    Vector q = g;
    const std::size_t m = q.size();
    if (pairs_.empty()) {
      double gmax = 0.0;
      for (double v : g) gmax = std::max(gmax, std::fabs(v));
      const double gamma = gmax > 0.0 ? std::min(1.0, 1.0 / gmax) : 1.0;
      for (double& v : q) v *= gamma;
      return q;
    }
    std::vector<double> a(pairs_.size());
    for (std::size_t p = pairs_.size(); p-- > 0;) {
      const Pair& pr = pairs_[p];
      double sq = 0.0;
      for (std::size_t k = 0; k < m; ++k) sq += pr.s[k] * q[k];
      a[p] = pr.rho * sq;
      for (std::size_t k = 0; k < m; ++k) q[k] -= a[p] * pr.w[k];
    }
    const double gamma = pairs_.back().scale;
    for (double& v : q) v *= gamma;
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      const Pair& pr = pairs_[p];
      double wq = 0.0;
      for (std::size_t k = 0; k < m; ++k) wq += pr.w[k] * q[k];
      const double b = pr.rho * wq;
      for (std::size_t k = 0; k < m; ++k) q[k] += pr.s[k] * (a[p] - b);
    }
    return q;
  }

 private:
  struct Pair {
    Vector s;
    Vector w;
    double rho;
    double scale;
  };
  std::size_t memory_;
  std::deque<Pair> pairs_;
  Vector last_z_;
  Vector last_g_;
};

}  // namespace

NewtonResult run_dense_newton(const Problem& problem, DualPotentials duals,
                              const SolverConfig& config, TraceSink& trace,
                              const Stopwatch& clock) {
  validate(config, problem.size());
  const double shift = config.augmented ? 0.0 : 1e-12 * problem.eta;
  const auto direction = [&](const detail::DirectionRequest& req) {
    Eigen::MatrixXd m = assemble_dense(req.eval, problem.eta, config.augmented, shift);
    // Near the optimum the plan can split into almost disconnected blocks, each
    // adding a null direction the rank-1 term does not remove. Retry with a
    // growing ridge before giving up.
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    const double ridge_unit = 1e-14 * m.diagonal().cwiseAbs().maxCoeff();
    double ridge = 0.0;
    for (int attempt = 0; llt.info() != Eigen::Success && attempt < kRidgeAttempts; ++attempt) {
      const double next = ridge_unit * std::pow(100.0, attempt);
      m.diagonal().array() += next - ridge;
      ridge = next;
      llt.compute(m);
    }
    if (llt.info() != Eigen::Success) {
      throw NumericalError("dense newton: Cholesky factorization failed at iteration " +
                           std::to_string(req.iteration));
    }
    const Eigen::Map<const Eigen::VectorXd> g(req.grad.data(),
                                              static_cast<Eigen::Index>(req.grad.size()));
    const Eigen::VectorXd dz = llt.solve(g);
    return detail::Direction{Vector(dz.data(), dz.data() + dz.size()), std::nullopt, 0};
  };
  return detail::ascend(problem, std::move(duals), config, Stage::dense_newton, true, trace,
                        clock, direction);
}

NewtonResult run_lbfgs(const Problem& problem, DualPotentials duals, int memory,
                       const SolverConfig& config, TraceSink& trace, const Stopwatch& clock) {
  if (memory < 1) throw ValidationError("lbfgs: memory must be at least 1");
  validate(config, problem.size());
  LbfgsMemory history(static_cast<std::size_t>(memory));
  const auto direction = [&](const detail::DirectionRequest& req) {
    Vector z(req.duals.x);
    z.insert(z.end(), req.duals.y.begin(), req.duals.y.end());
    const Vector g(req.grad.begin(), req.grad.end());
    history.observe(z, g);
    return detail::Direction{history.direction(g), std::nullopt, 0};
  };
  return detail::ascend(problem, std::move(duals), config, Stage::lbfgs, false, trace,
                        clock, direction);
}

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::sinkhorn: return "sinkhorn";
    case Method::sns: return "sns";
    case Method::dense_newton: return "newton-dense";
    case Method::lbfgs: return "lbfgs";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
  for (Method m : {Method::sinkhorn, Method::sns, Method::dense_newton, Method::lbfgs}) {
    if (name == to_string(m)) return m;
  }
  return std::nullopt;
}

SolveResult solve(const Problem& problem, Method method, const SolverConfig& config,
                  const SolveOptions& options, TraceSink& trace) {
  if (method == Method::sns) return solve_sns(problem, config, trace);
  validate(problem);
  validate(config, problem.size());
  const Stopwatch clock;

  sinkhorn::RunOptions warm;
  warm.max_steps = method == Method::sinkhorn ? options.sinkhorn_max_iters : config.n1;
  warm.stop = sinkhorn::StopRule::from(config);
  const sinkhorn::RunResult first =
      sinkhorn::run(problem, DualPotentials::zeros(problem.size()), warm, trace, clock);

  SolveResult out;
  out.sinkhorn = {first.iterations, clock.seconds()};
  out.duals = first.duals;
  out.marginal_kl = first.marginal_kl;
  out.l1_error = first.l1_error;
  out.converged = first.converged;
  if (method == Method::sinkhorn || first.converged) return out;

  NewtonResult second = method == Method::dense_newton
                            ? run_dense_newton(problem, first.duals, config, trace, clock)
                            : run_lbfgs(problem, first.duals, options.lbfgs_memory, config,
                                        trace, clock);
  out.second = {second.iterations, clock.seconds() - out.sinkhorn.seconds};
  out.duals = std::move(second.duals);
  out.fallbacks = second.fallbacks;
  out.marginal_kl = second.marginal_kl;
  out.l1_error = second.l1_error;
  out.converged = second.converged;
  return out;
}

}  // namespace otsns
