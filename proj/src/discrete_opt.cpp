#include "heatoc/discrete_opt.hpp"

#include <cmath>

#include "heatoc/errors.hpp"

namespace heatoc {

void validate(const OptimizerConfig& cfg) {
  if (cfg.max_iterations < 0) throw ConfigError("optimizer: max_iterations must be >= 0");
  if (!(cfg.gradient_tolerance > 0.0)) throw ConfigError("optimizer: tolerance must be positive");
  if (!(cfg.backtracking_factor > 0.0 && cfg.backtracking_factor < 1.0)) {
    throw ConfigError("optimizer: backtracking factor must lie in (0, 1)");
  }
  if (!(cfg.sufficient_decrease > 0.0 && cfg.sufficient_decrease < 1.0)) {
    throw ConfigError("optimizer: sufficient-decrease constant must lie in (0, 1)");
  }
  if (cfg.initial_step && !(*cfg.initial_step > 0.0)) {
    throw ConfigError("optimizer: initial step must be positive");
  }
  if (cfg.gradient_refresh < 1) throw ConfigError("optimizer: gradient_refresh must be >= 1");
}

DiscreteOcProblem::DiscreteOcProblem(Method method, const OcProblem& prob, int N,
                                     PeerStart peer_start,
                                     std::function<Eigen::VectorXd(double)> exact_state)
    : method_(std::move(method)), prob_(prob), N_(N), peer_start_(peer_start),
      exact_state_(std::move(exact_state)), ode_(make_ode(prob.sys)) {
  if (N < 1) throw ConfigError("number of steps must be positive");
  const Eigen::VectorXd& w = method_weights(method_);
  weights_ = (h() * w).transpose().replicate(N, 1);
  if ((weights_.array() <= 0.0).any()) {
    throw ConfigError("method " + method_name(method_) +
                      " has nonpositive quadrature weights; the control cost would be degenerate");
  }
}

DiscreteControl DiscreteOcProblem::zero() const { return zero_control(method_, N_, prob_.T); }

Trajectory DiscreteOcProblem::forward(const DiscreteControl& u, bool keep_stages) const {
  ForwardOptions opts;
  opts.peer_start = peer_start_;
  opts.exact_state = exact_state_;
  opts.keep_stages = keep_stages;
  return integrate_forward(method_, ode_, prob_.sys.psi, u, opts);
}

Eigen::VectorXd DiscreteOcProblem::terminal_state(const DiscreteControl& u) const {
  return forward(u).final_state();
}

double DiscreteOcProblem::objective(const DiscreteControl& u) const {
  const Eigen::VectorXd r = terminal_state(u) - prob_.target;
  return 0.5 * r.squaredNorm() + 0.5 * prob_.alpha * (weights_.array() * u.values.array().square()).sum();
}

Eigen::MatrixXd DiscreteOcProblem::gradient(const DiscreteControl& u) const {
  const Eigen::VectorXd r = terminal_state(u) - prob_.target;
  return prob_.alpha * weights_.cwiseProduct(u.values) + transpose_response(r);
}

Eigen::VectorXd DiscreteOcProblem::linear_response(const Eigen::MatrixXd& d) const {
  DiscreteControl dir = zero();
  dir.values = d;
  ForwardOptions opts;
  opts.peer_start = peer_start_;
  // The exact start window does not depend on the control; its linearization
  // is the zero window.  Window-0 controls still act through the A-coupling.
  opts.exact_state = [m = prob_.sys.m](double) { return Eigen::VectorXd::Zero(m); };
  return integrate_forward(method_, ode_, Eigen::VectorXd::Zero(prob_.sys.m), dir, opts)
      .final_state();
}

Eigen::MatrixXd DiscreteOcProblem::transpose_response(const Eigen::VectorXd& r) const {
  return integrate_adjoint(method_, ode_, r, N_, prob_.T, peer_start_).forcing_gradient;
}

double discrete_objective(const Method& method, const OcProblem& prob, const DiscreteControl& u,
                          PeerStart peer_start) {
  return DiscreteOcProblem(method, prob, u.N, peer_start).objective(u);
}

DiscreteControl discrete_gradient(const Method& method, const OcProblem& prob,
                                  const DiscreteControl& u, PeerStart peer_start) {
  DiscreteControl g = u;
  g.values = DiscreteOcProblem(method, prob, u.N, peer_start).gradient(u);
  return g;
}

double max_node_error(const DiscreteControl& u, const std::function<double(double)>& exact) {
  double err = 0.0;
  for (int n = 0; n < u.N; ++n) {
    for (Eigen::Index i = 0; i < u.c.size(); ++i) {
      err = std::max(err, std::abs(exact(u.node(n, int(i))) - u.values(n, i)));
    }
  }
  return err;
}

OptimizationResult optimize(const Method& method, const OcProblem& prob, const OptimizerConfig& cfg,
                            int N, const std::optional<ExpSumFunction>& exact_control) {
  validate(cfg);
  std::function<Eigen::VectorXd(double)> exact_state;
  if (cfg.peer_start == PeerStart::kExact && is_peer(method)) {
    if (!exact_control) {
      throw ConfigError("exact Peer start needs the exact control");
    }
    exact_state = [&prob, u = *exact_control](double t) {
      return solve_ivp_exact(prob.sys, prob.dec, u, t);
    };
  }
  const DiscreteOcProblem problem(method, prob, N, cfg.peer_start, exact_state);
  const Eigen::MatrixXd& W = problem.quadrature_weights();
  const double alpha = prob.alpha;

  OptimizationResult result;
  result.control = cfg.initial_control ? *cfg.initial_control : problem.zero();
  if (result.control.values.rows() != N || result.control.values.cols() != W.cols()) {
    throw ConfigError("initial control does not match the method's node grid");
  }
  Eigen::MatrixXd& u = result.control.values;

  auto control_cost = [&](const Eigen::MatrixXd& v) {
    return (W.array() * v.array().square()).sum();
  };
  Eigen::VectorXd residual = problem.terminal_state(result.control) - prob.target;
  double value = 0.5 * residual.squaredNorm() + 0.5 * alpha * control_cost(u);
  Eigen::MatrixXd grad = alpha * W.cwiseProduct(u) + problem.transpose_response(residual);
  Eigen::MatrixXd scaled = grad.cwiseQuotient(W);
  Eigen::MatrixXd dir = -scaled;
  double step = 0.0;

  for (int it = 0;; ++it) {
    const double gnorm = scaled.cwiseAbs().maxCoeff();
    result.history.push_back({it, value, gnorm, step});
    result.iterations = it;
    result.gradient_norm = gnorm;
    if (gnorm <= cfg.gradient_tolerance) {
      result.converged = true;
      break;
    }
    if (it >= cfg.max_iterations) break;

    const Eigen::VectorXd Jd = problem.linear_response(dir);
    const double slope = (grad.array() * dir.array()).sum();
    const double curvature = Jd.squaredNorm() + alpha * control_cost(dir);
    if (!(slope < 0.0) || !(curvature > 0.0)) break;

    // C_h is quadratic along the line: C(s) = C + s·slope + ½s²·curvature.
    // The Armijo test is made on the decrement so that it still resolves
    // decreases far below eps·C near the minimizer.
    auto decrement = [&](double s) { return s * slope + 0.5 * s * s * curvature; };
    auto along = [&](double s) { return value + decrement(s); };
    step = cfg.initial_step ? *cfg.initial_step : -slope / curvature;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      if (decrement(step) <= cfg.sufficient_decrease * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.backtracking_factor;
    }
    if (!accepted) break;

    u += step * dir;
    if ((it + 1) % cfg.gradient_refresh == 0) {
      residual = problem.terminal_state(result.control) - prob.target;
      value = 0.5 * residual.squaredNorm() + 0.5 * alpha * control_cost(u);
      grad = alpha * W.cwiseProduct(u) + problem.transpose_response(residual);
    } else {
      value = along(step);
      residual += step * Jd;
      grad += step * (alpha * W.cwiseProduct(dir) + problem.transpose_response(Jd));
    }
    const Eigen::MatrixXd previous_scaled = scaled;
    scaled = grad.cwiseQuotient(W);

    double beta = 0.0;
    if (cfg.direction == OptimizerConfig::Direction::kConjugateGradient) {
      // Polak–Ribière+ in the W-metric: β = ⟨z⁺, g⁺ − g⟩ / ⟨z, g⟩ with z = W⁻¹g.
      const double denom = (previous_scaled.array().square() * W.array()).sum();
      const double numer =
          (scaled.array() * (scaled.array() - previous_scaled.array()) * W.array()).sum();
      beta = denom > 0.0 ? std::max(0.0, numer / denom) : 0.0;
    }
    dir = -scaled + beta * dir;
    if ((grad.array() * dir.array()).sum() >= 0.0) dir = -scaled;
  }

  result.state = problem.forward(result.control);
  const Eigen::VectorXd r = result.state.final_state() - prob.target;
  result.objective = 0.5 * r.squaredNorm() + 0.5 * alpha * control_cost(u);
  result.adjoint = integrate_adjoint(method, make_ode(prob.sys), r, N, prob.T, cfg.peer_start);
  if (exact_control) {
    result.control_error = max_node_error(result.control, *exact_control);
  }
  return result;
}

}  // namespace heatoc
