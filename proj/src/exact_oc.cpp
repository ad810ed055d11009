#include "heatoc/exact_oc.hpp"

#include <cmath>
#include <set>

#include <Eigen/Cholesky>

#include "heatoc/errors.hpp"

namespace heatoc {

double phi1(double z) {
  if (std::abs(z) < 1e-4) {
    return 1.0 + z * (1.0 / 2.0 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)));
  }
  return std::expm1(z) / z;
}

ExpSumFunction::ExpSumFunction(double horizon, std::vector<Term> terms)
    : horizon_(horizon), terms_(std::move(terms)) {
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("ExpSumFunction: horizon must be positive");
  }
}

double ExpSumFunction::operator()(double t) const {
  double value = 0.0;
  for (const Term& term : terms_) {
    value += term.coefficient * std::exp(term.rate * (horizon_ - t));
  }
  return value;
}

double ExpSumFunction::integral_of_square() const {
  double sum = 0.0;
  for (const Term& a : terms_) {
    for (const Term& b : terms_) {
      sum += a.coefficient * b.coefficient * horizon_ * phi1((a.rate + b.rate) * horizon_);
    }
  }
  return sum;
}

ExpSumFunction& ExpSumFunction::operator+=(const ExpSumFunction& other) {
  if (other.horizon_ != horizon_) {
    throw std::invalid_argument("ExpSumFunction: horizons differ");
  }
  terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
  return *this;
}

ExpSumFunction& ExpSumFunction::operator*=(double scale) {
  for (Term& term : terms_) term.coefficient *= scale;
  return *this;
}

ExpSumFunction operator+(ExpSumFunction lhs, const ExpSumFunction& rhs) {
  lhs += rhs;
  return lhs;
}

ExpSumFunction operator*(double scale, ExpSumFunction f) {
  f *= scale;
  return f;
}

OcProblem make_problem(MolSystem sys, SpectralDecomposition dec, double T, double alpha,
                       Eigen::VectorXd target) {
  if (!(T > 0.0)) throw ConfigError("horizon T must be positive");
  if (!(alpha > 0.0)) throw ConfigError("control weight alpha must be positive");
  if (target.size() != sys.m) throw ConfigError("target length differs from m");
  return OcProblem{std::move(sys), std::move(dec), T, alpha, std::move(target)};
}

OcProblem make_problem(MolSystem sys, double T, double alpha, Eigen::VectorXd target) {
  SpectralDecomposition dec = decompose(sys);
  return make_problem(std::move(sys), std::move(dec), T, alpha, std::move(target));
}

namespace {

void check_time(double t, double T, const char* who) {
  const double slack = 1e-12 * T;
  if (!(t >= -slack && t <= T + slack)) {
    throw std::invalid_argument(std::string(who) + ": time outside [0, T]");
  }
}

}  // namespace

Eigen::VectorXd solve_ivp_exact(const MolSystem& sys, const SpectralDecomposition& dec,
                                const ExpSumFunction& control, double t) {
  const double T = control.horizon();
  check_time(t, T, "solve_ivp_exact");
  const Eigen::VectorXd vm = dec.boundary_row();
  Eigen::VectorXd eta = to_modal(dec, sys.psi);
  for (Eigen::Index k = 0; k < eta.size(); ++k) {
    double forced = 0.0;
    for (const auto& term : control.terms()) {
      forced += term.coefficient * t * std::exp(term.rate * (T - t)) *
                phi1((dec.lambdas(k) + term.rate) * t);
    }
    eta(k) = std::exp(dec.lambdas(k) * t) * eta(k) + sys.gamma * vm(k) * forced;
  }
  return from_modal(dec, eta);
}

Eigen::VectorXd adjoint_exact(const SpectralDecomposition& dec, double T,
                              const Eigen::Ref<const Eigen::VectorXd>& p_T, double t) {
  check_time(t, T, "adjoint_exact");
  Eigen::VectorXd coeff = to_modal(dec, p_T);
  coeff.array() *= (dec.lambdas.array() * (T - t)).exp();
  return from_modal(dec, coeff);
}

ExpSumFunction adjoint_boundary_component(const SpectralDecomposition& dec, double T,
                                          const Eigen::Ref<const Eigen::VectorXd>& p_T) {
  const Eigen::VectorXd coeff = to_modal(dec, p_T);
  const Eigen::VectorXd vm = dec.boundary_row();
  std::vector<ExpSumFunction::Term> terms;
  terms.reserve(coeff.size());
  for (Eigen::Index l = 0; l < coeff.size(); ++l) {
    terms.push_back({vm(l) * coeff(l), dec.lambdas(l)});
  }
  return ExpSumFunction(T, std::move(terms));
}

Eigen::MatrixXd build_Q(const OcProblem& prob) {
  const Eigen::VectorXd vm = prob.dec.boundary_row();
  const Eigen::Index m = vm.size();
  const double scale = prob.sys.gamma * prob.sys.gamma * prob.T / prob.alpha;
  Eigen::MatrixXd Q(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index l = 0; l <= k; ++l) {
      const double q =
          scale * vm(k) * phi1((prob.dec.lambdas(k) + prob.dec.lambdas(l)) * prob.T) * vm(l);
      Q(k, l) = q;
      Q(l, k) = q;
    }
  }
  return Q;
}

ExactOcSolution solve_terminal(const OcProblem& prob) {
  const Eigen::Index m = prob.sys.m;
  Eigen::MatrixXd Q = build_Q(prob);
  const Eigen::VectorXd eta0 = to_modal(prob.dec, prob.sys.psi);
  const Eigen::VectorXd rhs = (prob.dec.lambdas.array() * prob.T).exp().matrix().cwiseProduct(eta0) +
                              Q * to_modal(prob.dec, prob.target);

  Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd::Identity(m, m) + Q);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("solve_terminal: I + Q is not positive definite");
  }
  ExactOcSolution sol{llt.solve(rhs), {}, {}, ExpSumFunction(prob.T), std::move(Q), {}};
  const double rcond = llt.rcond();
  sol.condition_number = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  sol.y_T = from_modal(prob.dec, sol.eta_T);
  sol.p_T = sol.y_T - prob.target;
  sol.control = (-prob.sys.gamma / prob.alpha) *
                adjoint_boundary_component(prob.dec, prob.T, sol.p_T);
  if (!sol.eta_T.allFinite()) {
    throw NumericalError("solve_terminal: non-finite solution");
  }
  return sol;
}

SparseTarget sparse_target(const MolSystem& sys, const SpectralDecomposition& dec, double T,
                           double alpha, std::span<const ModeWeight> deltas) {
  const Eigen::Index m = sys.m;
  std::set<int> seen;
  for (const ModeWeight& d : deltas) {
    if (d.mode < 1 || d.mode > m) {
      throw ConfigError("sparse_target: mode index out of range");
    }
    if (!seen.insert(d.mode).second) {
      throw ConfigError("sparse_target: repeated mode index");
    }
  }

  OcProblem prob = make_problem(sys, dec, T, alpha, Eigen::VectorXd::Zero(m));
  const Eigen::VectorXd vm = dec.boundary_row();
  const double scale = sys.gamma * sys.gamma * T / alpha;
  const Eigen::VectorXd eta0 = to_modal(dec, sys.psi);

  Eigen::VectorXd eta_T(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    double coupling = 0.0;
    for (const ModeWeight& d : deltas) {
      const Eigen::Index l = d.mode - 1;
      coupling += d.delta * vm(l) * phi1((dec.lambdas(k) + dec.lambdas(l)) * T);
    }
    eta_T(k) = std::exp(dec.lambdas(k) * T) * eta0(k) - scale * vm(k) * coupling;
  }

  Eigen::VectorXd p_T = Eigen::VectorXd::Zero(m);
  std::vector<ExpSumFunction::Term> terms;
  for (const ModeWeight& d : deltas) {
    const Eigen::Index l = d.mode - 1;
    p_T += d.delta * dec.vectors.col(l);
    terms.push_back({-sys.gamma / alpha * d.delta * vm(l), dec.lambdas(l)});
  }

  SparseTarget out;
  out.exact.eta_T = eta_T;
  out.exact.y_T = from_modal(dec, eta_T);
  out.exact.p_T = p_T;
  out.exact.control = ExpSumFunction(T, std::move(terms));
  out.exact.Q = build_Q(prob);
  out.target = out.exact.y_T - p_T;
  return out;
}

double objective(const OcProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& y_T,
                 const Eigen::Ref<const Eigen::VectorXd>& control_samples,
                 const Eigen::Ref<const Eigen::VectorXd>& quadrature_weights) {
  if (y_T.size() != prob.target.size()) {
    throw std::invalid_argument("objective: state length differs from m");
  }
  if (control_samples.size() != quadrature_weights.size()) {
    throw std::invalid_argument("objective: control samples and quadrature weights differ in length");
  }
  const double control_cost =
      quadrature_weights.dot(control_samples.cwiseAbs2());
  return 0.5 * (y_T - prob.target).squaredNorm() + 0.5 * prob.alpha * control_cost;
}

double objective(const OcProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& y_T,
                 const ExpSumFunction& control) {
  if (y_T.size() != prob.target.size()) {
    throw std::invalid_argument("objective: state length differs from m");
  }
  return 0.5 * (y_T - prob.target).squaredNorm() + 0.5 * prob.alpha * control.integral_of_square();
}

}  // namespace heatoc
