#include "heatoc/integrators.hpp"

#include <Eigen/Dense>

#include "heatoc/errors.hpp"

namespace heatoc {

using Complex = std::complex<double>;

KroneckerStageSolver::KroneckerStageSolver(const Eigen::MatrixXd& C, double h,
                                           const Tridiagonal<double>& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> eig(C);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("stage coefficient matrix: eigen decomposition failed");
  }
  S_ = eig.eigenvectors();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(S_);
  if (!lu.isInvertible() || lu.rcond() < 1e-10) {
    throw NumericalError("stage coefficient matrix is not diagonalizable");
  }
  S_inv_transposed_ = lu.inverse().transpose();
  const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < C.rows(); ++k) {
    const Complex d = eig.eigenvalues()(k);
    if (std::abs(d) <= 1e-12 * scale) {
      solvers_.emplace_back(std::nullopt);
    } else {
      solvers_.emplace_back(ShiftedTridiagonalSolver<Complex>(M, h * d));
    }
  }
}

Eigen::MatrixXd KroneckerStageSolver::solve(const Eigen::MatrixXd& rhs) const {
  Eigen::MatrixXcd W = rhs.cast<Complex>() * S_inv_transposed_;
  for (Eigen::Index k = 0; k < W.cols(); ++k) {
    if (solvers_[k]) W.col(k) = solvers_[k]->solve(W.col(k));
  }
  return (W * S_.transpose()).real();
}

LinearOde make_ode(const MolSystem& sys) { return LinearOde{sys.matrix, sys.input_vector()}; }

DiscreteControl zero_control(const Method& method, int N, double T) {
  if (N < 1) throw ConfigError("number of steps must be positive");
  if (!(T > 0.0)) throw ConfigError("horizon must be positive");
  DiscreteControl u;
  u.N = N;
  u.T = T;
  u.c = method_nodes(method);
  u.values = Eigen::MatrixXd::Zero(N, u.c.size());
  return u;
}

DiscreteControl sample_control(const Method& method, int N, double T,
                               const std::function<double(double)>& g) {
  DiscreteControl u = zero_control(method, N, T);
  for (int n = 0; n < N; ++n) {
    for (Eigen::Index i = 0; i < u.c.size(); ++i) u.values(n, i) = g(u.node(n, int(i)));
  }
  return u;
}

// ---------------------------------------------------------------------------

IrkStepper::IrkStepper(const IrkTableau& tab, const LinearOde& ode, double h)
    : tab_(tab), ode_(ode), h_(h), forward_(tab.A, h, ode.matrix),
      transposed_(tab.A.transpose(), h, ode.matrix) {
  if (!(h > 0.0)) throw std::invalid_argument("IrkStepper: step size must be positive");
}

IrkStep IrkStepper::step(const Eigen::VectorXd& y,
                         const Eigen::Ref<const Eigen::VectorXd>& forcing) const {
  const int s = tab_.stages();
  const Eigen::VectorXd My = multiply(ode_.matrix, y);
  Eigen::MatrixXd rhs(y.size(), s);
  for (int i = 0; i < s; ++i) rhs.col(i) = My + forcing(i) * ode_.input;
  const Eigen::MatrixXd K = forward_.solve(rhs);
  IrkStep out;
  out.stages = y.replicate(1, s) + h_ * K * tab_.A.transpose();
  out.next = y + h_ * K * tab_.b;
  return out;
}

Eigen::VectorXd IrkStepper::adjoint_step(const Eigen::VectorXd& lambda_next,
                                         Eigen::Ref<Eigen::VectorXd> forcing_gradient,
                                         Eigen::MatrixXd* stage_adjoint) const {
  const int s = tab_.stages();
  const Eigen::MatrixXd rhs = h_ * lambda_next * tab_.b.transpose();
  const Eigen::MatrixXd kappa = transposed_.solve(rhs);
  forcing_gradient = kappa.transpose() * ode_.input;
  if (stage_adjoint != nullptr) {
    *stage_adjoint = kappa;
    for (int i = 0; i < s; ++i) stage_adjoint->col(i) /= h_ * tab_.b(i);
  }
  return lambda_next + multiply(ode_.matrix, kappa.rowwise().sum());
}

IrkStep irk_step(const IrkTableau& tab, const LinearOde& ode, double t_n, double h,
                 const Eigen::VectorXd& y_n, const std::function<double(double)>& g) {
  Eigen::VectorXd forcing(tab.stages());
  for (int i = 0; i < tab.stages(); ++i) forcing(i) = g ? g(t_n + tab.c(i) * h) : 0.0;
  return IrkStepper(tab, ode, h).step(y_n, forcing);
}

// ---------------------------------------------------------------------------

PeerStepper::PeerStepper(const PeerScheme& scheme, const LinearOde& ode, double h)
    : scheme_(scheme), ode_(ode), h_(h),
      start_(collocation_matrix(scheme.c), h, ode.matrix),
      start_transposed_(collocation_matrix(scheme.c).transpose(), h, ode.matrix),
      start_matrix_(collocation_matrix(scheme.c)) {
  validate(scheme_);
  if (!(h > 0.0)) throw std::invalid_argument("PeerStepper: step size must be positive");
  for (int i = 0; i < scheme_.stages(); ++i) {
    const double r = scheme_.R(i, i);
    if (r == 0.0) {
      stage_solvers_.emplace_back(std::nullopt);
    } else {
      stage_solvers_.emplace_back(ShiftedTridiagonalSolver<double>(ode_.matrix, h * r));
    }
  }
}

Eigen::MatrixXd PeerStepper::step(const Eigen::MatrixXd& previous,
                                  const Eigen::Ref<const Eigen::VectorXd>& previous_forcing,
                                  const Eigen::Ref<const Eigen::VectorXd>& forcing) const {
  const int s = scheme_.stages();
  const Eigen::Index m = previous.rows();
  const Eigen::MatrixXd& B = scheme_.B;
  const Eigen::MatrixXd& A = scheme_.A;
  const Eigen::MatrixXd& R = scheme_.R;

  Eigen::MatrixXd F_prev(m, s);
  for (int j = 0; j < s; ++j) {
    F_prev.col(j) = multiply(ode_.matrix, previous.col(j)) + previous_forcing(j) * ode_.input;
  }
  // Explicit part of every stage: B·Y_{n−1} + h·A·F(Y_{n−1}).
  const Eigen::MatrixXd explicit_part = previous * B.transpose() + h_ * F_prev * A.transpose();

  Eigen::MatrixXd Y(m, s);
  Eigen::MatrixXd F(m, s);
  for (int i = 0; i < s; ++i) {
    Eigen::VectorXd rhs = explicit_part.col(i) + h_ * R(i, i) * forcing(i) * ode_.input;
    for (int j = 0; j < i; ++j) rhs += h_ * R(i, j) * F.col(j);
    Y.col(i) = stage_solvers_[i] ? stage_solvers_[i]->solve(rhs) : rhs;
    F.col(i) = multiply(ode_.matrix, Y.col(i)) + forcing(i) * ode_.input;
  }
  return Y;
}

void PeerStepper::adjoint_step(const Eigen::MatrixXd& window_adjoint,
                               Eigen::MatrixXd& previous_adjoint,
                               Eigen::Ref<Eigen::VectorXd> previous_forcing_gradient,
                               Eigen::Ref<Eigen::VectorXd> forcing_gradient) const {
  const int s = scheme_.stages();
  const Eigen::Index m = window_adjoint.rows();
  const Eigen::MatrixXd& R = scheme_.R;

  // μ = (I − h R⊗M)^{−T} Λ_n, solved from the last stage upwards.
  Eigen::MatrixXd mu(m, s);
  Eigen::MatrixXd M_mu(m, s);
  for (int i = s - 1; i >= 0; --i) {
    Eigen::VectorXd rhs = window_adjoint.col(i);
    for (int j = i + 1; j < s; ++j) rhs += h_ * R(j, i) * M_mu.col(j);
    mu.col(i) = stage_solvers_[i] ? stage_solvers_[i]->solve(rhs) : rhs;
    M_mu.col(i) = multiply(ode_.matrix, mu.col(i));
  }
  const Eigen::VectorXd beta = mu.transpose() * ode_.input;
  previous_adjoint += mu * scheme_.B + h_ * M_mu * scheme_.A;
  previous_forcing_gradient += h_ * scheme_.A.transpose() * beta;
  forcing_gradient += h_ * R.transpose() * beta;
}

Eigen::MatrixXd PeerStepper::bootstrap(const Eigen::VectorXd& y0,
                                       const Eigen::Ref<const Eigen::VectorXd>& forcing) const {
  const int s = scheme_.stages();
  const Eigen::VectorXd My = multiply(ode_.matrix, y0);
  Eigen::MatrixXd rhs(y0.size(), s);
  for (int i = 0; i < s; ++i) rhs.col(i) = My + forcing(i) * ode_.input;
  const Eigen::MatrixXd K = start_.solve(rhs);
  return y0.replicate(1, s) + h_ * K * start_matrix_.transpose();
}

Eigen::VectorXd PeerStepper::bootstrap_adjoint(const Eigen::MatrixXd& window_adjoint,
                                               Eigen::Ref<Eigen::VectorXd> forcing_gradient) const {
  const Eigen::MatrixXd kappa = start_transposed_.solve(h_ * window_adjoint * start_matrix_);
  forcing_gradient += kappa.transpose() * ode_.input;
  return window_adjoint.rowwise().sum() + multiply(ode_.matrix, kappa.rowwise().sum());
}

Eigen::MatrixXd peer_step(const PeerScheme& scheme, const LinearOde& ode, double t_n, double h,
                          const Eigen::MatrixXd& previous, const std::function<double(double)>& g) {
  const int s = scheme.stages();
  Eigen::VectorXd previous_forcing(s);
  Eigen::VectorXd forcing(s);
  for (int i = 0; i < s; ++i) {
    previous_forcing(i) = g ? g(t_n - h + scheme.c(i) * h) : 0.0;
    forcing(i) = g ? g(t_n + scheme.c(i) * h) : 0.0;
  }
  return PeerStepper(scheme, ode, h).step(previous, previous_forcing, forcing);
}

// ---------------------------------------------------------------------------

namespace {

Trajectory empty_trajectory(Eigen::Index m, int N, double T) {
  Trajectory traj;
  traj.times = Eigen::VectorXd::LinSpaced(N + 1, 0.0, T);
  traj.states.resize(m, N + 1);
  return traj;
}

void check_control(const Method& method, const LinearOde& ode, const Eigen::VectorXd& y0,
                   const DiscreteControl& control) {
  const int s = method_stages(method);
  if (control.N < 1 || control.values.rows() != control.N || control.values.cols() != s) {
    throw std::invalid_argument("control grid does not match the method's nodes");
  }
  if (y0.size() != ode.size() || ode.input.size() != ode.size()) {
    throw std::invalid_argument("initial value or input vector has the wrong length");
  }
  if (is_peer(method) && control.N < 2) {
    throw std::invalid_argument("Peer schemes need at least N = 2 steps");
  }
}

}  // namespace

Trajectory integrate_forward(const Method& method, const LinearOde& ode, const Eigen::VectorXd& y0,
                             const DiscreteControl& control, const ForwardOptions& options) {
  check_control(method, ode, y0, control);
  const int N = control.N;
  const double h = control.h();
  Trajectory traj = empty_trajectory(ode.size(), N, control.T);
  traj.states.col(0) = y0;

  if (const auto* tab = std::get_if<IrkTableau>(&method)) {
    const IrkStepper stepper(*tab, ode, h);
    Eigen::VectorXd y = y0;
    for (int n = 0; n < N; ++n) {
      IrkStep st = stepper.step(y, control.values.row(n).transpose());
      y = std::move(st.next);
      traj.states.col(n + 1) = y;
      if (options.keep_stages) traj.stages.push_back(std::move(st.stages));
    }
    return traj;
  }

  const PeerScheme& scheme = std::get<PeerScheme>(method);
  const int s = scheme.stages();
  const PeerStepper stepper(scheme, ode, h);
  Eigen::MatrixXd window(ode.size(), s);
  if (options.peer_start == PeerStart::kExact) {
    if (!options.exact_state) {
      throw std::invalid_argument("exact Peer start requested without an exact solution");
    }
    for (int i = 0; i < s; ++i) window.col(i) = options.exact_state(scheme.c(i) * h);
  } else {
    window = stepper.bootstrap(y0, control.values.row(0).transpose());
  }
  if (options.keep_stages) traj.stages.push_back(window);
  for (int n = 1; n < N; ++n) {
    traj.states.col(n) = window.col(s - 1);
    window = stepper.step(window, control.values.row(n - 1).transpose(),
                          control.values.row(n).transpose());
    if (options.keep_stages) traj.stages.push_back(window);
  }
  traj.states.col(N) = window.col(s - 1);
  if (!traj.states.allFinite()) throw NumericalError("forward integration produced non-finite values");
  return traj;
}

AdjointResult integrate_adjoint(const Method& method, const LinearOde& ode,
                                const Eigen::VectorXd& terminal, int N, double T,
                                PeerStart peer_start, bool keep_stages) {
  if (N < 1 || !(T > 0.0)) throw std::invalid_argument("integrate_adjoint: bad grid");
  if (terminal.size() != ode.size()) {
    throw std::invalid_argument("integrate_adjoint: terminal value has the wrong length");
  }
  const int s = method_stages(method);
  const double h = T / N;
  AdjointResult out;
  out.adjoint = empty_trajectory(ode.size(), N, T);
  out.forcing_gradient = Eigen::MatrixXd::Zero(N, s);
  out.adjoint.states.col(N) = terminal;

  if (const auto* tab = std::get_if<IrkTableau>(&method)) {
    const IrkStepper stepper(*tab, ode, h);
    Eigen::VectorXd lambda = terminal;
    Eigen::VectorXd grad(s);
    if (keep_stages) out.adjoint.stages.resize(N);
    for (int n = N - 1; n >= 0; --n) {
      lambda = stepper.adjoint_step(lambda, grad, keep_stages ? &out.adjoint.stages[n] : nullptr);
      out.forcing_gradient.row(n) = grad.transpose();
      out.adjoint.states.col(n) = lambda;
    }
    out.initial_sensitivity = lambda;
    return out;
  }

  if (N < 2) throw std::invalid_argument("Peer schemes need at least N = 2 steps");
  const PeerScheme& scheme = std::get<PeerScheme>(method);
  const PeerStepper stepper(scheme, ode, h);
  Eigen::MatrixXd window_adjoint = Eigen::MatrixXd::Zero(ode.size(), s);
  window_adjoint.col(s - 1) = terminal;
  Eigen::VectorXd grad_prev(s);
  Eigen::VectorXd grad_cur(s);
  if (keep_stages) out.adjoint.stages.resize(N);
  for (int n = N - 1; n >= 1; --n) {
    if (keep_stages) out.adjoint.stages[n] = window_adjoint;
    Eigen::MatrixXd previous = Eigen::MatrixXd::Zero(ode.size(), s);
    grad_prev.setZero();
    grad_cur.setZero();
    stepper.adjoint_step(window_adjoint, previous, grad_prev, grad_cur);
    out.forcing_gradient.row(n - 1) += grad_prev.transpose();
    out.forcing_gradient.row(n) += grad_cur.transpose();
    window_adjoint = std::move(previous);
    out.adjoint.states.col(n) = window_adjoint.col(s - 1);
  }
  if (keep_stages) out.adjoint.stages[0] = window_adjoint;
  Eigen::VectorXd grad_start = Eigen::VectorXd::Zero(s);
  out.initial_sensitivity = stepper.bootstrap_adjoint(window_adjoint, grad_start);
  if (peer_start == PeerStart::kBootstrap) {
    out.forcing_gradient.row(0) += grad_start.transpose();
  }
  out.adjoint.states.col(0) = out.initial_sensitivity;
  return out;
}

}  // namespace heatoc
