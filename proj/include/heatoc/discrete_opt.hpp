#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "heatoc/exact_oc.hpp"
#include "heatoc/integrators.hpp"

namespace heatoc {

struct OptimizerConfig {
  enum class Direction { kSteepestDescent, kConjugateGradient };

  int max_iterations = 5000;
  /// Stop when max_{n,i} |∂C_h/∂u_ni| / (h w_i) falls below this.
  double gradient_tolerance = 1e-10;
  /// First trial step of the backtracking search; empty means the minimizer
  /// of the objective along the search line.
  std::optional<double> initial_step;
  double backtracking_factor = 0.5;
  double sufficient_decrease = 1e-4;
  Direction direction = Direction::kConjugateGradient;
  /// Start from this control instead of u ≡ 0.
  std::optional<DiscreteControl> initial_control;
  PeerStart peer_start = PeerStart::kBootstrap;
  /// Recompute the gradient from scratch every this many iterations.
  int gradient_refresh = 25;
};

void validate(const OptimizerConfig& cfg);

/// The discretized control problem C_h(u) for one method and step count.
/// C_h(u) = ½‖y_h(T) − ŷ‖² + (α/2)·h·Σ_n Σ_i w_i u_ni².
class DiscreteOcProblem {
 public:
  DiscreteOcProblem(Method method, const OcProblem& prob, int N,
                    PeerStart peer_start = PeerStart::kBootstrap,
                    std::function<Eigen::VectorXd(double)> exact_state = {});

  const Method& method() const { return method_; }
  const OcProblem& problem() const { return prob_; }
  int steps() const { return N_; }
  double h() const { return prob_.T / N_; }

  DiscreteControl zero() const;
  /// h·w_i in the layout of the control values.
  const Eigen::MatrixXd& quadrature_weights() const { return weights_; }

  Trajectory forward(const DiscreteControl& u, bool keep_stages = false) const;
  Eigen::VectorXd terminal_state(const DiscreteControl& u) const;
  double objective(const DiscreteControl& u) const;
  /// ∂C_h/∂u_ni.
  Eigen::MatrixXd gradient(const DiscreteControl& u) const;

  /// J·d: response of y_h(T) to the control direction d with zero initial data.
  Eigen::VectorXd linear_response(const Eigen::MatrixXd& d) const;
  /// Jᵀ·r as an N×s array.
  Eigen::MatrixXd transpose_response(const Eigen::VectorXd& r) const;

 private:
  Method method_;
  const OcProblem& prob_;
  int N_;
  PeerStart peer_start_;
  std::function<Eigen::VectorXd(double)> exact_state_;
  LinearOde ode_;
  Eigen::MatrixXd weights_;
};

double discrete_objective(const Method& method, const OcProblem& prob, const DiscreteControl& u,
                          PeerStart peer_start = PeerStart::kBootstrap);

DiscreteControl discrete_gradient(const Method& method, const OcProblem& prob,
                                  const DiscreteControl& u,
                                  PeerStart peer_start = PeerStart::kBootstrap);

struct IterationRecord {
  int iteration;
  double objective;
  double gradient_norm;
  double step;
};

struct OptimizationResult {
  DiscreteControl control;
  double objective = 0.0;
  double gradient_norm = 0.0;
  std::vector<IterationRecord> history;
  int iterations = 0;
  bool converged = false;
  Trajectory state;
  AdjointResult adjoint;
  /// max_{n,i} |u(t_ni) − u_h(t_ni)| when an exact control was supplied.
  std::optional<double> control_error;
};

/// Gradient method with Armijo backtracking on C_h.  The default direction
/// is preconditioned nonlinear conjugate gradients (Polak–Ribière+) in the
/// metric of the quadrature weights; steepest descent is the same loop with
/// the conjugation switched off.  Hitting the iteration cap returns a result
/// with converged = false.
OptimizationResult optimize(const Method& method, const OcProblem& prob, const OptimizerConfig& cfg,
                            int N, const std::optional<ExpSumFunction>& exact_control = std::nullopt);

/// max_{n,i} |u(t_ni) − u_ni|.
double max_node_error(const DiscreteControl& u, const std::function<double(double)>& exact);

}  // namespace heatoc
