#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "heatoc/heat_mol.hpp"
#include "heatoc/tridiagonal.hpp"
#include "json.hpp"

namespace heatoc {

// ---------------------------------------------------------------------------
// Coefficient sets

/// Implicit Runge–Kutta tableau (A, b, c).
struct IrkTableau {
  std::string name;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;

  int stages() const { return static_cast<int>(b.size()); }
};

/// 2-stage Gauss (order 4, self-adjoint).
IrkTableau gauss2();
/// 3-stage Lobatto IIIA, the state half of the Lobatto IIIA–IIIB pair.
IrkTableau lobatto_iiia3();
/// 3-stage Lobatto IIIB, the adjoint half of the pair.
IrkTableau lobatto_iiib3();

/// Residuals of the eight Runge–Kutta order conditions up to order 4
/// (Σb−1, Σbc−1/2, Σbc²−1/3, ΣbAc−1/6, Σbc³−1/4, Σbc·Ac−1/8, ΣbAc²−1/12,
/// ΣbAAc−1/24) and of the row-sum condition c = A·𝟙 (last entry).
Eigen::VectorXd order_condition_residuals(const IrkTableau& tab);

/// The partner tableau Â_ij = b_j − b_j A_ji / b_i that makes (A, Â) a
/// symplectic partitioned pair.  Requires all b_i ≠ 0.
IrkTableau symplectic_partner(const IrkTableau& tab);

/// R(z) = 1 + z bᵀ(I − zA)⁻¹𝟙.
std::complex<double> stability_function(const IrkTableau& tab, std::complex<double> z);

/// Implicit Peer two-step scheme in the form
///   Y_n = (B⊗I) Y_{n−1} + h (A⊗I) F(Y_{n−1}) + h (R⊗I) F(Y_n),
/// stage i of window n sitting at t_n + c_i h.  R is lower triangular and
/// c_s = 1, so the last stage of the final window is y(T).
struct PeerScheme {
  std::string name;
  Eigen::MatrixXd B;
  Eigen::MatrixXd A;
  Eigen::MatrixXd R;
  Eigen::VectorXd c;
  /// Quadrature weights on one window for the control cost, Σ w = 1.
  Eigen::VectorXd weights;
  std::string formulation = "BAR";

  int stages() const { return static_cast<int>(c.size()); }
};

/// Throws ConfigError if R is not lower triangular, B𝟙 ≠ 𝟙 (to 1e-13),
/// c_s ≠ 1, weights do not sum to one, or shapes disagree.
void validate(const PeerScheme& scheme);

/// For k = 0..max_degree, the max-norm residual of the exactness condition
///   c^k = B (c − 𝟙)^k + k A (c − 𝟙)^{k−1} + k R c^{k−1}.
Eigen::VectorXd peer_order_residuals(const PeerScheme& scheme, int max_degree);

/// Parses {name, s, c, B, A, R, formulation, [weights]}.  Entries may be JSON
/// numbers or strings holding decimals or rationals "p/q".  A document with
/// "placeholder": true raises MissingCoefficientsError.
PeerScheme parse_peer_scheme(const nlohmann::json& doc);
PeerScheme load_peer_scheme(const std::string& path);

/// Interpolatory quadrature weights on [0, 1] for the nodes c.
Eigen::VectorXd interpolatory_weights(const Eigen::VectorXd& c);

/// Collocation matrix A0_ij = ∫₀^{c_i} ℓ_j(τ) dτ for distinct nodes c.  Used as
/// the self-starting first window of a Peer scheme.
Eigen::MatrixXd collocation_matrix(const Eigen::VectorXd& c);

// ---------------------------------------------------------------------------
// Methods and grids

using Method = std::variant<IrkTableau, PeerScheme>;

std::string method_name(const Method& method);
int method_stages(const Method& method);
const Eigen::VectorXd& method_nodes(const Method& method);
/// b for Runge–Kutta methods, the window weights for Peer schemes.
const Eigen::VectorXd& method_weights(const Method& method);
bool is_peer(const Method& method);

/// Directory holding Peer coefficient files: $HEATOC_PEER_DIR if set, else
/// the data directory of the source tree.
std::string default_peer_directory();

/// "gauss2", "lobatto3" (the Lobatto IIIA–IIIB pair) or the name of a Peer
/// coefficient file <dir>/<name>.json.
Method resolve_method(const std::string& name, const std::string& peer_dir = default_peer_directory());

/// y' = M y + g(t)·input.
struct LinearOde {
  Tridiagonal<double> matrix;
  Eigen::VectorXd input;

  Eigen::Index size() const { return matrix.size(); }
};

LinearOde make_ode(const MolSystem& sys);

/// Scalar forcing values at the nodes t_ni = t_n + c_i h, n = 0..N−1.
struct DiscreteControl {
  int N = 0;
  double T = 1.0;
  Eigen::VectorXd c;
  /// N × s.
  Eigen::MatrixXd values;

  double h() const { return T / N; }
  double node(int n, int i) const { return (n + c(i)) * h(); }
};

DiscreteControl zero_control(const Method& method, int N, double T);
DiscreteControl sample_control(const Method& method, int N, double T,
                               const std::function<double(double)>& u);

struct Trajectory {
  Eigen::VectorXd times;
  /// m × (N+1); column n approximates the solution at t_n.
  Eigen::MatrixXd states;
  /// Optional per-step stage values (m × s each), in step order.
  std::vector<Eigen::MatrixXd> stages;

  Eigen::VectorXd final_state() const { return states.col(states.cols() - 1); }
};

// ---------------------------------------------------------------------------
// Stage solvers

/// Solves (I − h·C⊗M) X = Rhs for a fixed s×s coefficient matrix C by
/// diagonalizing C = S·D·S⁻¹ over ℂ.  Each eigenvalue d_k gives one complex
/// shifted tridiagonal solve with (I − h d_k M); d_k = 0 needs no solve.
/// Blocks are the columns of the m×s matrices X and Rhs.
class KroneckerStageSolver {
 public:
  KroneckerStageSolver(const Eigen::MatrixXd& C, double h, const Tridiagonal<double>& M);

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

 private:
  Eigen::MatrixXcd S_;
  Eigen::MatrixXcd S_inv_transposed_;
  std::vector<std::optional<ShiftedTridiagonalSolver<std::complex<double>>>> solvers_;
};

struct IrkStep {
  Eigen::VectorXd next;
  /// Stage values Y_i = y_n + h Σ_j A_ij K_j, m × s.
  Eigen::MatrixXd stages;
};

/// One Runge–Kutta step of fixed size h.  Factorizations are made once.
class IrkStepper {
 public:
  IrkStepper(const IrkTableau& tab, const LinearOde& ode, double h);

  const IrkTableau& tableau() const { return tab_; }
  double h() const { return h_; }

  /// forcing(i) = g(t_n + c_i h).
  IrkStep step(const Eigen::VectorXd& y, const Eigen::Ref<const Eigen::VectorXd>& forcing) const;

  /// Transpose of `step`: given ∂J/∂y_{n+1}, returns ∂J/∂y_n and writes
  /// ∂J/∂g_i into `forcing_gradient`.  stage_adjoint (optional) receives the
  /// stage multipliers κ_i/(h b_i).
  Eigen::VectorXd adjoint_step(const Eigen::VectorXd& lambda_next,
                               Eigen::Ref<Eigen::VectorXd> forcing_gradient,
                               Eigen::MatrixXd* stage_adjoint = nullptr) const;

 private:
  IrkTableau tab_;
  LinearOde ode_;
  double h_;
  KroneckerStageSolver forward_;
  KroneckerStageSolver transposed_;
};

IrkStep irk_step(const IrkTableau& tab, const LinearOde& ode, double t_n, double h,
                 const Eigen::VectorXd& y_n, const std::function<double(double)>& g);

/// One Peer step (window n−1 → n) and its transpose.
class PeerStepper {
 public:
  PeerStepper(const PeerScheme& scheme, const LinearOde& ode, double h);

  const PeerScheme& scheme() const { return scheme_; }

  /// previous: m×s window Y_{n−1}; forcing rows are g at the nodes of the
  /// previous and the new window.
  Eigen::MatrixXd step(const Eigen::MatrixXd& previous,
                       const Eigen::Ref<const Eigen::VectorXd>& previous_forcing,
                       const Eigen::Ref<const Eigen::VectorXd>& forcing) const;

  /// Given ∂J/∂Y_n (m×s), adds the contributions to ∂J/∂Y_{n−1} and to the
  /// forcing gradients of both windows.
  void adjoint_step(const Eigen::MatrixXd& window_adjoint, Eigen::MatrixXd& previous_adjoint,
                    Eigen::Ref<Eigen::VectorXd> previous_forcing_gradient,
                    Eigen::Ref<Eigen::VectorXd> forcing_gradient) const;

  /// Self-starting first window from y(0) by collocation on the nodes c.
  Eigen::MatrixXd bootstrap(const Eigen::VectorXd& y0,
                            const Eigen::Ref<const Eigen::VectorXd>& forcing) const;

  /// Transpose of `bootstrap`; returns ∂J/∂y(0) and adds ∂J/∂g_0i.
  Eigen::VectorXd bootstrap_adjoint(const Eigen::MatrixXd& window_adjoint,
                                    Eigen::Ref<Eigen::VectorXd> forcing_gradient) const;

 private:
  PeerScheme scheme_;
  LinearOde ode_;
  double h_;
  std::vector<std::optional<ShiftedTridiagonalSolver<double>>> stage_solvers_;
  KroneckerStageSolver start_;
  KroneckerStageSolver start_transposed_;
  Eigen::MatrixXd start_matrix_;
};

Eigen::MatrixXd peer_step(const PeerScheme& scheme, const LinearOde& ode, double t_n, double h,
                          const Eigen::MatrixXd& previous, const std::function<double(double)>& g);

// ---------------------------------------------------------------------------
// Trajectories

enum class PeerStart {
  /// First window from the exact solution (ForwardOptions::exact_state).
  kExact,
  /// First window by collocation from y(0); depends on the window-0 controls.
  kBootstrap,
};

struct ForwardOptions {
  PeerStart peer_start = PeerStart::kExact;
  std::function<Eigen::VectorXd(double)> exact_state;
  bool keep_stages = false;
};

/// Uniform-step integration of y' = My + g·input from y(0) = y0 over the
/// grid of `control`.
Trajectory integrate_forward(const Method& method, const LinearOde& ode, const Eigen::VectorXd& y0,
                             const DiscreteControl& control, const ForwardOptions& options = {});

struct AdjointResult {
  /// Column n is the discrete multiplier at t_n (for Peer schemes: the
  /// sensitivity with respect to the stage at t_n); column 0 is p_h(0).
  Trajectory adjoint;
  /// N × s; ∂⟨terminal, y_N⟩/∂g_ni.
  Eigen::MatrixXd forcing_gradient;
  /// ∂⟨terminal, y_N⟩/∂y(0), the discrete approximation of p(0).
  Eigen::VectorXd initial_sensitivity;
};

/// Backward sweep for p' = −Mp, p(T) = terminal, as the exact transpose of
/// the forward scheme.  For Lobatto IIIA this is the IIIB half of the pair,
/// Gauss reproduces itself.  Peer schemes close the sweep through the
/// transposed self-starting window when peer_start is kBootstrap; with kExact
/// the window-0 controls only see the A-coupling and p_h(0) is still taken
/// through the bootstrap window.
AdjointResult integrate_adjoint(const Method& method, const LinearOde& ode,
                                const Eigen::VectorXd& terminal, int N, double T,
                                PeerStart peer_start = PeerStart::kBootstrap,
                                bool keep_stages = false);

}  // namespace heatoc
