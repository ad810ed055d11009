#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "heatoc/heat_mol.hpp"
#include "heatoc/spectrum.hpp"

namespace heatoc {

/// φ₁(z) = (eᶻ − 1)/z with φ₁(0) = 1.  A Taylor polynomial is used for
/// |z| < 1e-4.
double phi1(double z);

/// A scalar function of time u(t) = Σ_ℓ c_ℓ·exp(μ_ℓ·(T − t)).
class ExpSumFunction {
 public:
  struct Term {
    double coefficient;
    double rate;
  };

  ExpSumFunction() = default;
  explicit ExpSumFunction(double horizon, std::vector<Term> terms = {});

  double operator()(double t) const;
  double horizon() const { return horizon_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  /// ∫₀ᵀ u(t)² dt in closed form.
  double integral_of_square() const;

  ExpSumFunction& operator+=(const ExpSumFunction& other);
  ExpSumFunction& operator*=(double scale);

 private:
  double horizon_ = 0.0;
  std::vector<Term> terms_;
};

ExpSumFunction operator+(ExpSumFunction lhs, const ExpSumFunction& rhs);
ExpSumFunction operator*(double scale, ExpSumFunction f);

/// min ½‖y(T) − ŷ‖² + (α/2)∫₀ᵀ u² subject to y' = My + γe_m u, y(0) = ψ.
struct OcProblem {
  MolSystem sys;
  SpectralDecomposition dec;
  double T = 1.0;
  double alpha = 1.0;
  Eigen::VectorXd target;
};

OcProblem make_problem(MolSystem sys, double T, double alpha, Eigen::VectorXd target);
OcProblem make_problem(MolSystem sys, SpectralDecomposition dec, double T, double alpha,
                       Eigen::VectorXd target);

struct ExactOcSolution {
  /// Modal coefficients η(T) of y(T) = Vη(T).
  Eigen::VectorXd eta_T;
  Eigen::VectorXd y_T;
  /// p(T) = y(T) − ŷ.
  Eigen::VectorXd p_T;
  /// The optimal control u = −(γ/α)·p_m(t).
  ExpSumFunction control;
  Eigen::MatrixXd Q;
  /// Spectral condition number of I + Q when it was factored.
  std::optional<double> condition_number;
};

/// y(t) for y' = My + γe_m u, y(0) = ψ with u given as an exponential sum.
/// The convolution in each mode is evaluated as c·t·e^{μ(T−t)}·φ₁((λ_k+μ)t).
Eigen::VectorXd solve_ivp_exact(const MolSystem& sys, const SpectralDecomposition& dec,
                                const ExpSumFunction& control, double t);

/// p(t) = e^{(T−t)M}·p_T, evaluated modally.
Eigen::VectorXd adjoint_exact(const SpectralDecomposition& dec, double T,
                              const Eigen::Ref<const Eigen::VectorXd>& p_T, double t);

/// p_m(t) as an exponential sum: Σ_ℓ v_m^[ℓ]⟨v^[ℓ], p_T⟩ e^{λ_ℓ(T−t)}.
ExpSumFunction adjoint_boundary_component(const SpectralDecomposition& dec, double T,
                                          const Eigen::Ref<const Eigen::VectorXd>& p_T);

/// q_kℓ = (γ²T/α)·v_m^[k]·φ₁((λ_k+λ_ℓ)T)·v_m^[ℓ].
Eigen::MatrixXd build_Q(const OcProblem& prob);

/// Solves (I + Q)η(T) = e^{TΛ}η(0) + QVᵀŷ by Cholesky and assembles p(T)
/// and the optimal control.
ExactOcSolution solve_terminal(const OcProblem& prob);

struct ModeWeight {
  int mode;  // 1-based mode index ℓ
  double delta;
};

struct SparseTarget {
  Eigen::VectorXd target;
  ExactOcSolution exact;
};

/// Builds the target ŷ for which the optimal multiplier is
/// p(t) = Σ δ_ℓ e^{λ_ℓ(T−t)} v^[ℓ] and returns it with the exact solution.
SparseTarget sparse_target(const MolSystem& sys, const SpectralDecomposition& dec, double T,
                           double alpha, std::span<const ModeWeight> deltas);

/// C = ½‖y_T − ŷ‖² + (α/2)·Σ_i w_i u_i².  The weights carry the quadrature
/// rule of the control grid.
double objective(const OcProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& y_T,
                 const Eigen::Ref<const Eigen::VectorXd>& control_samples,
                 const Eigen::Ref<const Eigen::VectorXd>& quadrature_weights);

/// C with the control integral evaluated in closed form.
double objective(const OcProblem& prob, const Eigen::Ref<const Eigen::VectorXd>& y_T,
                 const ExpSumFunction& control);

}  // namespace heatoc
