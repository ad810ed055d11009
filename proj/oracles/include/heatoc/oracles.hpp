#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatoc/discrete_opt.hpp"
#include "heatoc/exact_oc.hpp"
#include "heatoc/heat_mol.hpp"
#include "heatoc/integrators.hpp"
#include "heatoc/spectrum.hpp"

// Brute-force reference computations.  Everything here works on dense
// matrices and deliberately avoids the modal formulas of the library so the
// two can be compared.
namespace heatoc::oracle {

Eigen::MatrixXd dense_matrix(const MolSystem& sys);

/// e^{A} by scaling and squaring (Padé).
Eigen::MatrixXd expm(const Eigen::MatrixXd& A);

/// Gauss–Legendre nodes and weights on [0, 1] (Golub–Welsch).
struct GaussRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussRule gauss_legendre(int n);

/// Adaptive Gauss–Legendre quadrature of a vector-valued integrand; panels
/// are bisected until a 10-point rule and its two halves agree to `tol`
/// times max(1, size of the integral).
Eigen::VectorXd integrate(const std::function<Eigen::VectorXd(double)>& f, double a, double b,
                          double tol = 1e-13);

struct SpectrumCheck {
  double eigenvalue_error = 0.0;  // vs. dense symmetric eigensolver
  double residual = 0.0;          // max_k ‖Mv_k − λ_k v_k‖_∞
  double orthogonality = 0.0;     // ‖VᵀV − I‖_max
};
SpectrumCheck check_spectrum(const MolSystem& sys, const SpectralDecomposition& dec);

/// y(t) = e^{tM}ψ + ∫₀ᵗ e^{(t−s)M} γe_m u(s) ds.
Eigen::VectorXd ivp(const MolSystem& sys, const std::function<double(double)>& u, double t);

/// e^{(T−t)M} p_T.
Eigen::VectorXd adjoint(const MolSystem& sys, double T, const Eigen::VectorXd& p_T, double t);

struct BvpSolution {
  Eigen::VectorXd y_T;
  Eigen::VectorXd p_T;
};

/// Shooting on the terminal multiplier: y(T) depends affinely on p(T); the
/// response matrix ∫₀ᵀ e^{τM} e_m e_mᵀ e^{τM} dτ is assembled column by
/// column with matrix exponentials and quadrature, then p(T) = y(T) − ŷ is
/// solved densely.
BvpSolution shooting(const OcProblem& prob);

/// One implicit Runge–Kutta step solved as one dense (ms)×(ms) system.
Eigen::VectorXd irk_step(const IrkTableau& tab, const Eigen::MatrixXd& M,
                         const Eigen::VectorXd& input, double h, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& forcing);

/// Forward integration with dense stage systems; Peer windows included.
Trajectory forward(const Method& method, const MolSystem& sys, const DiscreteControl& control,
                   const ForwardOptions& options = {});

/// Central finite differences of f along the given coordinates (n, i) of u.
std::vector<double> finite_difference_gradient(
    const std::function<double(const DiscreteControl&)>& f, const DiscreteControl& u,
    const std::vector<std::pair<int, int>>& coordinates, double step);

/// Minimizer of the discrete objective from the normal equations
/// (JᵀJ + αW)u = −Jᵀ(y_free(T) − ŷ), J assembled column by column with the
/// dense forward oracle.  Peer schemes use the self-starting first window.
DiscreteControl normal_equations(const Method& method, const OcProblem& prob, int N);

/// A random controlled heat system for oracle comparisons: Robin data from
/// the four standard families or drawn at random, a random sampled initial
/// profile and a random exponential-sum control on [0, T].
struct RandomInstance {
  MolSystem sys;
  ExpSumFunction control;
  double T;
};
RandomInstance random_instance(std::mt19937_64& rng, int m);

/// Runs the desk-scale (m ≤ 12) oracle comparisons, one CSV row per check
/// (`check,value,tolerance,status`).  Returns false on any mismatch.
bool run_verify(std::ostream& out, const std::string& peer_dir = default_peer_directory());

}  // namespace heatoc::oracle
