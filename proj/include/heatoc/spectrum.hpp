#pragma once

#include <Eigen/Core>

#include "heatoc/heat_mol.hpp"

namespace heatoc {

/// Frequencies ω_1 < … < ω_m of the closed-form eigenvectors of M.
struct FrequencySet {
  Eigen::VectorXd omegas;
  int m = 0;
  RobinBC bc;
  /// Number of frequencies that needed the bisection fallback.
  int bisection_fallbacks = 0;
};

/// Solves tan(ω)·tan(ω/(2m)) = β₀/(2mβ₁) for its m smallest nonnegative
/// roots.  Dirichlet and Neumann use the closed forms (k − ½)π and (k − 1)π.
/// Otherwise each ω_k is found by the fixed-point map
///   ω ← (k−1)π + arctan(β₀/(2mβ₁) · cot(ω/(2m)))
/// started at max{1, (k−1)π}; if an iterate leaves ((k−1)π, (k−½)π] or 200
/// iterations do not converge, bisection on the same bracket takes over.
FrequencySet solve_frequencies(const MolSystem& sys);

/// tan(ω)·tan(ω/(2m)) − β₀/(2mβ₁); only meaningful for β₁ > 0.
double frequency_residual(const RobinBC& bc, int m, double omega);

/// M = V·diag(λ)·Vᵀ with λ_k = −4m² sin²(ω_k/(2m)) and
/// v_j^[k] = ν_k cos(ω_k (2j−1)/(2m)).
struct SpectralDecomposition {
  Eigen::VectorXd omegas;
  Eigen::VectorXd lambdas;
  Eigen::VectorXd nus;
  Eigen::MatrixXd vectors;

  Eigen::Index size() const { return lambdas.size(); }
  /// Row of V at the boundary node, (v_m^[k])_k.
  Eigen::VectorXd boundary_row() const { return vectors.row(vectors.rows() - 1).transpose(); }
};

SpectralDecomposition decompose(const MolSystem& sys, const FrequencySet& freqs);
SpectralDecomposition decompose(const MolSystem& sys);

/// Vᵀw.
Eigen::VectorXd to_modal(const SpectralDecomposition& dec, const Eigen::Ref<const Eigen::VectorXd>& w);
/// Vη.
Eigen::VectorXd from_modal(const SpectralDecomposition& dec,
                           const Eigen::Ref<const Eigen::VectorXd>& eta);

}  // namespace heatoc
