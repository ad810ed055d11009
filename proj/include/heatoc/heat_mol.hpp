#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "heatoc/tridiagonal.hpp"

namespace heatoc {

/// Robin condition β₀·Y(1,t) + β₁·∂ₓY(1,t) = u(t) at the right end.
struct RobinBC {
  double beta0 = 1.0;
  double beta1 = 0.0;

  static RobinBC dirichlet() { return {1.0, 0.0}; }
  static RobinBC neumann() { return {0.0, 1.0}; }

  bool is_dirichlet() const { return beta1 == 0.0; }
  bool is_neumann() const { return beta0 == 0.0; }
};

/// Throws ConfigError unless β₀, β₁ ≥ 0 and not both zero.
void validate(const RobinBC& bc);

struct RobinCoefficients {
  double theta;
  double gamma;
};

/// Coefficients of the last MOL row after eliminating the ghost node x_{m+1}:
/// y_m' = (y_{m−1} − θ y_m)/ξ² + γ u.
RobinCoefficients robin_coefficients(const RobinBC& bc, int m);

using Profile = std::function<double(double)>;

/// Ψ ≡ 1.
Profile ones_profile();

/// Semi-discrete heat system y' = M y + γ e_m u(t), y(0) = ψ on the shifted
/// grid x_j = (j − ½)ξ.  Immutable once built.
struct MolSystem {
  int m = 0;
  double xi = 0.0;
  RobinBC bc;
  double theta = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd grid;
  Eigen::VectorXd psi;
  Tridiagonal<double> matrix;

  /// γ·e_m, the input direction of the boundary control.
  Eigen::VectorXd input_vector() const;
};

MolSystem build_system(const RobinBC& bc, int m, const Profile& initial_profile = ones_profile());

/// M·v in O(m).
Eigen::VectorXd apply_matrix(const MolSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& v);

/// A problem definition as read from JSON:
///   {"m": 250, "beta0": 1, "beta1": 0, "profile": "ones"}
///   {"m": 8, "beta0": 1, "beta1": 1, "profile": {"samples": [..]}}
/// Samples are values of Ψ on equispaced points of [0, 1] (first at 0, last
/// at 1) and are interpolated piecewise linearly onto the grid.
struct ProblemDefinition {
  int m = 0;
  RobinBC bc;
  Profile profile;
  std::string profile_label;

  MolSystem build() const { return build_system(bc, m, profile); }
};

ProblemDefinition parse_problem(const nlohmann::json& doc);
ProblemDefinition load_problem(const std::string& path);

/// Piecewise-linear profile through equispaced samples on [0, 1].
Profile sampled_profile(std::vector<double> samples);

}  // namespace heatoc
