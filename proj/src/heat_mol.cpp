#include "heatoc/heat_mol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "heatoc/errors.hpp"

namespace heatoc {

void validate(const RobinBC& bc) {
  if (!(bc.beta0 >= 0.0) || !(bc.beta1 >= 0.0) || !std::isfinite(bc.beta0) ||
      !std::isfinite(bc.beta1)) {
    throw ConfigError("Robin coefficients must be finite and nonnegative");
  }
  if (bc.beta0 == 0.0 && bc.beta1 == 0.0) {
    throw ConfigError("degenerate boundary condition: beta0 = beta1 = 0");
  }
}

RobinCoefficients robin_coefficients(const RobinBC& bc, int m) {
  validate(bc);
  if (m < 2) {
    throw ConfigError("the MOL system needs m >= 2 grid points");
  }
  const double xi = 1.0 / m;
  const double denom = 2.0 * bc.beta1 + bc.beta0 * xi;
  RobinCoefficients out;
  // Written as 3 − 4β₁/denom so θ is exactly 3 for β₁ = 0 and exactly 1 for β₀ = 0.
  out.theta = bc.beta1 == 0.0 ? 3.0 : (bc.beta0 == 0.0 ? 1.0 : 3.0 - 4.0 * bc.beta1 / denom);
  out.gamma = 2.0 / (denom * xi);
  return out;
}

Profile ones_profile() {
  return [](double) { return 1.0; };
}

Eigen::VectorXd MolSystem::input_vector() const {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b(m - 1) = gamma;
  return b;
}

MolSystem build_system(const RobinBC& bc, int m, const Profile& initial_profile) {
  const RobinCoefficients coeff = robin_coefficients(bc, m);
  if (!initial_profile) {
    throw ConfigError("initial profile is empty");
  }
  MolSystem sys;
  sys.m = m;
  sys.xi = 1.0 / m;
  sys.bc = bc;
  sys.theta = coeff.theta;
  sys.gamma = coeff.gamma;
  sys.grid.resize(m);
  sys.psi.resize(m);
  for (int j = 0; j < m; ++j) {
    sys.grid(j) = (j + 0.5) * sys.xi;
    sys.psi(j) = initial_profile(sys.grid(j));
  }

  const double inv_xi2 = double(m) * double(m);
  sys.matrix.lower = Eigen::VectorXd::Constant(m - 1, inv_xi2);
  sys.matrix.upper = sys.matrix.lower;
  sys.matrix.diagonal = Eigen::VectorXd::Constant(m, -2.0 * inv_xi2);
  sys.matrix.diagonal(0) = -inv_xi2;
  sys.matrix.diagonal(m - 1) = -sys.theta * inv_xi2;
  return sys;
}

Eigen::VectorXd apply_matrix(const MolSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != sys.m) {
    throw std::invalid_argument("apply_matrix: vector length differs from m");
  }
  return multiply(sys.matrix, v);
}

Profile sampled_profile(std::vector<double> samples) {
  if (samples.empty()) {
    throw ConfigError("profile samples are empty");
  }
  return [s = std::move(samples)](double x) {
    if (s.size() == 1) return s.front();
    const double pos = std::clamp(x, 0.0, 1.0) * double(s.size() - 1);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), s.size() - 2);
    const double frac = pos - double(i);
    return (1.0 - frac) * s[i] + frac * s[i + 1];
  };
}

ProblemDefinition parse_problem(const nlohmann::json& doc) {
  ProblemDefinition def;
  try {
    def.m = doc.at("m").get<int>();
    def.bc.beta0 = doc.value("beta0", 1.0);
    def.bc.beta1 = doc.value("beta1", 0.0);
    const nlohmann::json profile = doc.value("profile", nlohmann::json("ones"));
    if (profile.is_string()) {
      if (profile.get<std::string>() != "ones") {
        throw ConfigError("unknown profile '" + profile.get<std::string>() + "'");
      }
      def.profile = ones_profile();
      def.profile_label = "ones";
    } else if (profile.is_object() && profile.contains("samples")) {
      def.profile = sampled_profile(profile.at("samples").get<std::vector<double>>());
      def.profile_label = "samples";
    } else {
      throw ConfigError("profile must be \"ones\" or {\"samples\": [...]}");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("problem definition: ") + e.what());
  }
  validate(def.bc);
  if (def.m < 2) {
    throw ConfigError("problem definition: m must be >= 2");
  }
  return def;
}

ProblemDefinition load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open problem file " + path);
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("problem file " + path + ": " + e.what());
  }
  return parse_problem(doc);
}

}  // namespace heatoc
