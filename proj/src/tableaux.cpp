#include <cmath>
#include <cstdlib>
#include <fstream>

#include <Eigen/Dense>

#include "heatoc/errors.hpp"
#include "heatoc/integrators.hpp"

#ifndef HEATOC_DEFAULT_PEER_DIR
#define HEATOC_DEFAULT_PEER_DIR "data/peer"
#endif

namespace heatoc {
namespace {

constexpr double kTableauTolerance = 1e-13;

const IrkTableau& checked(const IrkTableau& tab) {
  const Eigen::VectorXd res = order_condition_residuals(tab);
  if (res.cwiseAbs().maxCoeff() > kTableauTolerance) {
    throw NumericalError("tableau " + tab.name + " fails its order conditions");
  }
  return tab;
}

double parse_entry(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ConfigError("coefficient entries must be numbers or strings");
  const std::string s = v.get<std::string>();
  try {
    const auto slash = s.find('/');
    if (slash == std::string::npos) return std::stod(s);
    return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
  } catch (const std::exception&) {
    throw ConfigError("cannot parse coefficient '" + s + "'");
  }
}

Eigen::VectorXd parse_vector(const nlohmann::json& v, int s, const char* field) {
  if (!v.is_array() || static_cast<int>(v.size()) != s) {
    throw ConfigError(std::string("peer scheme field '") + field + "' must have s entries");
  }
  Eigen::VectorXd out(s);
  for (int i = 0; i < s; ++i) out(i) = parse_entry(v[i]);
  return out;
}

Eigen::MatrixXd parse_matrix(const nlohmann::json& v, int s, const char* field) {
  if (!v.is_array() || static_cast<int>(v.size()) != s) {
    throw ConfigError(std::string("peer scheme field '") + field + "' must have s rows");
  }
  Eigen::MatrixXd out(s, s);
  for (int i = 0; i < s; ++i) out.row(i) = parse_vector(v[i], s, field).transpose();
  return out;
}

Eigen::MatrixXd vandermonde(const Eigen::VectorXd& c) {
  const Eigen::Index s = c.size();
  Eigen::MatrixXd V(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index k = 0; k < s; ++k) V(i, k) = std::pow(c(i), double(k));
  }
  return V;
}

}  // namespace

IrkTableau gauss2() {
  static const IrkTableau tab = [] {
    const double r = std::sqrt(3.0) / 6.0;
    IrkTableau t;
    t.name = "gauss2";
    t.A.resize(2, 2);
    t.A << 0.25, 0.25 - r, 0.25 + r, 0.25;
    t.b = Eigen::Vector2d(0.5, 0.5);
    t.c = Eigen::Vector2d(0.5 - r, 0.5 + r);
    return checked(t);
  }();
  return tab;
}

IrkTableau lobatto_iiia3() {
  static const IrkTableau tab = [] {
    IrkTableau t;
    t.name = "lobatto3a";
    t.A.resize(3, 3);
    t.A << 0.0, 0.0, 0.0, 5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0;
    t.b = Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0);
    t.c = Eigen::Vector3d(0.0, 0.5, 1.0);
    return checked(t);
  }();
  return tab;
}

IrkTableau lobatto_iiib3() {
  static const IrkTableau tab = [] {
    IrkTableau t;
    t.name = "lobatto3b";
    t.A.resize(3, 3);
    t.A << 1.0 / 6.0, -1.0 / 6.0, 0.0, 1.0 / 6.0, 1.0 / 3.0, 0.0, 1.0 / 6.0, 5.0 / 6.0, 0.0;
    t.b = Eigen::Vector3d(1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0);
    t.c = Eigen::Vector3d(0.0, 0.5, 1.0);
    return checked(t);
  }();
  return tab;
}

Eigen::VectorXd order_condition_residuals(const IrkTableau& tab) {
  const Eigen::VectorXd& b = tab.b;
  const Eigen::VectorXd& c = tab.c;
  const Eigen::MatrixXd& A = tab.A;
  const Eigen::VectorXd Ac = A * c;
  Eigen::VectorXd res(9);
  res << b.sum() - 1.0,
         b.dot(c) - 1.0 / 2.0,
         b.dot(c.cwiseAbs2()) - 1.0 / 3.0,
         b.dot(Ac) - 1.0 / 6.0,
         b.dot(c.array().cube().matrix()) - 1.0 / 4.0,
         b.dot(c.cwiseProduct(Ac)) - 1.0 / 8.0,
         b.dot(A * c.cwiseAbs2()) - 1.0 / 12.0,
         b.dot(A * Ac) - 1.0 / 24.0,
         (A.rowwise().sum() - c).cwiseAbs().maxCoeff();
  return res;
}

IrkTableau symplectic_partner(const IrkTableau& tab) {
  const int s = tab.stages();
  IrkTableau out;
  out.name = tab.name + "_partner";
  out.b = tab.b;
  out.c = tab.c;
  out.A.resize(s, s);
  for (int i = 0; i < s; ++i) {
    if (tab.b(i) == 0.0) throw std::invalid_argument("symplectic_partner: zero weight");
    for (int j = 0; j < s; ++j) {
      out.A(i, j) = tab.b(j) - tab.b(j) * tab.A(j, i) / tab.b(i);
    }
  }
  return out;
}

std::complex<double> stability_function(const IrkTableau& tab, std::complex<double> z) {
  const int s = tab.stages();
  const Eigen::MatrixXcd lhs = Eigen::MatrixXcd::Identity(s, s) - z * tab.A.cast<std::complex<double>>();
  const Eigen::VectorXcd k = lhs.partialPivLu().solve(Eigen::VectorXcd::Ones(s));
  return 1.0 + z * tab.b.cast<std::complex<double>>().dot(k);
}

void validate(const PeerScheme& scheme) {
  const int s = scheme.stages();
  if (s < 1) throw ConfigError("peer scheme has no stages");
  auto square = [s](const Eigen::MatrixXd& X) { return X.rows() == s && X.cols() == s; };
  if (!square(scheme.B) || !square(scheme.A) || !square(scheme.R) || scheme.weights.size() != s) {
    throw ConfigError("peer scheme " + scheme.name + ": inconsistent shapes");
  }
  if (scheme.formulation != "BAR") {
    throw ConfigError("peer scheme " + scheme.name + ": unsupported formulation '" +
                      scheme.formulation + "'");
  }
  for (int i = 0; i < s; ++i) {
    for (int j = i + 1; j < s; ++j) {
      if (scheme.R(i, j) != 0.0) {
        throw ConfigError("peer scheme " + scheme.name + ": R must be lower triangular");
      }
    }
  }
  if ((scheme.B.rowwise().sum() - Eigen::VectorXd::Ones(s)).cwiseAbs().maxCoeff() > 1e-13) {
    throw ConfigError("peer scheme " + scheme.name + ": B is not preconsistent");
  }
  if (std::abs(scheme.c(s - 1) - 1.0) > 1e-15) {
    throw ConfigError("peer scheme " + scheme.name + ": last node must be c_s = 1");
  }
  if (std::abs(scheme.weights.sum() - 1.0) > 1e-13) {
    throw ConfigError("peer scheme " + scheme.name + ": weights must sum to one");
  }
}

Eigen::VectorXd peer_order_residuals(const PeerScheme& scheme, int max_degree) {
  const Eigen::ArrayXd c = scheme.c.array();
  const Eigen::ArrayXd cm1 = c - 1.0;
  Eigen::VectorXd res(max_degree + 1);
  for (int k = 0; k <= max_degree; ++k) {
    Eigen::VectorXd r = c.pow(k).matrix() - scheme.B * cm1.pow(k).matrix();
    if (k > 0) {
      r -= k * (scheme.A * cm1.pow(k - 1).matrix() + scheme.R * c.pow(k - 1).matrix());
    }
    res(k) = r.cwiseAbs().maxCoeff();
  }
  return res;
}

Eigen::VectorXd interpolatory_weights(const Eigen::VectorXd& c) {
  const Eigen::Index s = c.size();
  Eigen::VectorXd moments(s);
  for (Eigen::Index k = 0; k < s; ++k) moments(k) = 1.0 / double(k + 1);
  return vandermonde(c).transpose().fullPivLu().solve(moments);
}

Eigen::MatrixXd collocation_matrix(const Eigen::VectorXd& c) {
  const Eigen::Index s = c.size();
  Eigen::MatrixXd W(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index k = 0; k < s; ++k) W(i, k) = std::pow(c(i), double(k + 1)) / double(k + 1);
  }
  // A0·V = W  ⇔  Vᵀ·A0ᵀ = Wᵀ.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(vandermonde(c).transpose());
  if (!lu.isInvertible()) throw ConfigError("collocation nodes must be distinct");
  return lu.solve(W.transpose()).transpose();
}

PeerScheme parse_peer_scheme(const nlohmann::json& doc) {
  const std::string name = doc.value("name", std::string("unnamed"));
  if (doc.value("placeholder", false)) {
    throw MissingCoefficientsError("peer scheme " + name +
                                   " is a placeholder; supply its coefficients to run it");
  }
  PeerScheme scheme;
  scheme.name = name;
  try {
    const int s = doc.at("s").get<int>();
    scheme.c = parse_vector(doc.at("c"), s, "c");
    scheme.B = parse_matrix(doc.at("B"), s, "B");
    scheme.A = parse_matrix(doc.at("A"), s, "A");
    scheme.R = parse_matrix(doc.at("R"), s, "R");
    scheme.formulation = doc.value("formulation", std::string("BAR"));
    scheme.weights = doc.contains("weights") ? parse_vector(doc.at("weights"), s, "weights")
                                             : interpolatory_weights(scheme.c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("peer scheme " + name + ": " + e.what());
  }
  validate(scheme);
  return scheme;
}

PeerScheme load_peer_scheme(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingCoefficientsError("peer coefficient file not found: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("peer coefficient file " + path + ": " + e.what());
  }
  return parse_peer_scheme(doc);
}

std::string default_peer_directory() {
  if (const char* env = std::getenv("HEATOC_PEER_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return HEATOC_DEFAULT_PEER_DIR;
}

Method resolve_method(const std::string& name, const std::string& peer_dir) {
  if (name == "gauss2") return gauss2();
  if (name == "lobatto3" || name == "lobatto3a") return lobatto_iiia3();
  return load_peer_scheme(peer_dir + "/" + name + ".json");
}

std::string method_name(const Method& method) {
  if (const auto* tab = std::get_if<IrkTableau>(&method)) {
    return tab->name == "lobatto3a" ? "lobatto3" : tab->name;
  }
  return std::get<PeerScheme>(method).name;
}

int method_stages(const Method& method) {
  return std::visit([](const auto& m) { return m.stages(); }, method);
}

const Eigen::VectorXd& method_nodes(const Method& method) {
  return std::visit([](const auto& m) -> const Eigen::VectorXd& { return m.c; }, method);
}

const Eigen::VectorXd& method_weights(const Method& method) {
  if (const auto* tab = std::get_if<IrkTableau>(&method)) return tab->b;
  return std::get<PeerScheme>(method).weights;
}

bool is_peer(const Method& method) { return std::holds_alternative<PeerScheme>(method); }

}  // namespace heatoc
