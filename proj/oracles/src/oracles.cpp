#include "heatoc/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "heatoc/bench.hpp"
#include "heatoc/errors.hpp"

namespace heatoc::oracle {
namespace {

// The right boundary row straight from the ghost node: the Robin condition on
// (y_m + y_{m+1})/2 and (y_{m+1} − y_m)/ξ is solved for y_{m+1}.
struct GhostRow {
  double diagonal;  // coefficient of y_m in ξ²·y_m'
  double input;     // coefficient of u in y_m'
};

GhostRow ghost_row(const RobinBC& bc, int m) {
  const double xi = 1.0 / m;
  const double a = bc.beta0 / 2.0 + bc.beta1 / xi;  // multiplies y_{m+1}
  const double b = bc.beta0 / 2.0 - bc.beta1 / xi;  // multiplies y_m
  return {-2.0 - b / a, 1.0 / (a * xi * xi)};
}

Eigen::VectorXd dense_input(const MolSystem& sys) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(sys.m);
  e(sys.m - 1) = ghost_row(sys.bc, sys.m).input;
  return e;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& C, const Eigen::MatrixXd& M) {
  Eigen::MatrixXd out(C.rows() * M.rows(), C.cols() * M.cols());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      out.block(i * M.rows(), j * M.cols(), M.rows(), M.cols()) = C(i, j) * M;
    }
  }
  return out;
}

Eigen::VectorXd stack(const Eigen::MatrixXd& X) {
  return Eigen::Map<const Eigen::VectorXd>(X.data(), X.size());
}

Eigen::MatrixXd unstack(const Eigen::VectorXd& v, Eigen::Index rows) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, v.size() / rows);
}

// A0_ij = ∫₀^{c_i} ℓ_j(τ) dτ with Lagrange polynomials ℓ_j on the nodes c.
Eigen::MatrixXd collocation(const Eigen::VectorXd& c) {
  const Eigen::Index s = c.size();
  const GaussRule rule = gauss_legendre(int(s) + 2);
  Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) {
      for (Eigen::Index q = 0; q < rule.nodes.size(); ++q) {
        const double tau = c(i) * rule.nodes(q);
        double l = 1.0;
        for (Eigen::Index k = 0; k < s; ++k) {
          if (k != j) l *= (tau - c(k)) / (c(j) - c(k));
        }
        A0(i, j) += c(i) * rule.weights(q) * l;
      }
    }
  }
  return A0;
}

Eigen::VectorXd integrate_panel(const std::function<Eigen::VectorXd(double)>& f, double a,
                                double b, const GaussRule& rule) {
  Eigen::VectorXd sum;
  for (Eigen::Index q = 0; q < rule.nodes.size(); ++q) {
    const Eigen::VectorXd v = f(a + (b - a) * rule.nodes(q));
    if (q == 0) sum = Eigen::VectorXd::Zero(v.size());
    sum += rule.weights(q) * v;
  }
  return (b - a) * sum;
}

Eigen::VectorXd integrate_adaptive(const std::function<Eigen::VectorXd(double)>& f, double a,
                                   double b, double tol, const Eigen::VectorXd& whole,
                                   const GaussRule& rule, int depth) {
  const double mid = 0.5 * (a + b);
  const Eigen::VectorXd left = integrate_panel(f, a, mid, rule);
  const Eigen::VectorXd right = integrate_panel(f, mid, b, rule);
  const Eigen::VectorXd halves = left + right;
  // A panel whose two estimates agree to rounding cannot be improved by
  // further bisection.
  const double err = (halves - whole).cwiseAbs().maxCoeff();
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * halves.cwiseAbs().maxCoeff();
  if (err <= tol || err <= noise || depth >= 30) return halves;
  return integrate_adaptive(f, a, mid, 0.5 * tol, left, rule, depth + 1) +
         integrate_adaptive(f, mid, b, 0.5 * tol, right, rule, depth + 1);
}

class Report {
 public:
  explicit Report(std::ostream& out) : out_(out) { out_ << "check,value,tolerance,status\n"; }

  void add(const std::string& check, double value, double tolerance) {
    const bool ok = std::isfinite(value) && value <= tolerance;
    ok_ = ok_ && ok;
    out_ << check << ',' << format_number(value) << ',' << format_number(tolerance) << ','
         << (ok ? "ok" : "MISMATCH") << '\n';
  }
  void skip(const std::string& check, const std::string& why) {
    out_ << check << ",,,skipped (" << why << ")\n";
  }
  bool ok() const { return ok_; }

 private:
  std::ostream& out_;
  bool ok_ = true;
};

double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

Eigen::MatrixXd dense_matrix(const MolSystem& sys) {
  const int m = sys.m;
  const double scale = double(m) * m;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
  for (int j = 0; j < m; ++j) {
    M(j, j) = -2.0 * scale;
    if (j > 0) M(j, j - 1) = scale;
    if (j + 1 < m) M(j, j + 1) = scale;
  }
  // Homogeneous Neumann condition at x = 0: y_0 = y_1.
  M(0, 0) += scale;
  M(m - 1, m - 1) = ghost_row(sys.bc, m).diagonal * scale;
  return M;
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& A) { return A.exp(); }

GaussRule gauss_legendre(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule rule;
  rule.nodes = 0.5 * (es.eigenvalues().array() + 1.0);
  rule.weights = es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

Eigen::VectorXd integrate(const std::function<Eigen::VectorXd(double)>& f, double a, double b,
                          double tol) {
  static const GaussRule rule = gauss_legendre(10);
  if (a == b) return Eigen::VectorXd::Zero(f(a).size());
  const Eigen::VectorXd whole = integrate_panel(f, a, b, rule);
  // tol is relative to the size of the integral (or 1 if that is smaller).
  const double scale = std::max(1.0, whole.cwiseAbs().maxCoeff());
  return integrate_adaptive(f, a, b, tol * scale, whole, rule, 0);
}

SpectrumCheck check_spectrum(const MolSystem& sys, const SpectralDecomposition& dec) {
  const Eigen::MatrixXd M = dense_matrix(sys);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  Eigen::VectorXd mine = dec.lambdas;
  Eigen::VectorXd ref = es.eigenvalues();
  std::sort(mine.data(), mine.data() + mine.size());
  SpectrumCheck out;
  out.eigenvalue_error = (mine - ref).cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < dec.size(); ++k) {
    const Eigen::VectorXd v = dec.vectors.col(k);
    out.residual = std::max(out.residual, (M * v - dec.lambdas(k) * v).cwiseAbs().maxCoeff());
  }
  const Eigen::MatrixXd gram = dec.vectors.transpose() * dec.vectors;
  out.orthogonality = max_abs(gram - Eigen::MatrixXd::Identity(sys.m, sys.m));
  return out;
}

Eigen::VectorXd ivp(const MolSystem& sys, const std::function<double(double)>& u, double t) {
  const Eigen::MatrixXd M = dense_matrix(sys);
  const Eigen::VectorXd b = dense_input(sys);
  const Eigen::VectorXd free = expm(t * M) * sys.psi;
  if (t == 0.0) return free;
  const Eigen::VectorXd forced =
      integrate([&](double s) -> Eigen::VectorXd { return expm((t - s) * M) * b * u(s); }, 0.0, t);
  return free + forced;
}

Eigen::VectorXd adjoint(const MolSystem& sys, double T, const Eigen::VectorXd& p_T, double t) {
  return expm((T - t) * dense_matrix(sys)) * p_T;
}

BvpSolution shooting(const OcProblem& prob) {
  const MolSystem& sys = prob.sys;
  const int m = sys.m;
  const Eigen::MatrixXd M = dense_matrix(sys);
  const Eigen::VectorXd b = dense_input(sys);
  const Eigen::VectorXd G = integrate(
      [&](double tau) -> Eigen::VectorXd {
        const Eigen::MatrixXd E = expm(tau * M);
        const Eigen::MatrixXd outer = (E * b) * (E * b).transpose();
        return stack(outer);
      },
      0.0, prob.T, 1e-14);
  const Eigen::MatrixXd response = unstack(G, m) / prob.alpha;
  const Eigen::VectorXd free = expm(prob.T * M) * sys.psi;
  // y(T) = free − response·p(T) and p(T) = y(T) − ŷ.
  BvpSolution out;
  out.p_T = (Eigen::MatrixXd::Identity(m, m) + response).lu().solve(free - prob.target);
  out.y_T = free - response * out.p_T;
  return out;
}

Eigen::VectorXd irk_step(const IrkTableau& tab, const Eigen::MatrixXd& M,
                         const Eigen::VectorXd& input, double h, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& forcing) {
  const Eigen::Index m = M.rows();
  const int s = tab.stages();
  // K_i = M(y + hΣ_j A_ij K_j) + g_i·input.
  const Eigen::MatrixXd big =
      Eigen::MatrixXd::Identity(m * s, m * s) - h * kron(tab.A, M);
  Eigen::MatrixXd rhs(m, s);
  for (int i = 0; i < s; ++i) rhs.col(i) = M * y + forcing(i) * input;
  const Eigen::MatrixXd K = unstack(big.partialPivLu().solve(stack(rhs)), m);
  return y + h * K * tab.b;
}

Trajectory forward(const Method& method, const MolSystem& sys, const DiscreteControl& control,
                   const ForwardOptions& options) {
  const Eigen::MatrixXd M = dense_matrix(sys);
  const Eigen::VectorXd input = dense_input(sys);
  const int m = sys.m;
  const int N = control.N;
  const double h = control.h();
  Trajectory traj;
  traj.times = Eigen::VectorXd::LinSpaced(N + 1, 0.0, control.T);
  traj.states.resize(m, N + 1);
  traj.states.col(0) = sys.psi;

  if (const auto* tab = std::get_if<IrkTableau>(&method)) {
    for (int n = 0; n < N; ++n) {
      traj.states.col(n + 1) =
          irk_step(*tab, M, input, h, traj.states.col(n), control.values.row(n).transpose());
    }
    return traj;
  }

  const PeerScheme& peer = std::get<PeerScheme>(method);
  const int s = peer.stages();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m * s, m * s);
  auto forcing_block = [&](int n) {
    Eigen::MatrixXd g(m, s);
    for (int i = 0; i < s; ++i) g.col(i) = control.values(n, i) * input;
    return g;
  };
  Eigen::MatrixXd window(m, s);
  if (options.peer_start == PeerStart::kExact) {
    for (int i = 0; i < s; ++i) window.col(i) = options.exact_state(peer.c(i) * h);
  } else {
    // Y_i = y0 + hΣ_j A0_ij (M Y_j + g_j·input).
    const Eigen::MatrixXd A0 = collocation(peer.c);
    const Eigen::MatrixXd rhs = sys.psi.replicate(1, s) + h * forcing_block(0) * A0.transpose();
    window = unstack((I - h * kron(A0, M)).partialPivLu().solve(stack(rhs)), m);
  }
  const Eigen::MatrixXd lhs = I - h * kron(peer.R, M);
  for (int n = 1; n < N; ++n) {
    traj.states.col(n) = window.col(s - 1);
    const Eigen::MatrixXd F_prev = M * window + forcing_block(n - 1);
    const Eigen::MatrixXd rhs = window * peer.B.transpose() + h * F_prev * peer.A.transpose() +
                                h * forcing_block(n) * peer.R.transpose();
    window = unstack(lhs.partialPivLu().solve(stack(rhs)), m);
  }
  traj.states.col(N) = window.col(s - 1);
  return traj;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const DiscreteControl&)>& f, const DiscreteControl& u,
    const std::vector<std::pair<int, int>>& coordinates, double step) {
  std::vector<double> out;
  for (const auto& [n, i] : coordinates) {
    DiscreteControl plus = u;
    DiscreteControl minus = u;
    plus.values(n, i) += step;
    minus.values(n, i) -= step;
    out.push_back((f(plus) - f(minus)) / (2.0 * step));
  }
  return out;
}

DiscreteControl normal_equations(const Method& method, const OcProblem& prob, int N) {
  const int s = method_stages(method);
  const double h = prob.T / N;
  DiscreteControl u = zero_control(method, N, prob.T);
  ForwardOptions opts;
  opts.peer_start = PeerStart::kBootstrap;
  const Eigen::VectorXd y_free = forward(method, prob.sys, u, opts).final_state();

  MolSystem homogeneous = prob.sys;
  homogeneous.psi.setZero();
  const int n_unknowns = N * s;
  Eigen::MatrixXd J(prob.sys.m, n_unknowns);
  Eigen::VectorXd W(n_unknowns);
  const Eigen::VectorXd& w = method_weights(method);
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < s; ++i) {
      DiscreteControl unit = zero_control(method, N, prob.T);
      unit.values(n, i) = 1.0;
      J.col(n * s + i) = forward(method, homogeneous, unit, opts).final_state();
      W(n * s + i) = h * w(i);
    }
  }
  Eigen::MatrixXd H = J.transpose() * J;
  H.diagonal() += prob.alpha * W;
  const Eigen::VectorXd x = H.ldlt().solve(-J.transpose() * (y_free - prob.target));
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < s; ++i) u.values(n, i) = x(n * s + i);
  }
  return u;
}

RandomInstance random_instance(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const RobinBC families[] = {RobinBC::dirichlet(), RobinBC::neumann(), {1.0, 1.0}, {3.0, 1.0}};
  const int pick = int(unit(rng) * 5.0);
  const RobinBC bc = pick < 4 ? families[pick] : RobinBC{0.1 + 4.0 * unit(rng), 0.1 + 2.0 * unit(rng)};
  std::vector<double> samples(5);
  for (double& v : samples) v = 2.0 * unit(rng) - 1.0;
  const double T = 0.5 + 1.5 * unit(rng);
  std::vector<ExpSumFunction::Term> terms(1 + int(unit(rng) * 3.0));
  for (auto& term : terms) term = {2.0 * unit(rng) - 1.0, -40.0 * unit(rng) + 1.0};
  return {build_system(bc, m, sampled_profile(samples)), ExpSumFunction(T, std::move(terms)), T};
}

bool run_verify(std::ostream& out, const std::string& peer_dir) {
  Report report(out);
  std::mt19937_64 rng(20221014);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  {
    const RobinBC bcs[] = {RobinBC::dirichlet(), RobinBC::neumann(), {1.0, 1.0}, {3.0, 1.0}};
    double ev = 0.0, res = 0.0, orth = 0.0;
    for (const RobinBC& bc : bcs) {
      for (int m = 2; m <= 12; ++m) {
        const MolSystem sys = build_system(bc, m);
        const SpectrumCheck c = check_spectrum(sys, decompose(sys));
        ev = std::max(ev, c.eigenvalue_error / (double(m) * m));
        res = std::max(res, c.residual / (double(m) * m));
        orth = std::max(orth, c.orthogonality);
      }
    }
    report.add("spectrum.eigenvalues/m^2", ev, 1e-9);
    report.add("spectrum.residual/m^2", res, 1e-10);
    report.add("spectrum.orthogonality", orth, 1e-12);
  }

  {
    double ivp_err = 0.0, adj_err = 0.0;
    for (int k = 0; k < 4; ++k) {
      const RandomInstance inst = random_instance(rng, 8);
      const SpectralDecomposition dec = decompose(inst.sys);
      const double t = inst.T * unit(rng);
      const Eigen::VectorXd y = solve_ivp_exact(inst.sys, dec, inst.control, t);
      ivp_err = std::max(ivp_err, max_abs(y - ivp(inst.sys, inst.control, t)));
      const Eigen::VectorXd pT = inst.sys.psi;
      adj_err = std::max(adj_err, max_abs(adjoint_exact(dec, inst.T, pT, t) -
                                          adjoint(inst.sys, inst.T, pT, t)));
    }
    report.add("exact.ivp", ivp_err, 1e-10);
    report.add("exact.adjoint", adj_err, 1e-10);
  }

  {
    const MolSystem sys = build_system({1.0, 1.0}, 8);
    Eigen::VectorXd target(8);
    for (int j = 0; j < 8; ++j) target(j) = unit(rng);
    const OcProblem prob = make_problem(sys, 1.0, 0.5, target);
    const ExactOcSolution sol = solve_terminal(prob);
    const BvpSolution ref = shooting(prob);
    report.add("exact.bvp_shooting", std::max(max_abs(sol.y_T - ref.y_T), max_abs(sol.p_T - ref.p_T)),
               1e-8);
    const ModeWeight deltas[] = {{1, 0.3}, {3, -0.2}};
    const SparseTarget st = sparse_target(prob.sys, prob.dec, 1.0, 0.5, deltas);
    const ExactOcSolution round = solve_terminal(make_problem(sys, 1.0, 0.5, st.target));
    report.add("exact.sparse_roundtrip", max_abs(round.y_T - st.exact.y_T), 1e-10);
  }

  const std::vector<std::string> names{"gauss2", "lobatto3", "toy2"};
  for (const std::string& name : names) {
    Method method;
    try {
      method = resolve_method(name, peer_dir);
    } catch (const MissingCoefficientsError&) {
      report.skip("integrator." + name, "coefficients missing");
      continue;
    } catch (const ConfigError&) {
      report.skip("integrator." + name, "coefficients missing");
      continue;
    }
    const MolSystem sys = build_system({1.0, 1.0}, 8);
    const int N = 16;
    DiscreteControl u = sample_control(method, N, 1.0, [](double t) { return std::cos(3.0 * t); });
    ForwardOptions opts;
    opts.peer_start = PeerStart::kBootstrap;
    const Eigen::VectorXd mine = integrate_forward(method, make_ode(sys), sys.psi, u, opts).final_state();
    const Eigen::VectorXd ref = forward(method, sys, u, opts).final_state();
    report.add("integrator." + name + ".dense_stages", max_abs(mine - ref) / max_abs(ref), 1e-11);

    Eigen::VectorXd target(8);
    for (int j = 0; j < 8; ++j) target(j) = unit(rng);
    const OcProblem prob = make_problem(sys, 1.0, 1.0, target);
    for (int n = 0; n < N; ++n) {
      for (int i = 0; i < u.values.cols(); ++i) u.values(n, i) = 2.0 * unit(rng) - 1.0;
    }
    const DiscreteOcProblem dop(method, prob, N);
    const Eigen::MatrixXd g = dop.gradient(u);
    std::vector<std::pair<int, int>> coords;
    for (int k = 0; k < 10; ++k) {
      coords.emplace_back(int(unit(rng) * N), int(unit(rng) * u.values.cols()));
    }
    const std::vector<double> fd = finite_difference_gradient(
        [&](const DiscreteControl& v) { return dop.objective(v); }, u, coords, 1e-6);
    const double floor = 1e-3 * max_abs(g);
    double rel = 0.0;
    for (std::size_t k = 0; k < coords.size(); ++k) {
      const double gk = g(coords[k].first, coords[k].second);
      rel = std::max(rel, std::abs(fd[k] - gk) / std::max(std::abs(gk), floor));
    }
    report.add("gradient." + name + ".finite_differences", rel, 1e-5);

    const MolSystem small = build_system(RobinBC::dirichlet(), 4);
    const OcProblem qp = make_problem(small, 1.0, 1.0, Eigen::VectorXd::Constant(4, 0.25));
    OptimizerConfig cfg;
    cfg.gradient_tolerance = 1e-12;
    const OptimizationResult res = optimize(method, qp, cfg, 8);
    const DiscreteControl direct = normal_equations(method, qp, 8);
    report.add("optimizer." + name + ".normal_equations",
               max_abs(res.control.values - direct.values), 1e-8);
  }
  return report.ok();
}

}  // namespace heatoc::oracle
