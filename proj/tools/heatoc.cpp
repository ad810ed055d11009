// heatoc: command-line driver for the boundary-control benchmarks.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure or oracle
// mismatch, 3 Peer coefficients requested but not available.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "heatoc/bench.hpp"
#include "heatoc/errors.hpp"
#include "heatoc/oracles.hpp"

namespace fs = std::filesystem;
using namespace heatoc;

namespace {

struct Options {
  std::string config;
  std::string out_dir;
  std::vector<std::string> methods;
  std::vector<int> N;
  std::vector<int> m;
  int jobs = 0;
  bool verify = false;
  bool fine = false;
  double beta0 = -1.0;
  double beta1 = -1.0;
  std::string method = "gauss2";
};

ExperimentConfig make_config(const Options& o, int scenario) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
  if (scenario != 0) cfg.scenario = scenario;
  if (!o.methods.empty()) cfg.methods = o.methods;
  if (!o.N.empty()) cfg.N_values = o.N;
  if (!o.m.empty()) cfg.problem.m_values = o.m;
  if (o.jobs > 0) cfg.jobs = o.jobs;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.beta0 >= 0.0) cfg.problem.bc.beta0 = o.beta0;
  if (o.beta1 >= 0.0) cfg.problem.bc.beta1 = o.beta1;
  cfg.verify = cfg.verify || o.verify;
  cfg.fine_grid_reference = cfg.fine_grid_reference || o.fine;
  validate(cfg);
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path output_dir(const ExperimentConfig& cfg) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string());
  return dir;
}

void run_verify_or_abort(const ExperimentConfig& cfg) {
  std::ostringstream log;
  const bool ok = oracle::run_verify(log, cfg.peer_dir);
  std::cerr << log.str();
  if (!ok) throw NumericalError("oracle verification failed");
}

int cmd_spectrum(const Options& o) {
  const ExperimentConfig cfg = make_config(o, 0);
  std::cout << "m,k,omega,lambda,nu\n";
  for (int m : cfg.problem.m_values) {
    const MolSystem sys = build_system(cfg.problem.bc, m);
    const FrequencySet freqs = solve_frequencies(sys);
    const SpectralDecomposition dec = decompose(sys, freqs);
    for (Eigen::Index k = 0; k < dec.size(); ++k) {
      std::cout << m << ',' << k + 1 << ',' << format_number(dec.omegas(k)) << ','
                << format_number(dec.lambdas(k)) << ',' << format_number(dec.nus(k)) << '\n';
    }
    if (freqs.bisection_fallbacks > 0) {
      std::cerr << "m=" << m << ": " << freqs.bisection_fallbacks
                << " frequencies needed the bisection fallback\n";
    }
  }
  return 0;
}

int cmd_exact(const Options& o) {
  const ExperimentConfig cfg = make_config(o, 0);
  const fs::path dir = output_dir(cfg);
  for (int m : cfg.problem.m_values) {
    const BenchInstance inst = make_instance(cfg.problem, m);
    std::ostringstream csv;
    csv << "j,x,target,y_T,p_T,p_0\n";
    for (int j = 0; j < m; ++j) {
      csv << j + 1 << ',' << format_number(inst.prob.sys.grid(j)) << ','
          << format_number(inst.prob.target(j)) << ',' << format_number(inst.exact.y_T(j)) << ','
          << format_number(inst.exact.p_T(j)) << ',' << format_number(inst.p0(j)) << '\n';
    }
    const fs::path path = dir / ("exact_m" + std::to_string(m) + ".csv");
    write_file(path, csv.str());
    std::cout << "m=" << m << ": objective "
              << format_number(objective(inst.prob, inst.exact.y_T, inst.exact.control))
              << ", u(0) " << format_number(inst.exact.control(0.0)) << ", u(T) "
              << format_number(inst.exact.control(cfg.problem.T)) << " -> " << path.string()
              << '\n';
    if (o.verify) {
      const ExactOcSolution sol = solve_terminal(inst.prob);
      const double err = std::max((sol.y_T - inst.exact.y_T).cwiseAbs().maxCoeff(),
                                  (sol.p_T - inst.exact.p_T).cwiseAbs().maxCoeff());
      std::cout << "m=" << m << ": |solve_terminal - sparse construction| = " << format_number(err)
                << '\n';
      if (!(err <= 1e-9)) throw NumericalError("exact solution check failed");
    }
  }
  return 0;
}

int cmd_scenario(const Options& o, int scenario) {
  const ExperimentConfig cfg = make_config(o, scenario);
  if (cfg.verify) run_verify_or_abort(cfg);
  const ConvergenceReport report = scenario == 1 ? run_scenario1(cfg) : run_scenario2(cfg);
  const fs::path dir = output_dir(cfg);
  const std::string stem = "scenario" + std::to_string(scenario);
  emit_report(report, ReportFormat::kCsv, (dir / (stem + ".csv")).string());
  emit_report(report, ReportFormat::kGnuplot, (dir / (stem + ".gp")).string());
  std::cout << to_table(report);
  std::cout << "wrote " << (dir / (stem + ".csv")).string() << " and "
            << (dir / (stem + ".gp")).string() << '\n';
  return 0;
}

int cmd_optimize(const Options& o) {
  const ExperimentConfig cfg = make_config(o, 2);
  if (cfg.verify) run_verify_or_abort(cfg);
  const fs::path dir = output_dir(cfg);
  const Method method = resolve_method(o.methods.empty() ? o.method : o.methods.front(), cfg.peer_dir);
  const BenchInstance inst = make_instance(cfg.problem, cfg.problem.m_values.front());
  const int N = cfg.N_values.front();
  const OptimizationResult res = optimize(method, inst.prob, cfg.optimizer, N, inst.exact.control);

  std::ostringstream log;
  log << "iteration,objective,gradient_norm,step\n";
  for (const IterationRecord& r : res.history) {
    log << r.iteration << ',' << format_number(r.objective) << ',' << format_number(r.gradient_norm)
        << ',' << format_number(r.step) << '\n';
  }
  std::ostringstream control;
  control << "n,i,t,u_h,u_exact\n";
  for (int n = 0; n < N; ++n) {
    for (Eigen::Index i = 0; i < res.control.c.size(); ++i) {
      const double t = res.control.node(n, int(i));
      control << n << ',' << i << ',' << format_number(t) << ','
              << format_number(res.control.values(n, i)) << ','
              << format_number(inst.exact.control(t)) << '\n';
    }
  }
  const std::string stem = "optimize_" + method_name(method) + "_N" + std::to_string(N);
  write_file(dir / (stem + "_log.csv"), log.str());
  write_file(dir / (stem + "_control.csv"), control.str());
  std::cout << method_name(method) << " N=" << N << ": " << (res.converged ? "converged" : "NOT converged")
            << " after " << res.iterations << " iterations, objective "
            << format_number(res.objective) << ", gradient " << format_number(res.gradient_norm)
            << ", control error " << format_number(*res.control_error) << '\n';
  return 0;
}

int cmd_verify(const Options& o) {
  const ExperimentConfig cfg = make_config(o, 0);
  std::ostringstream log;
  const bool ok = oracle::run_verify(log, cfg.peer_dir);
  std::cout << log.str();
  if (!o.out_dir.empty()) write_file(output_dir(cfg) / "verify.csv", log.str());
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary control of the 1D heat equation: exact solutions and time-integrator benchmarks"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment document")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--m", o.m, "Grid sizes")->delimiter(',');
    sub->add_option("--beta0", o.beta0, "Robin coefficient of Y");
    sub->add_option("--beta1", o.beta1, "Robin coefficient of dY/dx");
  };
  auto sweep = [&o](CLI::App* sub) {
    sub->add_option("--methods", o.methods, "Methods (gauss2, lobatto3 or a Peer file name)")
        ->delimiter(',');
    sub->add_option("--N", o.N, "Step counts")->delimiter(',');
    sub->add_option("--jobs", o.jobs, "Worker threads");
    sub->add_flag("--verify", o.verify, "Run the oracle suite first and abort on mismatch");
  };

  CLI::App* spectrum = app.add_subcommand("spectrum", "Frequencies and eigenvalues of the MOL matrix");
  common(spectrum);
  CLI::App* exact = app.add_subcommand("exact", "Exact solution of the sparse-target benchmark");
  common(exact);
  exact->add_flag("--verify", o.verify, "Cross-check against the terminal solve");
  CLI::App* s1 = app.add_subcommand("scenario1", "Decoupled order study with the exact control");
  common(s1);
  sweep(s1);
  s1->add_flag("--fine-reference", o.fine, "Use a refined grid as reference (cross-check only)");
  CLI::App* s2 = app.add_subcommand("scenario2", "Order study of the optimized control");
  common(s2);
  sweep(s2);
  CLI::App* opt = app.add_subcommand("optimize", "One optimization run with iteration log");
  common(opt);
  sweep(opt);
  opt->add_option("--method", o.method, "Method");
  CLI::App* verify = app.add_subcommand("verify", "Desk-scale oracle comparisons");
  common(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*spectrum) return cmd_spectrum(o);
    if (*exact) return cmd_exact(o);
    if (*s1) return cmd_scenario(o, 1);
    if (*s2) return cmd_scenario(o, 2);
    if (*opt) return cmd_optimize(o);
    if (*verify) return cmd_verify(o);
  } catch (const MissingCoefficientsError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
