#include "heatoc/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "heatoc/errors.hpp"

namespace heatoc {
namespace {

const char* kVersion = "heatoc 1.0.0";

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<int> int_list(const nlohmann::json& v) {
  if (v.is_number_integer()) return {v.get<int>()};
  return v.get<std::vector<int>>();
}

double number(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  const std::string s = v.get<std::string>();
  const auto slash = s.find('/');
  if (slash == std::string::npos) return std::stod(s);
  return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
}

/// Runs task(i) for i in [0, count) on `jobs` threads; rethrows the first failure.
template <typename Task>
void parallel_for(int count, int jobs, Task&& task) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(jobs, count));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::map<std::string, std::string> make_metadata(const ExperimentConfig& cfg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return {{"config_hash", config_hash(cfg)},
          {"generated", stamp},
          {"scenario", std::to_string(cfg.scenario)},
          {"version", kVersion}};
}

std::vector<Method> resolve_all(const ExperimentConfig& cfg) {
  std::vector<Method> methods;
  for (const std::string& name : cfg.methods) methods.push_back(resolve_method(name, cfg.peer_dir));
  return methods;
}

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

ExperimentConfig parse_experiment(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  try {
    if (doc.contains("problem")) {
      const auto& p = doc.at("problem");
      if (p.contains("m")) cfg.problem.m_values = int_list(p.at("m"));
      cfg.problem.bc.beta0 = p.value("beta0", cfg.problem.bc.beta0);
      cfg.problem.bc.beta1 = p.value("beta1", cfg.problem.bc.beta1);
      cfg.problem.T = p.value("T", cfg.problem.T);
      cfg.problem.alpha = p.value("alpha", cfg.problem.alpha);
      if (p.contains("deltas")) {
        cfg.problem.deltas.clear();
        for (const auto& d : p.at("deltas")) {
          if (d.is_array()) {
            cfg.problem.deltas.push_back({d.at(0).get<int>(), number(d.at(1))});
          } else {
            cfg.problem.deltas.push_back({d.at("mode").get<int>(), number(d.at("delta"))});
          }
        }
      }
    }
    if (doc.contains("methods")) cfg.methods = doc.at("methods").get<std::vector<std::string>>();
    if (doc.contains("N")) cfg.N_values = int_list(doc.at("N"));
    cfg.scenario = doc.value("scenario", cfg.scenario);
    cfg.out_dir = doc.value("out", cfg.out_dir);
    cfg.jobs = doc.value("jobs", cfg.jobs);
    cfg.verify = doc.value("verify", cfg.verify);
    cfg.peer_dir = doc.value("peer_dir", cfg.peer_dir);
    cfg.fine_grid_reference = doc.value("fine_grid_reference", cfg.fine_grid_reference);
    if (doc.contains("optimizer")) {
      const auto& o = doc.at("optimizer");
      OptimizerConfig& opt = cfg.optimizer;
      opt.max_iterations = o.value("max_iterations", opt.max_iterations);
      opt.gradient_tolerance = o.value("tolerance", opt.gradient_tolerance);
      if (o.contains("initial_step") && !o.at("initial_step").is_null()) {
        opt.initial_step = o.at("initial_step").get<double>();
      }
      opt.backtracking_factor = o.value("backtracking", opt.backtracking_factor);
      opt.sufficient_decrease = o.value("sufficient_decrease", opt.sufficient_decrease);
      opt.gradient_refresh = o.value("gradient_refresh", opt.gradient_refresh);
      const std::string dir = o.value("direction", std::string("cg"));
      if (dir == "cg") {
        opt.direction = OptimizerConfig::Direction::kConjugateGradient;
      } else if (dir == "steepest") {
        opt.direction = OptimizerConfig::Direction::kSteepestDescent;
      } else {
        throw ConfigError("optimizer.direction must be \"cg\" or \"steepest\"");
      }
      const std::string start = o.value("peer_start", std::string("bootstrap"));
      if (start == "bootstrap") {
        opt.peer_start = PeerStart::kBootstrap;
      } else if (start == "exact") {
        opt.peer_start = PeerStart::kExact;
      } else {
        throw ConfigError("optimizer.peer_start must be \"bootstrap\" or \"exact\"");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return parse_experiment(doc);
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json deltas = nlohmann::json::array();
  for (const ModeWeight& d : cfg.problem.deltas) deltas.push_back({d.mode, d.delta});
  const OptimizerConfig& o = cfg.optimizer;
  nlohmann::json opt = {
      {"max_iterations", o.max_iterations},
      {"tolerance", o.gradient_tolerance},
      {"initial_step", o.initial_step ? nlohmann::json(*o.initial_step) : nlohmann::json(nullptr)},
      {"backtracking", o.backtracking_factor},
      {"sufficient_decrease", o.sufficient_decrease},
      {"gradient_refresh", o.gradient_refresh},
      {"direction", o.direction == OptimizerConfig::Direction::kConjugateGradient ? "cg" : "steepest"},
      {"peer_start", o.peer_start == PeerStart::kBootstrap ? "bootstrap" : "exact"}};
  return {{"problem",
           {{"m", cfg.problem.m_values},
            {"beta0", cfg.problem.bc.beta0},
            {"beta1", cfg.problem.bc.beta1},
            {"T", cfg.problem.T},
            {"alpha", cfg.problem.alpha},
            {"deltas", deltas}}},
          {"methods", cfg.methods},
          {"N", cfg.N_values},
          {"scenario", cfg.scenario},
          {"optimizer", opt},
          {"fine_grid_reference", cfg.fine_grid_reference}};
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.methods.empty()) throw ConfigError("no methods requested");
  if (cfg.N_values.empty()) throw ConfigError("no step counts requested");
  if (cfg.problem.m_values.empty()) throw ConfigError("no grid sizes requested");
  if (cfg.scenario != 1 && cfg.scenario != 2) throw ConfigError("scenario must be 1 or 2");
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  for (int m : cfg.problem.m_values) {
    if (m < 2) throw ConfigError("grid sizes must be >= 2");
  }
  for (int N : cfg.N_values) {
    if (N < 2) throw ConfigError("step counts must be >= 2");
    if (cfg.N_values.size() > 1 && !is_power_of_two(N)) {
      throw ConfigError("step counts must be powers of two for order tables");
    }
  }
  validate(cfg.problem.bc);
  if (!(cfg.problem.T > 0.0)) throw ConfigError("T must be positive");
  if (!(cfg.problem.alpha > 0.0)) throw ConfigError("alpha must be positive");
  for (const ModeWeight& d : cfg.problem.deltas) {
    for (int m : cfg.problem.m_values) {
      if (d.mode < 1 || d.mode > m) throw ConfigError("delta mode index out of range");
    }
  }
  validate(cfg.optimizer);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = to_json(cfg).dump();
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    hash ^= ch;
    hash *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

BenchInstance make_instance(const ProblemConfig& cfg, int m) {
  MolSystem sys = build_system(cfg.bc, m);
  SpectralDecomposition dec = decompose(sys);
  SparseTarget st = sparse_target(sys, dec, cfg.T, cfg.alpha, cfg.deltas);
  BenchInstance inst{make_problem(std::move(sys), std::move(dec), cfg.T, cfg.alpha, st.target),
                     std::move(st.exact), {}};
  inst.p0 = adjoint_exact(inst.prob.dec, cfg.T, inst.exact.p_T, 0.0);
  return inst;
}

void compute_orders(std::vector<ReportRow>& rows) {
  for (ReportRow& row : rows) row.observed_order.reset();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].converged) continue;
    // The next row with a larger N in the same group.
    std::optional<std::size_t> partner;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const bool same = rows[j].method == rows[i].method && rows[j].m == rows[i].m &&
                        rows[j].metric == rows[i].metric;
      if (!same || rows[j].N <= rows[i].N) continue;
      if (!partner || rows[j].N < rows[*partner].N) partner = j;
    }
    if (!partner || !rows[*partner].converged) continue;
    const ReportRow& next = rows[*partner];
    if (rows[i].error > 0.0 && next.error > 0.0) {
      rows[i].observed_order =
          std::log(rows[i].error / next.error) / std::log(double(next.N) / double(rows[i].N));
    }
  }
}

ConvergenceReport run_scenario1(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<Method> methods = resolve_all(cfg);
  std::vector<BenchInstance> instances;
  for (int m : cfg.problem.m_values) instances.push_back(make_instance(cfg.problem, m));

  const int nm = static_cast<int>(methods.size());
  const int ng = static_cast<int>(instances.size());
  const int nn = static_cast<int>(cfg.N_values.size());

  auto solve_cell = [&](const Method& method, const BenchInstance& inst, int N) {
    const OcProblem& prob = inst.prob;
    const LinearOde ode = make_ode(prob.sys);
    const ExpSumFunction& u = inst.exact.control;
    ForwardOptions opts;
    opts.peer_start = PeerStart::kExact;
    opts.exact_state = [&](double t) { return solve_ivp_exact(prob.sys, prob.dec, u, t); };
    const Trajectory traj =
        integrate_forward(method, ode, prob.sys.psi, sample_control(method, N, prob.T, u), opts);
    const Eigen::VectorXd yT = traj.final_state();
    const Eigen::VectorXd p0 =
        integrate_adjoint(method, ode, yT - prob.target, N, prob.T).initial_sensitivity;
    return std::pair{yT, p0};
  };

  // Optional fine-grid references, one per (method, m).
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> fine(nm * ng);
  if (cfg.fine_grid_reference) {
    const int N_fine = 4 * *std::max_element(cfg.N_values.begin(), cfg.N_values.end());
    parallel_for(nm * ng, cfg.jobs, [&](int idx) {
      fine[idx] = solve_cell(methods[idx / ng], instances[idx % ng], N_fine);
    });
  }

  std::vector<ReportRow> cells(2 * nm * ng * nn);
  parallel_for(nm * ng * nn, cfg.jobs, [&](int idx) {
    const int mi = idx / (ng * nn);
    const int gi = (idx / nn) % ng;
    const int ni = idx % nn;
    const BenchInstance& inst = instances[gi];
    const int N = cfg.N_values[ni];
    const auto [yT, p0] = solve_cell(methods[mi], inst, N);
    const Eigen::VectorXd& y_ref =
        cfg.fine_grid_reference ? fine[mi * ng + gi].first : inst.exact.y_T;
    const Eigen::VectorXd& p_ref = cfg.fine_grid_reference ? fine[mi * ng + gi].second : inst.p0;
    const std::string name = method_name(methods[mi]);
    const int m = inst.prob.sys.m;
    // Layout: method, m, metric, N.
    const int base = ((mi * ng + gi) * 2) * nn;
    cells[base + ni] = {name, m, N, "y_T_inf", max_abs_diff(yT, y_ref), {}, true};
    cells[base + nn + ni] = {name, m, N, "p_0_inf", max_abs_diff(p0, p_ref), {}, true};
  });

  ConvergenceReport report;
  report.rows = std::move(cells);
  compute_orders(report.rows);
  report.metadata = make_metadata(cfg);
  return report;
}

ConvergenceReport run_scenario2(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<Method> methods = resolve_all(cfg);
  std::vector<BenchInstance> instances;
  for (int m : cfg.problem.m_values) instances.push_back(make_instance(cfg.problem, m));

  const int nm = static_cast<int>(methods.size());
  const int ng = static_cast<int>(instances.size());
  const int nn = static_cast<int>(cfg.N_values.size());
  std::vector<ReportRow> cells(nm * ng * nn);
  std::vector<int> iterations(cells.size());
  parallel_for(nm * ng * nn, cfg.jobs, [&](int idx) {
    const int mi = idx / (ng * nn);
    const int gi = (idx / nn) % ng;
    const int ni = idx % nn;
    const BenchInstance& inst = instances[gi];
    const int N = cfg.N_values[ni];
    const OptimizationResult res =
        optimize(methods[mi], inst.prob, cfg.optimizer, N, inst.exact.control);
    cells[idx] = {method_name(methods[mi]), inst.prob.sys.m, N, "u_nodes_max",
                  *res.control_error, {}, res.converged};
    iterations[idx] = res.iterations;
  });

  ConvergenceReport report;
  report.rows = std::move(cells);
  compute_orders(report.rows);
  report.metadata = make_metadata(cfg);
  std::string unconverged;
  for (const ReportRow& row : report.rows) {
    if (!row.converged) {
      unconverged += (unconverged.empty() ? "" : ";") + row.method + "/m=" +
                     std::to_string(row.m) + "/N=" + std::to_string(row.N);
    }
  }
  if (!unconverged.empty()) report.metadata["nonconverged"] = unconverged;
  return report;
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string to_csv(const ConvergenceReport& report, bool with_metadata) {
  std::ostringstream out;
  if (with_metadata) {
    for (const auto& [key, value] : report.metadata) out << "# " << key << ": " << value << '\n';
  }
  out << "method,m,N,metric,error,observed_order\n";
  for (const ReportRow& row : report.rows) {
    out << row.method << ',' << row.m << ',' << row.N << ',' << row.metric << ','
        << format_number(row.error) << ',';
    if (row.observed_order) out << format_number(*row.observed_order);
    out << '\n';
  }
  return out.str();
}

std::string to_table(const ConvergenceReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %5s %6s %-12s %14s %8s\n", "method", "m", "N", "metric",
                "error", "order");
  out << line;
  for (const ReportRow& row : report.rows) {
    char order[32] = "";
    if (row.observed_order) std::snprintf(order, sizeof order, "%8.3f", *row.observed_order);
    std::snprintf(line, sizeof line, "%-12s %5d %6d %-12s %14.6e %8s%s\n", row.method.c_str(),
                  row.m, row.N, row.metric.c_str(), row.error, order,
                  row.converged ? "" : "  (not converged)");
    out << line;
  }
  return out.str();
}

std::string to_gnuplot(const ConvergenceReport& report) {
  std::ostringstream out;
  out << "# gnuplot script: error versus number of steps\n";
  std::vector<std::string> metrics;
  std::vector<std::pair<std::string, int>> series;
  for (const ReportRow& row : report.rows) {
    if (std::find(metrics.begin(), metrics.end(), row.metric) == metrics.end()) {
      metrics.push_back(row.metric);
    }
    const std::pair key{row.method, row.m};
    if (std::find(series.begin(), series.end(), key) == series.end()) series.push_back(key);
  }
  auto block = [](const std::string& metric, const std::string& method, int m) {
    return "$" + metric + "_" + method + "_" + std::to_string(m);
  };
  for (const std::string& metric : metrics) {
    for (const auto& [method, m] : series) {
      out << block(metric, method, m) << " << EOD\n";
      for (const ReportRow& row : report.rows) {
        if (row.metric == metric && row.method == method && row.m == m) {
          out << row.N << ' ' << format_number(row.error) << '\n';
        }
      }
      out << "EOD\n";
    }
  }
  out << "set terminal svg size 900,600\n"
      << "set logscale xy 2\n"
      << "set format y '%.0e'\n"
      << "set xlabel 'N'\n"
      << "set key outside right\n"
      << "set grid\n";
  for (const std::string& metric : metrics) {
    out << "set output '" << metric << ".svg'\n"
        << "set ylabel '" << metric << "'\n"
        << "set logscale y 10\n"
        << "plot ";
    bool first = true;
    for (const auto& [method, m] : series) {
      out << (first ? "" : ", \\\n     ") << block(metric, method, m)
          << " using 1:2 with linespoints title '" << method << " m=" << m << "'";
      first = false;
    }
    out << "\n";
  }
  return out.str();
}

void emit_report(const ConvergenceReport& report, ReportFormat format, const std::string& path) {
  if (report.rows.empty()) throw ConfigError("empty report");
  std::string text;
  switch (format) {
    case ReportFormat::kCsv: text = to_csv(report, true); break;
    case ReportFormat::kTable: text = to_table(report); break;
    case ReportFormat::kGnuplot: text = to_gnuplot(report); break;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace heatoc
