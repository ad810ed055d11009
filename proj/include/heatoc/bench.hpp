#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heatoc/discrete_opt.hpp"
#include "heatoc/exact_oc.hpp"
#include "json.hpp"

namespace heatoc {

struct ProblemConfig {
  std::vector<int> m_values{250, 500};
  RobinBC bc = RobinBC::dirichlet();
  double T = 1.0;
  double alpha = 1.0;
  std::vector<ModeWeight> deltas{{1, 1.0 / 75.0}, {2, 1.0 / 75.0}};
};

struct ExperimentConfig {
  ProblemConfig problem;
  std::vector<std::string> methods{"gauss2", "lobatto3"};
  std::vector<int> N_values{16, 32, 64, 128, 256, 512, 1024, 2048};
  int scenario = 1;
  OptimizerConfig optimizer;
  std::string out_dir = ".";
  int jobs = 1;
  bool verify = false;
  std::string peer_dir = default_peer_directory();
  /// Cross-check mode: take references from the same method on a grid four
  /// times finer than the largest N instead of from the exact solution.
  bool fine_grid_reference = false;
};

/// Reads the JSON experiment document; missing fields keep their defaults.
ExperimentConfig parse_experiment(const nlohmann::json& doc);
ExperimentConfig load_experiment(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Throws ConfigError for empty method/N/m lists, N not a power of two, etc.
void validate(const ExperimentConfig& cfg);

struct ReportRow {
  std::string method;
  int m = 0;
  int N = 0;
  std::string metric;
  double error = 0.0;
  std::optional<double> observed_order;
  bool converged = true;
};

struct ConvergenceReport {
  std::vector<ReportRow> rows;
  /// Free-form metadata (config hash, version, timestamp); never part of the data rows.
  std::map<std::string, std::string> metadata;
};

/// The benchmark instance for one grid size: sparse-target problem plus its
/// exact solution.
struct BenchInstance {
  OcProblem prob;
  ExactOcSolution exact;
  /// Exact p(0).
  Eigen::VectorXd p0;
};

BenchInstance make_instance(const ProblemConfig& cfg, int m);

/// Fills observed_order = log(e_N/e_N')/log(N'/N) for consecutive N within
/// each (method, m, metric) group; a pair involving a non-converged row gets
/// no order.
void compute_orders(std::vector<ReportRow>& rows);

/// Decoupled scenario: integrate y with the exact control, set
/// p(T) = y_h(T) − ŷ, integrate p back, record ‖y(T) − y_h(T)‖_∞ ("y_T_inf")
/// and ‖p(0) − p_h(0)‖_∞ ("p_0_inf").
ConvergenceReport run_scenario1(const ExperimentConfig& cfg);

/// Full optimization: record max_{n,i}|u(t_ni) − u_h(t_ni)| ("u_nodes_max").
ConvergenceReport run_scenario2(const ExperimentConfig& cfg);

enum class ReportFormat { kCsv, kTable, kGnuplot };

std::string format_number(double value);
/// `method,m,N,metric,error,observed_order`.  Metadata, when requested, goes
/// into leading '#' comment lines.
std::string to_csv(const ConvergenceReport& report, bool with_metadata = false);
std::string to_table(const ConvergenceReport& report);
/// Self-contained gnuplot script with inline data blocks, one log–log plot
/// of error against N per metric.
std::string to_gnuplot(const ConvergenceReport& report);

/// Writes the report in the given format; throws ConfigError for an empty
/// report and std::runtime_error when the path cannot be written.
void emit_report(const ConvergenceReport& report, ReportFormat format, const std::string& path);

/// FNV-1a hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace heatoc
