#include "heatoc/spectrum.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace heatoc {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxFixedPointIterations = 200;

double omega_tolerance(double omega) {
  return std::max(1e-14, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(omega));
}

// f_k(ω) = (k−1)π + arctan(r·cot(ω/(2m))), written with atan2 so that the
// left end ω = 0 of the first bracket evaluates to π/2 instead of dividing by 0.
double fixed_point_map(int k, int m, double ratio, double omega) {
  const double x = omega / (2.0 * m);
  return (k - 1) * kPi + std::atan2(ratio * std::cos(x), std::sin(x));
}

double bisect(int k, int m, double ratio, double left, double right) {
  // g(ω) = ω − f_k(ω) is increasing, negative at the left end, positive at the right.
  auto g = [&](double w) { return w - fixed_point_map(k, m, ratio, w); };
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (left + right);
    if (mid <= left || mid >= right || right - left <= omega_tolerance(right)) break;
    (g(mid) > 0.0 ? right : left) = mid;
  }
  return 0.5 * (left + right);
}

double solve_one(int k, int m, double ratio, bool& used_fallback) {
  const double left = (k - 1) * kPi;
  const double right = (k - 0.5) * kPi;
  double omega = std::max(1.0, left);
  used_fallback = false;
  for (int it = 0; it < kMaxFixedPointIterations; ++it) {
    const double next = fixed_point_map(k, m, ratio, omega);
    if (!(next > left && next <= right)) break;
    if (std::abs(next - omega) <= omega_tolerance(next)) {
      return next;
    }
    omega = next;
  }
  used_fallback = true;
  return bisect(k, m, ratio, left, right);
}

}  // namespace

double frequency_residual(const RobinBC& bc, int m, double omega) {
  return std::tan(omega) * std::tan(omega / (2.0 * m)) - bc.beta0 / (2.0 * m * bc.beta1);
}

FrequencySet solve_frequencies(const MolSystem& sys) {
  FrequencySet out;
  out.m = sys.m;
  out.bc = sys.bc;
  out.omegas.resize(sys.m);
  const int m = sys.m;
  if (sys.bc.is_dirichlet()) {
    for (int k = 1; k <= m; ++k) out.omegas(k - 1) = (k - 0.5) * kPi;
    return out;
  }
  if (sys.bc.is_neumann()) {
    for (int k = 1; k <= m; ++k) out.omegas(k - 1) = (k - 1) * kPi;
    return out;
  }
  const double ratio = sys.bc.beta0 / (2.0 * m * sys.bc.beta1);
  for (int k = 1; k <= m; ++k) {
    bool fallback = false;
    out.omegas(k - 1) = solve_one(k, m, ratio, fallback);
    out.bisection_fallbacks += fallback ? 1 : 0;
  }
  return out;
}

SpectralDecomposition decompose(const MolSystem& sys, const FrequencySet& freqs) {
  const int m = sys.m;
  SpectralDecomposition dec;
  dec.omegas = freqs.omegas;
  dec.lambdas.resize(m);
  dec.nus.resize(m);
  dec.vectors.resize(m, m);
  for (int k = 0; k < m; ++k) {
    const double omega = freqs.omegas(k);
    const double s = std::sin(omega / (2.0 * m));
    dec.lambdas(k) = -4.0 * double(m) * double(m) * s * s;
    // sin(2ω)/sin(ω/m) → 2m as ω → 0.
    dec.nus(k) = omega == 0.0
                     ? 1.0 / std::sqrt(double(m))
                     : 2.0 / std::sqrt(2.0 * m + std::sin(2.0 * omega) / std::sin(omega / m));
    for (int j = 0; j < m; ++j) {
      dec.vectors(j, k) = dec.nus(k) * std::cos(omega * (2.0 * j + 1.0) / (2.0 * m));
    }
  }
  return dec;
}

SpectralDecomposition decompose(const MolSystem& sys) {
  return decompose(sys, solve_frequencies(sys));
}

Eigen::VectorXd to_modal(const SpectralDecomposition& dec,
                         const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (w.size() != dec.vectors.rows()) {
    throw std::invalid_argument("to_modal: dimension mismatch");
  }
  return dec.vectors.transpose() * w;
}

Eigen::VectorXd from_modal(const SpectralDecomposition& dec,
                           const Eigen::Ref<const Eigen::VectorXd>& eta) {
  if (eta.size() != dec.vectors.cols()) {
    throw std::invalid_argument("from_modal: dimension mismatch");
  }
  return dec.vectors * eta;
}

}  // namespace heatoc
