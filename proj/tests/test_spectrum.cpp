#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "heatoc/oracles.hpp"
#include "heatoc/spectrum.hpp"
#include "support.hpp"

using namespace heatoc;
using heatoc::testing::max_abs;
using heatoc::testing::random_vector;
using std::numbers::pi;

namespace {

const RobinBC kFamilies[] = {RobinBC::dirichlet(), RobinBC::neumann(), {1.0, 1.0}, {3.0, 1.0}};

// Root of tan(ω)tan(ω/2m) = β₀/(2mβ₁) in ((k−1)π, (k−½)π), bisected in
// extended precision.  The product increases from 0 to +∞ on the bracket.
long double reference_frequency(const RobinBC& bc, int m, int k) {
  const long double pi_l = 3.141592653589793238462643383279502884L;
  const long double r = (long double)bc.beta0 / (2.0L * m * (long double)bc.beta1);
  long double lo = (k - 1) * pi_l;
  long double hi = (k - 0.5L) * pi_l;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const long double g = std::tan(mid) * std::tan(mid / (2.0L * m)) - r;
    (g > 0 ? hi : lo) = mid;
  }
  return 0.5L * (lo + hi);
}

}  // namespace

TEST_SUITE("spectrum") {

TEST_CASE("closed-form frequencies for Dirichlet and Neumann") {
  const FrequencySet d = solve_frequencies(build_system(RobinBC::dirichlet(), 3));
  CHECK(d.omegas(0) == pi / 2);
  CHECK(d.omegas(1) == 1.5 * pi);
  CHECK(d.omegas(2) == 2.5 * pi);
  const FrequencySet n = solve_frequencies(build_system(RobinBC::neumann(), 3));
  CHECK(n.omegas(0) == 0.0);
  CHECK(n.omegas(1) == pi);
  CHECK(n.omegas(2) == 2.0 * pi);
}

TEST_CASE("Robin(1,1), m=2: first frequency pinned by a 40-digit bisection") {
  const FrequencySet f = solve_frequencies(build_system({1.0, 1.0}, 2));
  CHECK(std::abs(f.omegas(0) - 0.85549737725425329649) <= 1e-12);
  CHECK(std::abs(frequency_residual({1.0, 1.0}, 2, f.omegas(0))) <= 1e-12);
}

TEST_CASE("frequencies interlace and solve the secular equation") {
  for (const RobinBC bc : {RobinBC{1.0, 1.0}, RobinBC{3.0, 1.0}, RobinBC{0.2, 5.0}, RobinBC{50.0, 0.5}}) {
    for (int m : {2, 3, 8, 12, 50, 250}) {
      const FrequencySet f = solve_frequencies(build_system(bc, m));
      for (int k = 1; k <= m; ++k) {
        const double w = f.omegas(k - 1);
        CHECK(w > (k - 1) * pi);
        CHECK(w < (k - 0.5) * pi);
        if (k > 1) CHECK(w > f.omegas(k - 2));
        // At m = 250 a single ulp of ω moves the residual by ~3e-11, so the
        // root itself is compared in extended precision there.
        if (m <= 50) CHECK(std::abs(frequency_residual(bc, m, w)) <= 1e-12);
        const long double ref = reference_frequency(bc, m, k);
        // Solver guarantee: 1e-14 absolute, or 4 ulps for the large roots.
        const long double tol = std::max(1e-14L, 4.0L * std::numeric_limits<double>::epsilon() * ref);
        CHECK(std::abs((long double)w - ref) <= tol);
      }
      CHECK(f.omegas(m - 1) < m * pi);
    }
  }
}

TEST_CASE("bisection fallback outside the contraction regime") {
  // β₀/β₁ far below 1: the fixed-point map overshoots its bracket for k = 1.
  const RobinBC bc{0.01, 100.0};
  const MolSystem sys = build_system(bc, 4);
  const FrequencySet f = solve_frequencies(sys);
  CHECK(f.bisection_fallbacks > 0);
  for (int k = 1; k <= 4; ++k) {
    CHECK(std::abs(frequency_residual(bc, 4, f.omegas(k - 1))) <= 1e-12);
  }
  const oracle::SpectrumCheck c = oracle::check_spectrum(sys, decompose(sys, f));
  CHECK(c.eigenvalue_error <= 1e-9 * 16);
  CHECK(c.residual <= 1e-10 * 16);
}

TEST_CASE("Dirichlet m=2 eigenvalues against a dense eigensolver") {
  const MolSystem sys = build_system(RobinBC::dirichlet(), 2);
  const SpectralDecomposition dec = decompose(sys);
  CHECK(dec.lambdas(0) == doctest::Approx(-16.0 * std::pow(std::sin(pi / 8), 2)).epsilon(1e-15));
  CHECK(dec.lambdas(1) == doctest::Approx(-16.0 * std::pow(std::sin(3 * pi / 8), 2)).epsilon(1e-15));
  CHECK(dec.lambdas(0) == doctest::Approx(-2.3431).epsilon(1e-4));
  CHECK(dec.lambdas(1) == doctest::Approx(-13.6569).epsilon(1e-4));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle::dense_matrix(sys));
  CHECK(std::abs(es.eigenvalues()(0) - dec.lambdas(1)) <= 1e-12);
  CHECK(std::abs(es.eigenvalues()(1) - dec.lambdas(0)) <= 1e-12);
}

TEST_CASE("Neumann: zero eigenvalue with the constant eigenvector") {
  for (int m : {2, 5, 17}) {
    const SpectralDecomposition dec = decompose(build_system(RobinBC::neumann(), m));
    CHECK(dec.lambdas(0) == 0.0);
    CHECK(max_abs(dec.vectors.col(0) - Eigen::VectorXd::Constant(m, 1.0 / std::sqrt(m))) <= 1e-15);
  }
}

TEST_CASE("Dirichlet m=500: smallest eigenvalue near -(pi/2)^2") {
  const SpectralDecomposition dec = decompose(build_system(RobinBC::dirichlet(), 500));
  CHECK(std::abs(dec.lambdas(0) + pi * pi / 4) <= 10.0 / (500.0 * 500.0));
}

TEST_CASE("full-spectrum cross-check for m = 2..12") {
  for (const RobinBC& bc : kFamilies) {
    for (int m = 2; m <= 12; ++m) {
      const MolSystem sys = build_system(bc, m);
      const SpectralDecomposition dec = decompose(sys);
      const oracle::SpectrumCheck c = oracle::check_spectrum(sys, dec);
      const double m2 = double(m) * m;
      CHECK(c.eigenvalue_error <= 1e-9 * m2);
      CHECK(c.residual <= 1e-10 * m2);
      CHECK(c.orthogonality <= 1e-12 * m);
      for (int k = 0; k < m; ++k) {
        CHECK(std::abs(dec.vectors.col(k).norm() - 1.0) <= 1e-13);
        CHECK(dec.lambdas(k) <= 0.0);
        CHECK(dec.lambdas(k) > -4.0 * m2);
      }
      CHECK((dec.lambdas(0) == 0.0) == bc.is_neumann());
    }
  }
}

TEST_CASE("orthonormality at benchmark size") {
  for (const RobinBC& bc : kFamilies) {
    const SpectralDecomposition dec = decompose(build_system(bc, 250));
    const Eigen::MatrixXd gram = dec.vectors.transpose() * dec.vectors;
    CHECK(max_abs(gram - Eigen::MatrixXd::Identity(250, 250)) <= 1e-12 * 250);
  }
}

TEST_CASE("modal transforms") {
  std::mt19937_64 rng(3);
  const MolSystem sys = build_system({1.0, 1.0}, 8);
  const SpectralDecomposition dec = decompose(sys);
  const Eigen::VectorXd w = random_vector(rng, 8);
  CHECK(max_abs(from_modal(dec, to_modal(dec, w)) - w) <= 1e-12);
  for (int k = 0; k < 8; ++k) {
    CHECK(max_abs(to_modal(dec, dec.vectors.col(k)) - Eigen::VectorXd::Unit(8, k)) <= 1e-12);
  }
  CHECK_THROWS(to_modal(dec, Eigen::VectorXd::Ones(7)));
  CHECK_THROWS(from_modal(dec, Eigen::VectorXd::Ones(9)));

  // Vᵀ𝟙 against eigenvectors of the dense matrix, sign-aligned.
  const MolSystem d8 = build_system(RobinBC::dirichlet(), 8);
  const SpectralDecomposition dd = decompose(d8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle::dense_matrix(d8));
  const Eigen::VectorXd mine = to_modal(dd, Eigen::VectorXd::Ones(8));
  for (int k = 0; k < 8; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(7 - k);
    if (v.dot(dd.vectors.col(k)) < 0) v = -v;
    CHECK(std::abs(v.dot(Eigen::VectorXd::Ones(8)) - mine(k)) <= 1e-12);
  }
}

}  // TEST_SUITE
