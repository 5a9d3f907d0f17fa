#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agebranch/field.hpp"
#include "agebranch/simulator.hpp"
#include "agebranch/solvers.hpp"

namespace agebranch {

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t replicates = 0;
  std::size_t excluded = 0;  ///< replicates dropped because a cap fired
  std::uint64_t seed = 0;
};

/// Mean and standard error with pairwise two-pass sums; NaN entries count as
/// excluded. Throws DomainError with fewer than 2 usable samples.
McEstimate make_estimate(std::span<const double> samples, std::uint64_t seed);

enum class Sidedness { two_sided, upper_bound };

struct ComparisonReport {
  std::string name;
  McEstimate mc;
  double analytic = 0.0;
  double tol = 0.0;  ///< numerical tolerance of the analytic value
  double z = 0.0;    ///< (mc - analytic) / sqrt(se^2 + tol^2)
  double p_value = 1.0;
  Sidedness sidedness = Sidedness::two_sided;
  /// Negative control: the row passes when the underlying test rejects.
  bool negative_control = false;
  bool pass = false;

  std::string verdict() const { return pass ? "pass" : "fail"; }
};

inline constexpr double kZThreshold = 3.0;

ComparisonReport make_report(std::string name, const McEstimate& mc, double analytic, double tol,
                             Sidedness sidedness = Sidedness::two_sided, bool negative_control = false);

struct McSettings {
  std::size_t replicates = 10'000;
  std::uint64_t seed = 0;
  unsigned parallelism = 1;
  /// Solver step for analytic values; the tolerance comes from dt vs dt/2.
  double dt = 1e-3;
  /// Snapshot intervals for the martingale time integral (even).
  std::size_t snapshot_intervals = 50;
};

/// Simulated <X_t, f> samples for replicates 0..N-1 of the given stream (NaN when capped).
std::vector<double> sample_functional(const SimConfig& base, const ScalarField& f, double t, const McSettings& s,
                                      std::uint64_t purpose);

/// Mean of e^{-<X_t, f>} over N >= 100 replicates.
McEstimate estimate_laplace(const SimConfig& base, const ScalarField& f, double t, const McSettings& s);

/// Analytic value at dt with tolerance |A_dt - A_{dt/2}|; returns {value at dt/2, tol}.
struct TolerancedValue {
  double value = 0.0;
  double tol = 0.0;
};
TolerancedValue laplace_reference(const SimConfig& base, const ScalarField& f, double t, double dt);
TolerancedValue mean_reference(const SimConfig& base, const ScalarField& f, double t, double dt);
/// P(X_t = 0) from the cumulant with f = +infinity.
TolerancedValue extinction_reference(const SimConfig& base, double t, double dt);

ComparisonReport compare_laplace(const SimConfig& base, const ScalarField& f, double t, const McSettings& s);
ComparisonReport compare_mean(const SimConfig& base, const ScalarField& f, double t, const McSettings& s);
ComparisonReport compare_extinction(const SimConfig& base, double t, const McSettings& s);

/// One-sided checks of the running-maximum, event-count and mean bounds.
/// Throws PreconditionError with immigration present.
std::vector<ComparisonReport> bound_suite(const SimConfig& base, double t, const McSettings& s);

enum class TestG { identity, exp, square };
std::string to_string(TestG g);
TestG parse_test_g(const std::string& name);

/// Generator LG_f at state mu (exact for the catalog G).
double generator(const BranchingModel& model, const ImmigrationMechanism& imm, TestG g, const ScalarField& f,
                 const AgeMeasure& mu);

/// E[G(<X_t,f>)] - G(<X_0,f>) - int_0^t E[LG_f(X_s)] ds against 0. `lg_scale`
/// multiplies LG_f; values other than 1 make a negative control.
ComparisonReport martingale_residual(const SimConfig& base, TestG g, const ScalarField& f, double t,
                                     const McSettings& s, double lg_scale = 1.0);

struct ErgodicStudy {
  std::vector<double> horizons;
  std::vector<double> finite_analytic;  ///< exp(-<sigma,u_T f> - int_0^T psi)
  std::vector<double> analytic_gaps;    ///< |finite_analytic - stationary|
  bool gaps_decreasing = false;
  StationaryResult stationary;
  std::vector<ComparisonReport> reports;
};

/// Per-horizon MC vs finite-horizon analytic, plus the largest horizon vs the
/// stationary value. Throws PreconditionError unless certified ergodic.
ErgodicStudy ergodic_convergence(const SimConfig& base, const ScalarField& f, std::span<const double> horizons,
                                 const McSettings& s, double stationary_tol = 1e-6);

}  // namespace agebranch
