#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "agebranch/field.hpp"
#include "agebranch/rng.hpp"

namespace agebranch {

/// p[k] = probability of k offspring; finite support.
struct FinitePmf {
  std::vector<double> p;
  bool operator==(const FinitePmf&) const = default;
};

/// p(k) = q (1 - q)^k, k >= 0.
struct GeometricPmf {
  double success = 0.5;
  bool operator==(const GeometricPmf&) const = default;
};

struct PoissonPmf {
  double mean = 1.0;
  bool operator==(const PoissonPmf&) const = default;
};

using Pmf = std::variant<FinitePmf, GeometricPmf, PoissonPmf>;

double pgf(const Pmf& pmf, double z);
double mean(const Pmf& pmf);
/// E[Z^2].
double second_moment(const Pmf& pmf);

/// Offspring pmf in force from age `from` up to the next regime's `from`.
struct AgeRegime {
  double from = 0.0;
  Pmf pmf;
  bool operator==(const AgeRegime&) const = default;
};

/// Age-dependent offspring law p(x, k) built from finitely many age regimes.
class OffspringLaw {
 public:
  OffspringLaw() : OffspringLaw(Pmf{FinitePmf{{1.0}}}) {}
  explicit OffspringLaw(Pmf pmf) : OffspringLaw(std::vector<AgeRegime>{AgeRegime{0.0, std::move(pmf)}}) {}
  /// Regimes must start at 0 with strictly increasing thresholds.
  explicit OffspringLaw(std::vector<AgeRegime> regimes);

  std::span<const AgeRegime> regimes() const { return regimes_; }
  std::size_t regime_index(double age) const;
  const Pmf& at(double age) const { return regimes_[regime_index(age)].pmf; }

  /// g(x, z); throws DomainError unless 0 <= z <= 1.
  double g(double age, double z) const;
  /// g'(x, 1-).
  double mean(double age) const { return agebranch::mean(at(age)); }
  double second_moment(double age) const { return agebranch::second_moment(at(age)); }
  /// sup_x g'(x, 1-).
  double sup_mean() const;

  int sample(double age, Philox4x64& rng) const;

  bool operator==(const OffspringLaw&) const = default;

 private:
  std::vector<AgeRegime> regimes_;
};

struct ModelConstants {
  double c0 = 0.0;    ///< sup alpha (g' - 1): mean growth exponent
  double c1 = 0.0;    ///< sup alpha: dominating hazard per particle
  double beta = 0.0;  ///< sup alpha g': event-intensity exponent
};

/// Death-rate field alpha and offspring law; alpha must be bounded away from zero.
class BranchingModel {
 public:
  /// alpha = 1, pure death.
  BranchingModel() : BranchingModel(ScalarField::constant(1.0), OffspringLaw()) {}
  BranchingModel(ScalarField alpha, OffspringLaw offspring);

  const ScalarField& alpha() const { return alpha_; }
  const OffspringLaw& offspring() const { return offspring_; }
  const ModelConstants& constants() const { return constants_; }

  double g(double age, double z) const { return offspring_.g(age, z); }
  double mean(double age) const { return offspring_.mean(age); }

  bool operator==(const BranchingModel& o) const { return alpha_ == o.alpha_ && offspring_ == o.offspring_; }

 private:
  ScalarField alpha_;
  OffspringLaw offspring_;
  ModelConstants constants_;
};

/// Exact c0, c1, beta from regime-wise ranges of alpha.
ModelConstants compute_constants(const ScalarField& alpha, const OffspringLaw& offspring);

}  // namespace agebranch
