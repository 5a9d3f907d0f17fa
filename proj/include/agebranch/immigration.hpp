#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "agebranch/measure.hpp"
#include "agebranch/rng.hpp"

namespace agebranch {

/// One atom of a finite-support immigration measure: rate `weight` of group `group`.
struct WeightedGroup {
  double weight = 0.0;
  AgeMeasure group;
  bool operator==(const WeightedGroup&) const = default;
};

struct GroupList {
  std::vector<WeightedGroup> groups;
  bool operator==(const GroupList&) const = default;
};

/// weights[k - 1] is the relative weight of groups of size k.
struct FiniteSizeLaw {
  std::vector<double> weights;
  bool operator==(const FiniteSizeLaw&) const = default;
};

/// Relative weight k^{-s}, k >= 1, s > 1.
struct PowerSizeLaw {
  double exponent = 3.0;
  bool operator==(const PowerSizeLaw&) const = default;
};

/// Relative weight 1 / (k (log k)^q), k >= 2, q > 1.
struct LogPowerSizeLaw {
  double exponent = 2.0;
  bool operator==(const LogPowerSizeLaw&) const = default;
};

using SizeLaw = std::variant<FiniteSizeLaw, PowerSizeLaw, LogPowerSizeLaw>;

struct AgeAtom {
  double age = 0.0;
  double prob = 1.0;
  bool operator==(const AgeAtom&) const = default;
};

/// Arrivals at `rate`; group size from `size`, member ages i.i.d. from `ages`.
struct ParametricGroups {
  double rate = 0.0;
  SizeLaw size;
  std::vector<AgeAtom> ages;
  bool operator==(const ParametricGroups&) const = default;
};

using GroupLaw = std::variant<GroupList, ParametricGroups>;

enum class LogMomentStatus { finite, infinite, unknown };

struct LogMoment {
  LogMomentStatus status = LogMomentStatus::unknown;
  double value = 0.0;       ///< int 1{<nu,1> >= 1} log <nu,1> L(dnu) when finite
  std::string certificate;  ///< why the status holds
};

std::string to_string(LogMomentStatus s);

namespace detail {
struct SizeTables;
}

/// Finite measure L on nonzero populations: analytic side (psi, log-moment
/// criterion, moments) and generative side (group sampler) in one object.
class ImmigrationMechanism {
 public:
  /// No immigration.
  ImmigrationMechanism() : ImmigrationMechanism(GroupLaw{GroupList{}}) {}
  explicit ImmigrationMechanism(GroupLaw law);

  static ImmigrationMechanism single_immigrants(double rate, double age = 0.0) {
    return ImmigrationMechanism(GroupList{{WeightedGroup{rate, AgeMeasure{age}}}});
  }

  const GroupLaw& law() const { return law_; }
  double total_rate() const { return rate_; }
  /// Distinct ages any group can contain, ascending.
  const std::vector<double>& atom_ages() const { return atom_ages_; }

  /// psi(h) = int (1 - e^{-<nu,h>}) L(dnu). Throws TruncationError if a series
  /// remainder cannot be certified below tol.
  double psi(const std::function<double(double)>& h, double tol = 1e-13) const;
  /// int <nu,h> L(dnu); +inf when the mean group size diverges and h != 0 on the atoms.
  double linear(const std::function<double(double)>& h) const;
  /// int <nu,h>^2 L(dnu).
  double quadratic(const std::function<double(double)>& h) const;
  /// int <nu,1> L(dnu).
  double first_moment() const { return linear([](double) { return 1.0; }); }
  /// int Ein(kappa <nu,1>) L(dnu), Ein(x) = int_0^x (1 - e^{-z}) / z dz.
  /// Finite group-size laws only; throws PreconditionError otherwise.
  double ein_moment(double kappa) const;

  LogMoment log_moment() const;

  /// Draws a nonempty group from L / total_rate. Throws CapacityError if the
  /// sampled size exceeds max_size.
  AgeMeasure sample_group(Philox4x64& rng, std::size_t max_size = 100'000'000) const;

  bool operator==(const ImmigrationMechanism& o) const { return law_ == o.law_; }

 private:
  GroupLaw law_;
  double rate_ = 0.0;
  std::vector<double> atom_ages_;
  std::shared_ptr<const detail::SizeTables> tables_;
};

/// Ein(x) = int_0^x (1 - e^{-z}) / z dz.
double ein(double x);

}  // namespace agebranch
