#pragma once

#include <cstddef>
#include <initializer_list>
#include <iterator>
#include <ranges>
#include <span>
#include <vector>

#include "agebranch/errors.hpp"

namespace agebranch {

/// Finite integer-valued measure on [0, inf): a sorted multiset of particle ages.
class AgeMeasure {
 public:
  AgeMeasure() = default;
  /// Sorts the ages; throws DomainError on negative or non-finite entries.
  explicit AgeMeasure(std::vector<double> ages);
  AgeMeasure(std::initializer_list<double> ages) : AgeMeasure(std::vector<double>(ages)) {}

  std::span<const double> ages() const { return ages_; }
  std::size_t mass() const { return ages_.size(); }
  bool empty() const { return ages_.empty(); }

  /// Number of particles with age <= x (right-continuous, 0 for x < 0).
  std::size_t dist_fn(double x) const;

  /// Every age increased by t >= 0.
  AgeMeasure shifted(double t) const;

  void insert(double age);
  void erase_at(std::size_t index);

  bool operator==(const AgeMeasure&) const = default;

 private:
  std::vector<double> ages_;
};

/// <nu, f> = sum of f over particles.
template <class F>
double integrate(const AgeMeasure& nu, F&& f) {
  double acc = 0.0;
  for (double a : nu.ages()) acc += f(a);
  return acc;
}

namespace detail {

/// Position in an ascending age range of inf{z : _alpha nu(z) > y <nu, alpha>}.
/// Returns the index of the first particle whose cumulative alpha-mass exceeds
/// the target; used directly by the simulator on its private population view.
template <std::ranges::forward_range Ages, class Alpha>
std::size_t alpha_weighted_pick(const Ages& ages, const Alpha& alpha, double y) {
  double total = 0.0;
  std::size_t n = 0;
  for (double a : ages) {
    total += alpha(a);
    ++n;
  }
  if (n == 0) throw EmptyPopulationError("alpha_weighted_inverse: empty measure");
  const double target = total * y;
  double cum = 0.0;
  std::size_t i = 0;
  for (double a : ages) {
    cum += alpha(a);
    if (cum > target) return i;
    ++i;
  }
  // y within an ulp of 1: rounding left no strict exceedance.
  return n - 1;
}

}  // namespace detail

/// Age drawn by the alpha-weighted right-continuous inverse at level y in [0, 1).
template <class Alpha>
double alpha_weighted_inverse(const AgeMeasure& nu, const Alpha& alpha, double y) {
  if (!(y >= 0.0 && y < 1.0)) throw DomainError("alpha_weighted_inverse: y must lie in [0, 1)");
  const auto ages = nu.ages();
  return ages[detail::alpha_weighted_pick(ages, alpha, y)];
}

/// rho(nu1, nu2) = int_0^inf e^{-x} |nu1[0,x] - nu2[0,x]| dx, in closed form.
double rho_distance(const AgeMeasure& a, const AgeMeasure& b);

}  // namespace agebranch
