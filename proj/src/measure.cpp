#include "agebranch/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace agebranch {

AgeMeasure::AgeMeasure(std::vector<double> ages) : ages_(std::move(ages)) {
  for (double a : ages_) {
    if (!std::isfinite(a) || a < 0.0) throw DomainError("AgeMeasure: ages must be finite and >= 0");
  }
  std::sort(ages_.begin(), ages_.end());
}

std::size_t AgeMeasure::dist_fn(double x) const {
  if (x < 0.0) return 0;
  return static_cast<std::size_t>(std::upper_bound(ages_.begin(), ages_.end(), x) - ages_.begin());
}

AgeMeasure AgeMeasure::shifted(double t) const {
  if (!(t >= 0.0)) throw DomainError("AgeMeasure::shifted: t must be >= 0");
  AgeMeasure out;
  out.ages_.reserve(ages_.size());
  for (double a : ages_) out.ages_.push_back(a + t);
  return out;
}

void AgeMeasure::insert(double age) {
  if (!std::isfinite(age) || age < 0.0) throw DomainError("AgeMeasure::insert: age must be finite and >= 0");
  ages_.insert(std::upper_bound(ages_.begin(), ages_.end(), age), age);
}

void AgeMeasure::erase_at(std::size_t index) {
  if (index >= ages_.size()) throw DomainError("AgeMeasure::erase_at: index out of range");
  ages_.erase(ages_.begin() + static_cast<std::ptrdiff_t>(index));
}

double rho_distance(const AgeMeasure& a, const AgeMeasure& b) {
  // Walk the merged atom positions; between consecutive positions the two
  // distribution functions are constant, so each piece integrates c * e^{-x}.
  const auto xa = a.ages();
  const auto xb = b.ages();
  std::size_t i = 0, j = 0;
  long diff = 0;
  double acc = 0.0;
  while (i < xa.size() || j < xb.size()) {
    const double pos = std::min(i < xa.size() ? xa[i] : INFINITY, j < xb.size() ? xb[j] : INFINITY);
    while (i < xa.size() && xa[i] == pos) ++diff, ++i;
    while (j < xb.size() && xb[j] == pos) --diff, ++j;
    const double next = std::min(i < xa.size() ? xa[i] : INFINITY, j < xb.size() ? xb[j] : INFINITY);
    if (diff == 0) continue;
    const double weight = std::isinf(next) ? std::exp(-pos) : -std::exp(-pos) * std::expm1(-(next - pos));
    acc += static_cast<double>(std::labs(diff)) * weight;
  }
  return acc;
}

}  // namespace agebranch
