#include "agebranch/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "agebranch/errors.hpp"
#include "overloaded.hpp"

namespace agebranch {

using detail::Overloaded;

namespace {

void validate(const Pmf& pmf) {
  std::visit(Overloaded{
                 [](const FinitePmf& f) {
                   if (f.p.empty()) throw DomainError("offspring pmf: empty support");
                   double total = 0.0;
                   for (double p : f.p) {
                     if (!std::isfinite(p) || p < 0.0) throw DomainError("offspring pmf: probabilities must be >= 0");
                     total += p;
                   }
                   if (std::abs(total - 1.0) > 1e-12) throw DomainError("offspring pmf: probabilities must sum to 1");
                 },
                 [](const GeometricPmf& g) {
                   if (!(g.success > 0.0 && g.success <= 1.0)) throw DomainError("geometric pmf: success in (0, 1]");
                 },
                 [](const PoissonPmf& p) {
                   if (!(std::isfinite(p.mean) && p.mean >= 0.0)) throw DomainError("poisson pmf: mean must be >= 0");
                 },
             },
             pmf);
}

}  // namespace

double pgf(const Pmf& pmf, double z) {
  return std::visit(Overloaded{
                        [z](const FinitePmf& f) {
                          double acc = 0.0;
                          for (auto it = f.p.rbegin(); it != f.p.rend(); ++it) acc = acc * z + *it;
                          return acc;
                        },
                        [z](const GeometricPmf& g) { return g.success / (1.0 - (1.0 - g.success) * z); },
                        [z](const PoissonPmf& p) { return std::exp(p.mean * (z - 1.0)); },
                    },
                    pmf);
}

double mean(const Pmf& pmf) {
  return std::visit(Overloaded{
                        [](const FinitePmf& f) {
                          double acc = 0.0;
                          for (std::size_t k = 1; k < f.p.size(); ++k) acc += static_cast<double>(k) * f.p[k];
                          return acc;
                        },
                        [](const GeometricPmf& g) { return (1.0 - g.success) / g.success; },
                        [](const PoissonPmf& p) { return p.mean; },
                    },
                    pmf);
}

double second_moment(const Pmf& pmf) {
  return std::visit(Overloaded{
                        [](const FinitePmf& f) {
                          double acc = 0.0;
                          for (std::size_t k = 1; k < f.p.size(); ++k) acc += static_cast<double>(k * k) * f.p[k];
                          return acc;
                        },
                        [](const GeometricPmf& g) {
                          const double q = g.success;
                          return (1.0 - q) * (2.0 - q) / (q * q);
                        },
                        [](const PoissonPmf& p) { return p.mean + p.mean * p.mean; },
                    },
                    pmf);
}

OffspringLaw::OffspringLaw(std::vector<AgeRegime> regimes) : regimes_(std::move(regimes)) {
  if (regimes_.empty() || regimes_.front().from != 0.0) throw DomainError("offspring law: first regime must start at age 0");
  for (std::size_t i = 0; i < regimes_.size(); ++i) {
    if (i > 0 && !(regimes_[i].from > regimes_[i - 1].from && std::isfinite(regimes_[i].from))) {
      throw DomainError("offspring law: regime thresholds must be finite and strictly increasing");
    }
    validate(regimes_[i].pmf);
  }
}

std::size_t OffspringLaw::regime_index(double age) const {
  const auto it = std::upper_bound(regimes_.begin(), regimes_.end(), age,
                                   [](double x, const AgeRegime& r) { return x < r.from; });
  return it == regimes_.begin() ? 0 : static_cast<std::size_t>(it - regimes_.begin()) - 1;
}

double OffspringLaw::g(double age, double z) const {
  if (!(z >= 0.0 && z <= 1.0)) throw DomainError("g(x, z): z must lie in [0, 1]");
  return pgf(at(age), z);
}

double OffspringLaw::sup_mean() const {
  double m = 0.0;
  for (const auto& r : regimes_) m = std::max(m, agebranch::mean(r.pmf));
  return m;
}

int OffspringLaw::sample(double age, Philox4x64& rng) const {
  return std::visit(Overloaded{
                        [&rng](const FinitePmf& f) {
                          const double u = uniform01(rng);
                          double cum = 0.0;
                          for (std::size_t k = 0; k < f.p.size(); ++k) {
                            cum += f.p[k];
                            if (u < cum) return static_cast<int>(k);
                          }
                          // u landed in the rounding gap of the cumulative sum
                          for (std::size_t k = f.p.size(); k-- > 0;) {
                            if (f.p[k] > 0.0) return static_cast<int>(k);
                          }
                          return 0;
                        },
                        [&rng](const GeometricPmf& g) {
                          if (g.success == 1.0) return 0;
                          return std::geometric_distribution<int>(g.success)(rng);
                        },
                        [&rng](const PoissonPmf& p) {
                          if (p.mean == 0.0) return 0;
                          return std::poisson_distribution<int>(p.mean)(rng);
                        },
                    },
                    at(age));
}

ModelConstants compute_constants(const ScalarField& alpha, const OffspringLaw& offspring) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  ModelConstants c;
  c.c1 = alpha.sup();
  c.c0 = -kInf;
  c.beta = -kInf;
  const auto regimes = offspring.regimes();
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    const double to = i + 1 < regimes.size() ? regimes[i + 1].from : kInf;
    const Range r = alpha.range(regimes[i].from, to);
    const double m = mean(regimes[i].pmf);
    // alpha (m - 1) is maximised at sup alpha when m >= 1 and at inf alpha otherwise.
    c.c0 = std::max(c.c0, (m >= 1.0 ? r.sup : r.inf) * (m - 1.0));
    c.beta = std::max(c.beta, r.sup * m);
  }
  return c;
}

BranchingModel::BranchingModel(ScalarField alpha, OffspringLaw offspring)
    : alpha_(std::move(alpha)), offspring_(std::move(offspring)) {
  if (!(alpha_.inf() > 0.0)) throw DomainError("branching model: alpha must be bounded away from zero");
  if (!std::isfinite(alpha_.sup())) throw DomainError("branching model: alpha must be bounded");
  constants_ = compute_constants(alpha_, offspring_);
}

}  // namespace agebranch
