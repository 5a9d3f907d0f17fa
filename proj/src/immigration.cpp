#include "agebranch/immigration.hpp"

#include <algorithm>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/zeta.hpp>
#include <cmath>
#include <limits>

#include "agebranch/errors.hpp"
#include "overloaded.hpp"

namespace agebranch {

using detail::Overloaded;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Sizes below this index are tabulated; the remainder is handled analytically.
constexpr std::size_t kHeadEnd = 4096;

}  // namespace

namespace detail {

/// Group-size law numerics: a tabulated head k in [kmin, head_end) plus, for
/// infinite-support laws, an analytic tail k >= head_end treated by
/// Euler-Maclaurin with the closed-form integral of the weight function.
struct SizeTables {
  std::size_t kmin = 1;
  std::size_t head_end = 1;
  std::vector<double> head_weight;  // unnormalised w_k
  std::vector<double> head_cdf;     // normalised cumulative
  double norm = 1.0;                // sum over all k of w_k
  double tail_sum = 0.0;            // sum_{k >= head_end} w_k
  double mean = 0.0;                // E[K]
  double second = 0.0;              // E[K^2]
  bool has_tail = false;

  std::function<double(double)> w;         // weight as a function of real x
  std::function<double(double)> dw;        // derivative of w
  std::function<double(double)> tail_int;  // int_x^inf w
  std::function<double(double)> tail_inv;  // inverse of tail_int
  std::function<double(double)> cell;      // int_k^{k+1} w, cancellation-free

  double em_tail(const std::function<double(double)>& f_int_tail, double fk, double dfk) const {
    return f_int_tail(static_cast<double>(head_end)) + 0.5 * fk - dfk / 12.0;
  }
};

}  // namespace detail

namespace {

using detail::SizeTables;

std::shared_ptr<const SizeTables> build_tables(const SizeLaw& law) {
  auto t = std::make_shared<SizeTables>();
  std::visit(
      Overloaded{
          [&](const FiniteSizeLaw& f) {
            if (f.weights.empty()) throw DomainError("immigration: finite size law needs weights");
            t->kmin = 1;
            t->head_end = f.weights.size() + 1;
            t->head_weight = f.weights;
            for (double w : f.weights) {
              if (!std::isfinite(w) || w < 0.0) throw DomainError("immigration: size weights must be >= 0");
            }
          },
          [&](const PowerSizeLaw& p) {
            const double s = p.exponent;
            if (!(s > 1.0 && std::isfinite(s))) throw DomainError("immigration: power size law needs exponent > 1");
            t->kmin = 1;
            t->has_tail = true;
            t->w = [s](double x) { return std::pow(x, -s); };
            t->dw = [s](double x) { return -s * std::pow(x, -s - 1.0); };
            t->tail_int = [s](double x) { return std::pow(x, 1.0 - s) / (s - 1.0); };
            t->tail_inv = [s](double v) { return std::pow((s - 1.0) * v, 1.0 / (1.0 - s)); };
            t->cell = [s](double k) { return -std::pow(k, 1.0 - s) * std::expm1((1.0 - s) * std::log1p(1.0 / k)) / (s - 1.0); };
          },
          [&](const LogPowerSizeLaw& l) {
            const double q = l.exponent;
            if (!(q > 1.0 && std::isfinite(q))) throw DomainError("immigration: log-power size law needs exponent > 1");
            t->kmin = 2;
            t->has_tail = true;
            t->w = [q](double x) { return 1.0 / (x * std::pow(std::log(x), q)); };
            t->dw = [q](double x) {
              const double lx = std::log(x);
              return -(lx + q) / (x * x * std::pow(lx, q + 1.0));
            };
            t->tail_int = [q](double x) { return std::pow(std::log(x), 1.0 - q) / (q - 1.0); };
            t->tail_inv = [q](double v) { return std::exp(std::pow((q - 1.0) * v, 1.0 / (1.0 - q))); };
            t->cell = [q](double k) {
              const double lk = std::log(k);
              return -std::pow(lk, 1.0 - q) * std::expm1((1.0 - q) * std::log1p(std::log1p(1.0 / k) / lk)) / (q - 1.0);
            };
          },
      },
      law);

  if (t->has_tail) {
    t->head_end = kHeadEnd;
    for (std::size_t k = t->kmin; k < t->head_end; ++k) t->head_weight.push_back(t->w(static_cast<double>(k)));
    const double K = static_cast<double>(t->head_end);
    t->tail_sum = t->em_tail(t->tail_int, t->w(K), t->dw(K));
  }
  double head = 0.0;
  for (double w : t->head_weight) head += w;
  t->norm = head + t->tail_sum;
  if (!(t->norm > 0.0)) throw DomainError("immigration: size law has zero total weight");

  double cum = 0.0;
  for (double w : t->head_weight) {
    cum += w;
    t->head_cdf.push_back(cum / t->norm);
  }

  std::visit(Overloaded{
                 [&](const FiniteSizeLaw& f) {
                   double m1 = 0.0, m2 = 0.0;
                   for (std::size_t i = 0; i < f.weights.size(); ++i) {
                     const double k = static_cast<double>(i + 1);
                     m1 += k * f.weights[i];
                     m2 += k * k * f.weights[i];
                   }
                   t->mean = m1 / t->norm;
                   t->second = m2 / t->norm;
                 },
                 [&](const PowerSizeLaw& p) {
                   const double s = p.exponent;
                   // zeta(s) is the closed-form normaliser; keep it as the reference value.
                   t->norm = boost::math::zeta(s);
                   t->mean = s > 2.0 ? boost::math::zeta(s - 1.0) / t->norm : kInf;
                   t->second = s > 3.0 ? boost::math::zeta(s - 2.0) / t->norm : kInf;
                 },
                 [&](const LogPowerSizeLaw&) {
                   t->mean = kInf;
                   t->second = kInf;
                 },
             },
             law);
  return t;
}

double normalised_sum(double total, double to_check, const char* what) {
  if (std::abs(total - 1.0) > 1e-12) throw DomainError(std::string("immigration: ") + what + " must sum to 1");
  return to_check;
}

// integrate() is not const-qualified, so each thread keeps its own instance.
boost::math::quadrature::exp_sinh<double>& half_line_integrator() {
  thread_local boost::math::quadrature::exp_sinh<double> integrator;
  return integrator;
}

}  // namespace

std::string to_string(LogMomentStatus s) {
  switch (s) {
    case LogMomentStatus::finite:
      return "finite";
    case LogMomentStatus::infinite:
      return "infinite";
    case LogMomentStatus::unknown:
      return "unknown";
  }
  return "unknown";
}

double ein(double x) {
  if (!(x > 0.0)) return 0.0;
  if (x < 1.0) {
    // Alternating series sum_{k>=1} (-1)^{k+1} x^k / (k k!).
    double term = x, acc = 0.0;
    for (int k = 1; k < 60; ++k) {
      acc += term / k;
      term *= -x / (k + 1);
      if (std::abs(term) < 1e-18 * std::abs(acc)) break;
    }
    return acc;
  }
  return boost::math::expint(1, x) + std::log(x) + boost::math::constants::euler<double>();
}

ImmigrationMechanism::ImmigrationMechanism(GroupLaw law) : law_(std::move(law)) {
  std::visit(Overloaded{
                 [&](const GroupList& g) {
                   for (const auto& wg : g.groups) {
                     if (!(std::isfinite(wg.weight) && wg.weight > 0.0)) {
                       throw DomainError("immigration: group weights must be finite and > 0");
                     }
                     if (wg.group.empty()) throw DomainError("immigration: groups must be nonempty");
                     rate_ += wg.weight;
                     for (double a : wg.group.ages()) atom_ages_.push_back(a);
                   }
                 },
                 [&](const ParametricGroups& p) {
                   if (!(std::isfinite(p.rate) && p.rate >= 0.0)) throw DomainError("immigration: rate must be >= 0");
                   if (p.ages.empty()) throw DomainError("immigration: age law needs at least one atom");
                   double total = 0.0;
                   for (const auto& a : p.ages) {
                     if (!(std::isfinite(a.age) && a.age >= 0.0)) throw DomainError("immigration: ages must be >= 0");
                     if (!(a.prob >= 0.0)) throw DomainError("immigration: age probabilities must be >= 0");
                     total += a.prob;
                     atom_ages_.push_back(a.age);
                   }
                   normalised_sum(total, 0.0, "age probabilities");
                   rate_ = p.rate;
                   tables_ = build_tables(p.size);
                 },
             },
             law_);
  std::sort(atom_ages_.begin(), atom_ages_.end());
  atom_ages_.erase(std::unique(atom_ages_.begin(), atom_ages_.end()), atom_ages_.end());
}

double ImmigrationMechanism::psi(const std::function<double(double)>& h, double tol) const {
  return std::visit(
      Overloaded{
          [&](const GroupList& g) {
            double acc = 0.0;
            for (const auto& wg : g.groups) acc += wg.weight * -std::expm1(-integrate(wg.group, h));
            return acc;
          },
          [&](const ParametricGroups& p) {
            if (p.rate == 0.0) return 0.0;
            // 1 - phi where phi = E e^{-h(A)} for a single member
            double d = 0.0;
            for (const auto& a : p.ages) d += a.prob * -std::expm1(-h(a.age));
            if (d <= 0.0) return 0.0;
            if (d >= 1.0) return p.rate;
            const double ell = std::log1p(-d);  // log phi < 0
            const SizeTables& t = *tables_;
            double acc = 0.0;
            for (std::size_t i = 0; i < t.head_weight.size(); ++i) {
              const double k = static_cast<double>(t.kmin + i);
              acc += t.head_weight[i] * -std::expm1(k * ell);
            }
            if (t.has_tail) {
              const double K = static_cast<double>(t.head_end);
              // sum_{k>=K} w_k (1 - phi^k) = tail_sum - sum_{k>=K} w_k phi^k
              double damped = 0.0;
              if (ell * K > -700.0) {
                double err = 0.0;
                const auto f = [&](double x) { return t.w(K + x) * std::exp(ell * (K + x)); };
                const double integral = half_line_integrator().integrate(f, 1e-12, &err);
                const double eK = std::exp(ell * K);
                damped = integral + 0.5 * t.w(K) * eK - (t.dw(K) + ell * t.w(K)) * eK / 12.0;
                if (err * p.rate / t.norm > tol) {
                  throw TruncationError("psi: group-size series remainder not certified below tolerance");
                }
              }
              acc += t.tail_sum - damped;
            }
            return p.rate * acc / t.norm;
          },
      },
      law_);
}

double ImmigrationMechanism::linear(const std::function<double(double)>& h) const {
  return std::visit(Overloaded{
                        [&](const GroupList& g) {
                          double acc = 0.0;
                          for (const auto& wg : g.groups) acc += wg.weight * integrate(wg.group, h);
                          return acc;
                        },
                        [&](const ParametricGroups& p) {
                          double mu = 0.0;
                          for (const auto& a : p.ages) mu += a.prob * h(a.age);
                          if (mu == 0.0 || p.rate == 0.0) return 0.0;
                          return p.rate * tables_->mean * mu;
                        },
                    },
                    law_);
}

double ImmigrationMechanism::quadratic(const std::function<double(double)>& h) const {
  return std::visit(Overloaded{
                        [&](const GroupList& g) {
                          double acc = 0.0;
                          for (const auto& wg : g.groups) {
                            const double v = integrate(wg.group, h);
                            acc += wg.weight * v * v;
                          }
                          return acc;
                        },
                        [&](const ParametricGroups& p) {
                          double mu = 0.0, m2 = 0.0;
                          for (const auto& a : p.ages) {
                            const double v = h(a.age);
                            mu += a.prob * v;
                            m2 += a.prob * v * v;
                          }
                          if (m2 == 0.0 || p.rate == 0.0) return 0.0;
                          // E[S^2] for S a sum of K i.i.d. copies
                          const double var = m2 - mu * mu;
                          const double mean_part = var > 0.0 ? tables_->mean * var : 0.0;
                          const double second_part = mu != 0.0 ? tables_->second * mu * mu : 0.0;
                          return p.rate * (mean_part + second_part);
                        },
                    },
                    law_);
}

double ImmigrationMechanism::ein_moment(double kappa) const {
  return std::visit(Overloaded{
                        [&](const GroupList& g) {
                          double acc = 0.0;
                          for (const auto& wg : g.groups) acc += wg.weight * ein(kappa * static_cast<double>(wg.group.mass()));
                          return acc;
                        },
                        [&](const ParametricGroups& p) {
                          const SizeTables& t = *tables_;
                          if (t.has_tail) {
                            throw PreconditionError("Ein moment: only available for finite group-size laws");
                          }
                          double acc = 0.0;
                          for (std::size_t i = 0; i < t.head_weight.size(); ++i) {
                            acc += t.head_weight[i] * ein(kappa * static_cast<double>(t.kmin + i));
                          }
                          return p.rate * acc / t.norm;
                        },
                    },
                    law_);
}

LogMoment ImmigrationMechanism::log_moment() const {
  return std::visit(
      Overloaded{
          [&](const GroupList& g) {
            LogMoment out{LogMomentStatus::finite, 0.0, "finite support"};
            for (const auto& wg : g.groups) out.value += wg.weight * std::log(static_cast<double>(wg.group.mass()));
            return out;
          },
          [&](const ParametricGroups& p) {
            const SizeTables& t = *tables_;
            LogMoment out{LogMomentStatus::finite, 0.0, ""};
            double head = 0.0;
            for (std::size_t i = 0; i < t.head_weight.size(); ++i) {
              head += t.head_weight[i] * std::log(static_cast<double>(t.kmin + i));
            }
            return std::visit(
                Overloaded{
                    [&](const FiniteSizeLaw&) {
                      out.value = p.rate * head / t.norm;
                      out.certificate = "finite support";
                      return out;
                    },
                    [&](const PowerSizeLaw& s) {
                      const double e = s.exponent;
                      const double K = static_cast<double>(t.head_end);
                      const double lk = std::log(K);
                      // int_K^inf x^{-s} log x dx in closed form, plus Euler-Maclaurin corrections
                      const double integral = std::pow(K, 1.0 - e) * (lk / (e - 1.0) + 1.0 / ((e - 1.0) * (e - 1.0)));
                      const double gK = std::pow(K, -e) * lk;
                      const double dgK = std::pow(K, -e - 1.0) * (1.0 - e * lk);
                      out.value = p.rate * (head + integral + 0.5 * gK - dgK / 12.0) / t.norm;
                      out.certificate = "sum k^-s log k converges for s > 1 (comparison with k^-(1+s)/2)";
                      return out;
                    },
                    [&](const LogPowerSizeLaw& s) {
                      const double q = s.exponent;
                      if (q <= 2.0) {
                        out.status = LogMomentStatus::infinite;
                        out.value = kInf;
                        out.certificate = "sum 1/(k (log k)^(q-1)) diverges for q <= 2 (integral test)";
                        return out;
                      }
                      const double r = q - 1.0;
                      const double K = static_cast<double>(t.head_end);
                      const double lk = std::log(K);
                      const double integral = std::pow(lk, 1.0 - r) / (r - 1.0);
                      const double gK = 1.0 / (K * std::pow(lk, r));
                      const double dgK = -(lk + r) / (K * K * std::pow(lk, r + 1.0));
                      out.value = p.rate * (head + integral + 0.5 * gK - dgK / 12.0) / t.norm;
                      out.certificate = "sum 1/(k (log k)^(q-1)) converges for q > 2 (integral test)";
                      return out;
                    },
                },
                p.size);
          },
      },
      law_);
}

AgeMeasure ImmigrationMechanism::sample_group(Philox4x64& rng, std::size_t max_size) const {
  if (!(rate_ > 0.0)) throw DomainError("sample_group: total rate must be > 0");
  return std::visit(
      Overloaded{
          [&](const GroupList& g) {
            const double u = uniform01(rng) * rate_;
            double cum = 0.0;
            for (const auto& wg : g.groups) {
              cum += wg.weight;
              if (u < cum) return wg.group;
            }
            return g.groups.back().group;
          },
          [&](const ParametricGroups& p) {
            const SizeTables& t = *tables_;
            std::size_t size = 0;
            const double u = uniform01(rng);
            if (!t.has_tail || u < t.head_cdf.back()) {
              const auto it = std::upper_bound(t.head_cdf.begin(), t.head_cdf.end(), u);
              const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - t.head_cdf.begin()), t.head_cdf.size() - 1);
              size = t.kmin + idx;
            } else {
              // Rejection from the continuous density proportional to w on [K, inf).
              const double K = static_cast<double>(t.head_end);
              const double envelope = t.w(K) / t.w(K + 1.0);
              const double top = t.tail_int(K);
              for (;;) {
                const double x = t.tail_inv(top * (1.0 - uniform01(rng)));
                if (!std::isfinite(x) || x >= static_cast<double>(max_size) + 1.0) {
                  throw CapacityError("sample_group: sampled group size exceeds capacity");
                }
                const double k = std::floor(x);
                if (uniform01(rng) * envelope * t.cell(k) < t.w(k)) {
                  size = static_cast<std::size_t>(k);
                  break;
                }
              }
            }
            if (size > max_size) throw CapacityError("sample_group: sampled group size exceeds capacity");
            std::vector<double> ages;
            ages.reserve(size);
            for (std::size_t i = 0; i < size; ++i) {
              const double v = uniform01(rng);
              double cum = 0.0;
              double age = p.ages.back().age;
              for (const auto& a : p.ages) {
                cum += a.prob;
                if (v < cum) {
                  age = a.age;
                  break;
                }
              }
              ages.push_back(age);
            }
            return AgeMeasure(std::move(ages));
          },
      },
      law_);
}

}  // namespace agebranch
