#include "agebranch/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "agebranch/errors.hpp"
#include "agebranch/parallel.hpp"

namespace agebranch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

SimConfig replicate_config(const SimConfig& base, double t, const McSettings& s, std::uint64_t purpose, std::size_t r) {
  SimConfig cfg = base;
  cfg.t_end = t;
  cfg.snapshot_times.clear();
  cfg.record_events = false;
  cfg.seed = s.seed;
  cfg.purpose = purpose;
  cfg.replicate = r;
  return cfg;
}

void require_replicates(const McSettings& s, std::size_t minimum) {
  if (s.replicates < minimum) {
    throw DomainError("monte carlo: need at least " + std::to_string(minimum) + " replicates");
  }
}

double mean_of(std::span<const double> xs) {
  std::vector<double> kept;
  kept.reserve(xs.size());
  for (double x : xs) {
    if (!std::isnan(x)) kept.push_back(x);
  }
  return kept.empty() ? 0.0 : pairwise_sum(kept) / static_cast<double>(kept.size());
}

template <class Fn>
TolerancedValue richardson(double dt, Fn&& at) {
  const double coarse = at(dt);
  const double fine = at(0.5 * dt);
  return {fine, std::abs(fine - coarse)};
}

}  // namespace

McEstimate make_estimate(std::span<const double> samples, std::uint64_t seed) {
  std::vector<double> kept;
  kept.reserve(samples.size());
  for (double x : samples) {
    if (!std::isnan(x)) kept.push_back(x);
  }
  if (kept.size() < 2) throw DomainError("monte carlo: need at least 2 usable replicates");
  McEstimate e;
  e.replicates = kept.size();
  e.excluded = samples.size() - kept.size();
  e.seed = seed;
  const double n = static_cast<double>(kept.size());
  e.value = pairwise_sum(kept) / n;
  std::vector<double> sq(kept.size());
  std::transform(kept.begin(), kept.end(), sq.begin(), [&](double x) { return (x - e.value) * (x - e.value); });
  e.std_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  return e;
}

ComparisonReport make_report(std::string name, const McEstimate& mc, double analytic, double tol, Sidedness sidedness,
                             bool negative_control) {
  ComparisonReport r;
  r.name = std::move(name);
  r.mc = mc;
  r.analytic = analytic;
  r.tol = tol;
  r.sidedness = sidedness;
  r.negative_control = negative_control;
  const double denom = std::hypot(mc.std_error, tol);
  const double diff = mc.value - analytic;
  if (denom > 0.0) {
    r.z = diff / denom;
  } else {
    r.z = diff == 0.0 ? 0.0 : std::copysign(kInf, diff);
  }
  bool accept;
  if (sidedness == Sidedness::two_sided) {
    accept = std::abs(r.z) <= kZThreshold;
    r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  } else {
    accept = r.z <= kZThreshold;
    r.p_value = 0.5 * std::erfc(r.z / std::sqrt(2.0));
  }
  r.pass = negative_control ? !accept : accept;
  return r;
}

std::vector<double> sample_functional(const SimConfig& base, const ScalarField& f, double t, const McSettings& s,
                                      std::uint64_t purpose) {
  if (!(t >= 0.0)) throw DomainError("monte carlo: t must be >= 0");
  return run_replicates<double>(s.replicates, s.parallelism, [&](std::size_t r) {
    if (t == 0.0) return integrate(base.initial, f);
    const auto traj = simulate(replicate_config(base, t, s, purpose, r));
    return traj.biased() ? kNaN : integrate(traj.final_state, f);
  });
}

McEstimate estimate_laplace(const SimConfig& base, const ScalarField& f, double t, const McSettings& s) {
  require_replicates(s, 100);
  auto xs = sample_functional(base, f, t, s, stream::laplace);
  for (double& x : xs) x = std::exp(-x);
  return make_estimate(xs, s.seed);
}

TolerancedValue laplace_reference(const SimConfig& base, const ScalarField& f, double t, double dt) {
  if (t == 0.0) return {std::exp(-integrate(base.initial, f)), 0.0};
  return richardson(dt, [&](double h) {
    return analytic_laplace(base.model, base.immigration, base.initial, f, SolverGrid{h, t}).value;
  });
}

TolerancedValue mean_reference(const SimConfig& base, const ScalarField& f, double t, double dt) {
  if (t == 0.0) return {integrate(base.initial, f), 0.0};
  return richardson(dt, [&](double h) {
    return analytic_mean(base.model, base.immigration, base.initial, f, SolverGrid{h, t});
  });
}

TolerancedValue extinction_reference(const SimConfig& base, double t, double dt) {
  if (t == 0.0) return {base.initial.empty() ? 1.0 : 0.0, 0.0};
  const Function infinite = [](double) { return kInf; };
  return richardson(dt, [&](double h) {
    return analytic_laplace(base.model, base.immigration, base.initial, infinite, SolverGrid{h, t}).value;
  });
}

ComparisonReport compare_laplace(const SimConfig& base, const ScalarField& f, double t, const McSettings& s) {
  const auto mc = estimate_laplace(base, f, t, s);
  const auto ref = laplace_reference(base, f, t, s.dt);
  return make_report("laplace", mc, ref.value, ref.tol);
}

ComparisonReport compare_mean(const SimConfig& base, const ScalarField& f, double t, const McSettings& s) {
  require_replicates(s, 2);
  const auto xs = sample_functional(base, f, t, s, stream::mean);
  const auto ref = mean_reference(base, f, t, s.dt);
  return make_report("mean", make_estimate(xs, s.seed), ref.value, ref.tol);
}

ComparisonReport compare_extinction(const SimConfig& base, double t, const McSettings& s) {
  require_replicates(s, 2);
  auto xs = sample_functional(base, ScalarField::constant(1.0), t, s, stream::extinction);
  for (double& x : xs) {
    if (!std::isnan(x)) x = x == 0.0 ? 1.0 : 0.0;
  }
  const auto ref = extinction_reference(base, t, s.dt);
  return make_report("extinction", make_estimate(xs, s.seed), ref.value, ref.tol);
}

std::vector<ComparisonReport> bound_suite(const SimConfig& base, double t, const McSettings& s) {
  require_replicates(s, 2);
  if (base.immigration.total_rate() > 0.0) throw PreconditionError("bound suite: defined without immigration only");
  if (!(t > 0.0)) throw DomainError("bound suite: t must be > 0");
  struct Sample {
    double running_max = 0.0;
    double events = 0.0;
    double mass = 0.0;
  };
  const auto samples = run_replicates<Sample>(s.replicates, s.parallelism, [&](std::size_t r) {
    const auto traj = simulate(replicate_config(base, t, s, stream::bounds, r));
    if (traj.biased()) return Sample{kNaN, kNaN, kNaN};
    return Sample{static_cast<double>(traj.running_max), static_cast<double>(traj.branch_events),
                  static_cast<double>(traj.final_state.mass())};
  });
  std::vector<double> running_max, events, mass;
  for (const auto& x : samples) {
    running_max.push_back(x.running_max);
    events.push_back(x.events);
    mass.push_back(x.mass);
  }
  const auto& c = base.model.constants();
  const double x0 = static_cast<double>(base.initial.mass());
  const double growth = c.beta == 0.0 ? t : std::expm1(c.beta * t) / c.beta;
  return {
      make_report("running_max_bound", make_estimate(running_max, s.seed), x0 * std::exp(c.beta * t), 0.0,
                  Sidedness::upper_bound),
      make_report("event_count_bound", make_estimate(events, s.seed), c.c1 * x0 * growth, 0.0, Sidedness::upper_bound),
      make_report("mean_mass_bound", make_estimate(mass, s.seed), x0 * std::exp(c.c0 * t), 0.0,
                  Sidedness::upper_bound),
  };
}

std::string to_string(TestG g) {
  switch (g) {
    case TestG::identity:
      return "identity";
    case TestG::exp:
      return "exp";
    case TestG::square:
      return "square";
  }
  return "exp";
}

TestG parse_test_g(const std::string& name) {
  if (name == "identity") return TestG::identity;
  if (name == "exp") return TestG::exp;
  if (name == "square") return TestG::square;
  throw DomainError("unknown test function G '" + name + "' (expected identity, exp or square)");
}

namespace {

double apply_g(TestG g, double a) {
  switch (g) {
    case TestG::identity:
      return a;
    case TestG::exp:
      return std::exp(-a);
    case TestG::square:
      return a * a;
  }
  return 0.0;
}

}  // namespace

double generator(const BranchingModel& model, const ImmigrationMechanism& imm, TestG g, const ScalarField& f,
                 const AgeMeasure& mu) {
  const auto& alpha = model.alpha();
  const auto& law = model.offspring();
  const double f0 = f(0.0);
  const double a = integrate(mu, f);
  const double drift = integrate(mu, [&](double y) { return f.derivative(y); });
  auto fn = [&](double y) { return f(y); };
  double total = 0.0;
  switch (g) {
    case TestG::identity: {
      total = drift;
      for (double y : mu.ages()) total += alpha(y) * (law.mean(y) * f0 - f(y));
      if (imm.total_rate() > 0.0) total += imm.linear(fn);
      break;
    }
    case TestG::exp: {
      const double ea = std::exp(-a);
      const double z = std::exp(-f0);
      double branch = 0.0;
      for (double y : mu.ages()) branch += alpha(y) * (std::exp(-a + f(y)) * law.g(y, z) - ea);
      total = -drift * ea + branch;
      if (imm.total_rate() > 0.0) total -= ea * imm.psi(fn);
      break;
    }
    case TestG::square: {
      total = 2.0 * a * drift;
      for (double y : mu.ages()) {
        const double fy = f(y), m = law.mean(y);
        total += alpha(y) * (2.0 * a * (m * f0 - fy) + law.second_moment(y) * f0 * f0 - 2.0 * m * f0 * fy + fy * fy);
      }
      if (imm.total_rate() > 0.0) total += 2.0 * a * imm.linear(fn) + imm.quadratic(fn);
      break;
    }
  }
  return total;
}

ComparisonReport martingale_residual(const SimConfig& base, TestG g, const ScalarField& f, double t,
                                     const McSettings& s, double lg_scale) {
  require_replicates(s, 2);
  if (!f.smooth()) throw DomainError("martingale residual: f must be a smooth catalog field");
  const std::size_t k = s.snapshot_intervals;
  if (k < 2 || k % 2 != 0) throw DomainError("martingale residual: snapshot intervals must be even and >= 2");
  const std::string name = "martingale_" + to_string(g) + (lg_scale != 1.0 ? "_perturbed" : "");
  if (t == 0.0) {
    const std::vector<double> zeros(s.replicates, 0.0);
    return make_report(name, make_estimate(zeros, s.seed), 0.0, 0.0, Sidedness::two_sided, lg_scale != 1.0);
  }
  std::vector<double> grid(k + 1);
  for (std::size_t i = 0; i <= k; ++i) grid[i] = t * static_cast<double>(i) / static_cast<double>(k);
  grid[k] = t;

  using Pair = std::pair<double, double>;
  const auto samples = run_replicates<Pair>(s.replicates, s.parallelism, [&](std::size_t r) {
    SimConfig cfg = replicate_config(base, t, s, stream::martingale, r);
    cfg.snapshot_times = grid;
    const auto traj = simulate(cfg);
    if (traj.biased()) return Pair{kNaN, kNaN};
    std::vector<double> lg(k + 1);
    for (std::size_t i = 0; i <= k; ++i) lg[i] = generator(base.model, base.immigration, g, f, traj.snapshots[i].state);
    const double h = t / static_cast<double>(k);
    double fine = 0.5 * (lg[0] + lg[k]);
    for (std::size_t i = 1; i < k; ++i) fine += lg[i];
    fine *= h;
    double coarse = 0.5 * (lg[0] + lg[k]);
    for (std::size_t i = 2; i < k; i += 2) coarse += lg[i];
    coarse *= 2.0 * h;
    const double jump = apply_g(g, integrate(traj.snapshots[k].state, f)) - apply_g(g, integrate(traj.snapshots[0].state, f));
    return Pair{jump - lg_scale * fine, jump - lg_scale * coarse};
  });
  std::vector<double> fine, coarse;
  for (const auto& [a, b] : samples) {
    fine.push_back(a);
    coarse.push_back(b);
  }
  const auto mc = make_estimate(fine, s.seed);
  // Trapezoid bias of the time integral, from h vs 2h.
  const double tol = std::abs(mean_of(fine) - mean_of(coarse)) / 3.0;
  return make_report(name, mc, 0.0, tol, Sidedness::two_sided, lg_scale != 1.0);
}

ErgodicStudy ergodic_convergence(const SimConfig& base, const ScalarField& f, std::span<const double> horizons,
                                 const McSettings& s, double stationary_tol) {
  const auto erg = ergodicity_check(base.model, base.immigration);
  if (erg.status != Ergodicity::ergodic) {
    throw PreconditionError("ergodic convergence: not certified ergodic (" + to_string(erg.status) + ": " + erg.reason +
                            ")");
  }
  if (horizons.empty()) throw DomainError("ergodic convergence: need at least one horizon");
  if (!std::is_sorted(horizons.begin(), horizons.end())) throw DomainError("ergodic convergence: horizons must be sorted");
  require_replicates(s, 100);

  ErgodicStudy out;
  out.stationary = stationary_laplace(base.model, base.immigration, f, stationary_tol);
  McEstimate last;
  for (double T : horizons) {
    if (!(T > 0.0)) throw DomainError("ergodic convergence: horizons must be > 0");
    const auto ref = laplace_reference(base, f, T, s.dt);
    auto xs = sample_functional(base, f, T, s, stream::ergodic);
    for (double& x : xs) x = std::exp(-x);
    last = make_estimate(xs, s.seed);
    out.horizons.push_back(T);
    out.finite_analytic.push_back(ref.value);
    out.analytic_gaps.push_back(std::abs(ref.value - out.stationary.value));
    std::string label = "ergodic_laplace_T";
    label += std::to_string(T);
    label.erase(label.find_last_not_of('0') + 1);
    if (label.back() == '.') label.pop_back();
    out.reports.push_back(make_report(label, last, ref.value, ref.tol));
  }
  const double stat_tol = out.stationary.quad_error + out.stationary.tail_bound;
  out.reports.push_back(make_report("ergodic_stationary", last, out.stationary.value, stat_tol));
  out.gaps_decreasing = true;
  for (std::size_t i = 1; i < out.analytic_gaps.size(); ++i) {
    if (!(out.analytic_gaps[i] < out.analytic_gaps[i - 1])) out.gaps_decreasing = false;
  }
  return out;
}

}  // namespace agebranch
