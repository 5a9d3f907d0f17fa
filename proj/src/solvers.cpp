#include "agebranch/solvers.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "agebranch/csv.hpp"
#include "agebranch/errors.hpp"
#include "agebranch/kernels.hpp"

namespace agebranch {

namespace {

constexpr double kClosureTol = 1e-12;
constexpr int kClosureMaxIter = 200;

std::string dt_text(double dt) {
  std::ostringstream os;
  os << dt;
  return os.str();
}

}  // namespace

std::string to_string(Quadrature q) { return q == Quadrature::trapezoid ? "trapezoid" : "rectangle"; }
std::string to_string(EquationForm f) { return f == EquationForm::renewal ? "renewal" : "transport"; }

std::string to_string(Ergodicity e) {
  switch (e) {
    case Ergodicity::ergodic:
      return "ergodic";
    case Ergodicity::not_ergodic:
      return "not_ergodic";
    case Ergodicity::unknown:
      return "unknown";
  }
  return "unknown";
}

std::size_t SolverGrid::steps() const {
  const auto n = std::llround(horizon / dt);
  return static_cast<std::size_t>(std::max<long long>(1, n));
}

double SolverGrid::step() const { return horizon / static_cast<double>(steps()); }

void SolverGrid::validate() const {
  if (!(std::isfinite(dt) && dt > 0.0)) throw DomainError("solver grid: dt must be finite and > 0");
  if (!(std::isfinite(horizon) && horizon >= 0.0)) throw DomainError("solver grid: horizon must be finite and >= 0");
}

namespace detail {

/// Ray equation in state variables. For u the state is v = 1 - e^{-u} with
/// source 1 - g(age, 1 - v_boundary), which keeps u = 0 and pure death exact;
/// for pi the state is pi itself with source m(age) * boundary.
struct RayProblem {
  CharacteristicSolution::Kind kind;
  BranchingModel model;
  Function f;
  SolverGrid grid;
  double h = 0.0;
  std::vector<double> boundary_state;

  bool cumulant() const { return kind == CharacteristicSolution::Kind::cumulant; }

  double initial(double y) const {
    const double fy = f(y);
    if (!(fy >= 0.0)) throw DomainError("solver: f must be nonnegative");
    return cumulant() ? -std::expm1(-fy) : fy;
  }

  double source(const Pmf& pmf, double vb) const {
    if (cumulant()) return 1.0 - pgf(pmf, std::clamp(1.0 - vb, 0.0, 1.0));
    return mean(pmf) * vb;
  }

  double source_at(double age, double vb) const { return source(model.offspring().at(age), vb); }

  double output(double state) const { return cumulant() ? -std::log1p(-state) : state; }
  double to_state(double value) const { return cumulant() ? -std::expm1(-value) : value; }

  /// One scalar step of the configured scheme.
  double advance(double w, double d, double a0, double s0, double a1, double s1, double hs) const {
    const bool trap = grid.quadrature == Quadrature::trapezoid;
    if (grid.form == EquationForm::renewal) {
      return trap ? kernels::renewal_trapezoid_step(w, d, a0, s0, a1, s1, 0.5 * hs)
                  : kernels::renewal_rectangle_step(w, d, a0, s0, hs);
    }
    return trap ? kernels::transport_trapezoid_step(w, a0, s0, a1, s1, 0.5 * hs)
                : kernels::transport_rectangle_step(w, a0, s0, hs);
  }
};

}  // namespace detail

namespace {

using detail::RayProblem;

struct Run {
  std::size_t begin;
  std::size_t end;
  std::size_t regime;
};

/// Rays y = offset + k h, k = 0..rays. At step j the ray k carries age offset + (k - j) h.
struct Family {
  double offset = 0.0;
  std::size_t rays = 0;
  std::vector<double> alpha;
  std::vector<double> decay;
  std::vector<Run> runs;
  std::vector<double> s_cur;
  std::vector<double> s_next;
  std::vector<double> w;

  Family(const RayProblem& p, double off, std::size_t k_max) : offset(off), rays(k_max) {
    const auto& alpha_field = p.model.alpha();
    const auto& off_law = p.model.offspring();
    alpha.resize(rays + 1);
    decay.assign(rays + 1, 1.0);
    w.resize(rays + 1);
    s_cur.resize(rays + 1);
    s_next.resize(rays + 1);
    for (std::size_t m = 0; m <= rays; ++m) {
      const double age = offset + static_cast<double>(m) * p.h;
      alpha[m] = alpha_field(age);
      if (m > 0) decay[m] = std::exp(-alpha_field.integral(offset + static_cast<double>(m - 1) * p.h, age));
      w[m] = p.initial(age);
      const std::size_t reg = off_law.regime_index(age);
      if (runs.empty() || runs.back().regime != reg) {
        runs.push_back({m, m + 1, reg});
      } else {
        runs.back().end = m + 1;
      }
    }
  }

  void fill(const RayProblem& p, std::vector<double>& s, double vb) const {
    const auto regimes = p.model.offspring().regimes();
    for (const auto& r : runs) {
      std::fill(s.begin() + static_cast<std::ptrdiff_t>(r.begin), s.begin() + static_cast<std::ptrdiff_t>(r.end),
                p.source(regimes[r.regime].pmf, vb));
    }
  }

  /// Advances rays first..rays through one step (age index m0 = k - j).
  void march(const RayProblem& p, std::size_t j, std::size_t first) {
    if (first > rays) return;
    const std::size_t n = rays - first + 1;
    const std::size_t m0 = first - j;
    const std::size_t m1 = m0 - 1;
    const kernels::Lanes lanes{
        std::span<double>(w).subspan(first, n),
        std::span<const double>(decay).subspan(m0, n),
        std::span<const double>(alpha).subspan(m0, n),
        std::span<const double>(s_cur).subspan(m0, n),
        std::span<const double>(alpha).subspan(m1, n),
        std::span<const double>(s_next).subspan(m1, n),
    };
    const bool trap = p.grid.quadrature == Quadrature::trapezoid;
    if (p.grid.form == EquationForm::renewal) {
      trap ? kernels::renewal_trapezoid(lanes, p.h) : kernels::renewal_rectangle(lanes, p.h);
    } else {
      trap ? kernels::transport_trapezoid(lanes, p.h) : kernels::transport_rectangle(lanes, p.h);
    }
  }
};

}  // namespace

CharacteristicSolution solve_characteristics(CharacteristicSolution::Kind kind, const BranchingModel& model,
                                             Function f, const SolverGrid& grid, const RecordOptions& record) {
  grid.validate();
  auto problem = std::make_shared<RayProblem>(RayProblem{kind, model, std::move(f), grid, grid.step(), {}});
  RayProblem& p = *problem;
  const double h = p.h;
  const double c1 = model.constants().c1;
  if (!(h * c1 < 1.0)) {
    throw ContractionError("solver: dt * c1 = " + dt_text(h * c1) + " >= 1; reduce dt below " + dt_text(1.0 / c1) +
                           " (dt = " + dt_text(h) + ")");
  }
  if (!(record.x_max >= 0.0 && std::isfinite(record.x_max))) throw DomainError("solver: x_max must be finite and >= 0");

  const std::size_t n = grid.steps();
  const std::size_t extra = record.stride > 0 ? static_cast<std::size_t>(std::ceil(record.x_max / h - 1e-9)) : 0;

  CharacteristicSolution sol;
  sol.kind_ = kind;
  sol.grid_ = grid;
  sol.h_ = h;

  Family base(p, 0.0, n + extra);
  std::vector<Family> others;
  for (double a : record.trace_ages) {
    if (!(a >= 0.0 && std::isfinite(a))) throw DomainError("solver: trace ages must be finite and >= 0");
    if (a == 0.0 || std::find(sol.trace_ages_.begin(), sol.trace_ages_.end(), a) != sol.trace_ages_.end()) continue;
    sol.trace_ages_.push_back(a);
  }
  std::sort(sol.trace_ages_.begin(), sol.trace_ages_.end());
  others.reserve(sol.trace_ages_.size());
  for (double a : sol.trace_ages_) others.emplace_back(p, a, n);
  sol.traces_.assign(others.size(), std::vector<double>(n + 1));

  p.boundary_state.resize(n + 1);
  p.boundary_state[0] = base.w[0];
  base.fill(p, base.s_cur, base.w[0]);
  for (auto& fam : others) fam.fill(p, fam.s_cur, base.w[0]);

  auto record_step = [&](std::size_t j) {
    for (std::size_t i = 0; i < others.size(); ++i) sol.traces_[i][j] = p.output(others[i].w[j]);
    if (record.stride > 0 && (j % record.stride == 0 || j == n)) {
      std::vector<double> row(extra + 1);
      for (std::size_t i = 0; i <= extra; ++i) row[i] = p.output(base.w[j + i]);
      sol.table_.t.push_back(static_cast<double>(j) * h);
      sol.table_.values.push_back(std::move(row));
    }
  };
  sol.table_.dx = h;
  record_step(0);

  const bool trap = grid.quadrature == Quadrature::trapezoid;
  const double hh = 0.5 * h;
  const Pmf& pmf0 = model.offspring().at(0.0);
  for (std::size_t j = 0; j < n; ++j) {
    // Ray j + 1 reaches age 0 at t_{j+1}; its value closes the boundary.
    const double w = base.w[j + 1];
    const double d = base.decay[1], a0 = base.alpha[1], s0 = base.s_cur[1], a1 = base.alpha[0];
    double next;
    if (!trap) {
      next = p.advance(w, d, a0, s0, a1, 0.0, h);
    } else if (kind == CharacteristicSolution::Kind::moment) {
      const double m0 = mean(pmf0);
      const double den = grid.form == EquationForm::renewal ? 1.0 - hh * a1 * m0 : 1.0 + hh * a1 - hh * a1 * m0;
      if (!(den > 0.0)) {
        throw ContractionError("solver: implicit boundary step is singular; reduce dt (dt = " + dt_text(h) + ")");
      }
      const double num = grid.form == EquationForm::renewal ? d * w + hh * (d * a0 * s0)
                                                            : w + hh * (a0 * (s0 - w));
      next = num / den;
    } else {
      next = p.advance(w, d, a0, s0, a1, p.source(pmf0, w), h);
      bool converged = false;
      for (int it = 0; it < kClosureMaxIter; ++it) {
        const double upd = p.advance(w, d, a0, s0, a1, p.source(pmf0, next), h);
        const double delta = std::abs(upd - next);
        next = upd;
        if (delta <= kClosureTol) {
          converged = true;
          break;
        }
      }
      if (!converged || !std::isfinite(next)) {
        throw ContractionError("solver: boundary fixed point did not converge; reduce dt (dt = " + dt_text(h) + ")");
      }
    }
    base.w[j + 1] = next;
    p.boundary_state[j + 1] = next;

    base.fill(p, base.s_next, next);
    base.march(p, j, j + 2);
    for (auto& fam : others) {
      fam.fill(p, fam.s_next, next);
      fam.march(p, j, j + 1);
      std::swap(fam.s_cur, fam.s_next);
    }
    std::swap(base.s_cur, base.s_next);
    record_step(j + 1);
  }

  sol.boundary_.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) sol.boundary_[j] = p.output(p.boundary_state[j]);
  sol.problem_ = std::move(problem);
  return sol;
}

std::span<const double> CharacteristicSolution::trace(double age) const {
  if (age == 0.0) return boundary_;
  const auto it = std::lower_bound(trace_ages_.begin(), trace_ages_.end(), age);
  if (it == trace_ages_.end() || *it != age) throw DomainError("solution: age was not registered as a trace age");
  return traces_[static_cast<std::size_t>(it - trace_ages_.begin())];
}

double CharacteristicSolution::operator()(double t, double x) const {
  const RayProblem& p = *problem_;
  const std::size_t n = steps();
  const double horizon = static_cast<double>(n) * h_;
  if (!(x >= 0.0 && std::isfinite(x))) throw DomainError("solution: x must be finite and >= 0");
  if (!(t >= 0.0 && t <= horizon * (1.0 + 1e-12) + 1e-300)) throw DomainError("solution: t outside [0, horizon]");
  t = std::min(t, horizon);
  if (t == 0.0) return p.f(x);

  auto jj = static_cast<std::size_t>(std::floor(t / h_));
  double rem = t - static_cast<double>(jj) * h_;
  if (rem > h_ * (1.0 - 1e-12)) {
    ++jj;
    rem = 0.0;
  }
  if (jj >= n) {
    jj = n;
    rem = 0.0;
  }
  if (rem < 1e-12 * h_) rem = 0.0;

  const double y = x + t;
  const auto& alpha = p.model.alpha();
  auto step = [&](double w, double age0, double age1, double hs, double vb0, double vb1) {
    age1 = std::max(age1, 0.0);
    const double d = std::exp(-alpha.integral(age1, age0));
    return p.advance(w, d, alpha(age0), p.source_at(age0, vb0), alpha(age1), p.source_at(age1, vb1), hs);
  };

  double w = p.initial(y);
  for (std::size_t j = 0; j < jj; ++j) {
    w = step(w, y - static_cast<double>(j) * h_, y - static_cast<double>(j + 1) * h_, h_, p.boundary_state[j],
             p.boundary_state[j + 1]);
  }
  if (rem > 0.0) {
    const double b = boundary_[jj] + (boundary_[jj + 1] - boundary_[jj]) * (rem / h_);
    w = step(w, y - static_cast<double>(jj) * h_, x, rem, p.boundary_state[jj], p.to_state(b));
  }
  return p.output(w);
}

CumulantSolution solve_u(const BranchingModel& model, const ScalarField& f, const SolverGrid& grid,
                         const RecordOptions& record) {
  return solve_u(model, Function([f](double x) { return f(x); }), grid, record);
}

CumulantSolution solve_u(const BranchingModel& model, Function f, const SolverGrid& grid, const RecordOptions& record) {
  return solve_characteristics(CharacteristicSolution::Kind::cumulant, model, std::move(f), grid, record);
}

MomentSolution solve_pi(const BranchingModel& model, const ScalarField& f, const SolverGrid& grid,
                        const RecordOptions& record) {
  return solve_pi(model, Function([f](double x) { return f(x); }), grid, record);
}

MomentSolution solve_pi(const BranchingModel& model, Function f, const SolverGrid& grid, const RecordOptions& record) {
  return solve_characteristics(CharacteristicSolution::Kind::moment, model, std::move(f), grid, record);
}

double survival_lower_bound(const BranchingModel& model, const ScalarField& f, double t, double x) {
  if (!(t >= 0.0 && x >= 0.0)) throw DomainError("survival_lower_bound: t and x must be >= 0");
  return -std::expm1(-f(x + t)) * std::exp(-model.alpha().integral(x, x + t));
}

namespace {

/// Quadrature over the solver's time grid of s -> value(j).
template <class F>
double time_quadrature(const CharacteristicSolution& sol, F&& value) {
  const std::size_t n = sol.steps();
  double acc = 0.0;
  if (sol.grid().quadrature == Quadrature::trapezoid) {
    acc = 0.5 * (value(0) + value(n));
    for (std::size_t j = 1; j < n; ++j) acc += value(j);
  } else {
    for (std::size_t j = 0; j < n; ++j) acc += value(j);
  }
  return acc * sol.step();
}

std::vector<double> merged_ages(const AgeMeasure& sigma, const ImmigrationMechanism& imm) {
  std::vector<double> ages(sigma.ages().begin(), sigma.ages().end());
  ages.insert(ages.end(), imm.atom_ages().begin(), imm.atom_ages().end());
  return ages;
}

double psi_quadrature(const CharacteristicSolution& sol, const ImmigrationMechanism& imm) {
  if (imm.total_rate() == 0.0) return 0.0;
  return time_quadrature(sol, [&](std::size_t j) { return imm.psi([&](double a) { return sol.trace(a)[j]; }); });
}

}  // namespace

double psi_integral(const BranchingModel& model, const ImmigrationMechanism& imm, const ScalarField& f,
                    const SolverGrid& grid) {
  if (imm.total_rate() == 0.0) return 0.0;
  RecordOptions rec;
  rec.trace_ages = imm.atom_ages();
  return psi_quadrature(solve_u(model, f, grid, rec), imm);
}

AnalyticValue analytic_laplace(const BranchingModel& model, const ImmigrationMechanism& imm, const AgeMeasure& sigma,
                               const ScalarField& f, const SolverGrid& grid) {
  return analytic_laplace(model, imm, sigma, Function([f](double x) { return f(x); }), grid);
}

AnalyticValue analytic_laplace(const BranchingModel& model, const ImmigrationMechanism& imm, const AgeMeasure& sigma,
                               Function f, const SolverGrid& grid) {
  RecordOptions rec;
  rec.trace_ages = merged_ages(sigma, imm);
  const auto sol = solve_u(model, std::move(f), grid, rec);
  const std::size_t n = sol.steps();
  double exponent = 0.0;
  for (double a : sigma.ages()) exponent += sol.trace(a)[n];
  exponent += psi_quadrature(sol, imm);
  return {std::exp(-exponent), exponent};
}

double analytic_mean(const BranchingModel& model, const ImmigrationMechanism& imm, const AgeMeasure& sigma,
                     const ScalarField& f, const SolverGrid& grid) {
  RecordOptions rec;
  rec.trace_ages = merged_ages(sigma, imm);
  const auto sol = solve_pi(model, f, grid, rec);
  const std::size_t n = sol.steps();
  double acc = 0.0;
  for (double a : sigma.ages()) acc += sol.trace(a)[n];
  if (imm.total_rate() > 0.0) {
    acc += time_quadrature(sol, [&](std::size_t j) { return imm.linear([&](double a) { return sol.trace(a)[j]; }); });
  }
  return acc;
}

ErgodicityReport ergodicity_check(const BranchingModel& model, const ImmigrationMechanism& imm) {
  ErgodicityReport r;
  r.c0 = model.constants().c0;
  r.log_moment = imm.log_moment();
  if (!(r.c0 < 0.0)) {
    r.status = Ergodicity::unknown;
    r.reason = "c0 >= 0: the ergodicity theorem requires c0 < 0";
    return r;
  }
  if (imm.total_rate() == 0.0) {
    r.status = Ergodicity::ergodic;
    r.reason = "no immigration and c0 < 0: extinction, limit is the null measure";
    return r;
  }
  switch (r.log_moment.status) {
    case LogMomentStatus::finite:
      r.status = Ergodicity::ergodic;
      r.reason = "c0 < 0 and log-moment finite (" + r.log_moment.certificate + ")";
      break;
    case LogMomentStatus::infinite:
      r.status = Ergodicity::not_ergodic;
      r.reason = "c0 < 0 and log-moment infinite (" + r.log_moment.certificate + ")";
      break;
    case LogMomentStatus::unknown:
      r.status = Ergodicity::unknown;
      r.reason = "log-moment convergence not certified";
      break;
  }
  return r;
}

StationaryResult stationary_laplace(const BranchingModel& model, const ImmigrationMechanism& imm,
                                    const ScalarField& f, double tol) {
  if (!(tol > 0.0)) throw DomainError("stationary_laplace: tolerance must be > 0");
  const auto erg = ergodicity_check(model, imm);
  if (erg.status != Ergodicity::ergodic) {
    throw PreconditionError("stationary_laplace: not certified ergodic (" + to_string(erg.status) + ": " + erg.reason +
                            ")");
  }
  StationaryResult out;
  const double fsup = f.sup();
  if (imm.total_rate() == 0.0 || fsup == 0.0) return out;

  const double c0 = erg.c0;
  // int_T^inf psi(u_s f) ds <= |c0|^{-1} int Ein(||f|| e^{c0 T} <nu,1>) L(dnu) via u <= pi, ||pi_s f|| <= e^{c0 s}||f||.
  auto tail = [&](double T) {
    const double kappa = fsup * std::exp(c0 * T);
    try {
      return imm.ein_moment(kappa) / -c0;
    } catch (const PreconditionError&) {
      const double m1 = imm.first_moment();
      if (!std::isfinite(m1)) {
        throw PreconditionError("stationary_laplace: no certified tail bound for this group-size law");
      }
      return m1 * kappa / -c0;
    }
  };
  double T = 1.0;
  while (tail(T) > 0.5 * tol) {
    T = std::ceil(T * 1.2);
    if (T > 1e5) throw TruncationError("stationary_laplace: tail bound does not reach tolerance");
  }
  out.horizon = T;
  out.tail_bound = tail(T);

  SolverGrid grid;
  grid.horizon = T;
  grid.dt = std::min(0.05, 0.25 / model.constants().c1);
  // Richardson values R_k from dt_k and dt_k / 2; |R_k - R_{k-1}| estimates the
  // error of R_{k-1} and so bounds that of the reported R_k.
  double coarse = psi_integral(model, imm, f, grid);
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int halving = 0; halving < 12; ++halving) {
    grid.dt *= 0.5;
    const double fine = psi_integral(model, imm, f, grid);
    const double extrapolated = fine + (fine - coarse) / 3.0;
    const double err = std::abs(extrapolated - previous);
    if (err < 0.5 * tol) {
      out.exponent = extrapolated;
      out.quad_error = err;
      out.dt = grid.step();
      out.value = std::exp(-out.exponent);
      return out;
    }
    coarse = fine;
    previous = extrapolated;
  }
  throw TruncationError("stationary_laplace: quadrature did not reach tolerance");
}

IdentityCheck elementary_identity_check(double a, double c, double n) {
  if (!(a > 0.0 && c > 0.0 && n >= 1.0)) throw DomainError("identity check: need a > 0, c > 0, n >= 1");
  IdentityCheck r{a, c, n, 0.0, 0.0};
  boost::math::quadrature::exp_sinh<double> half_line;
  r.lhs = half_line.integrate([&](double s) { return -std::expm1(-a * n * std::exp(-c * s)); }, 1e-14);
  const auto integrand = [](double z) { return z == 0.0 ? 1.0 : -std::expm1(-z) / z; };
  r.rhs = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 0.0, a * n, 15, 1e-14) / c;
  return r;
}

std::vector<IdentityCheck> identity_grid() {
  std::vector<IdentityCheck> out;
  for (double a : {0.5, 1.0, 2.0}) {
    for (double c : {0.5, 1.0, 2.0}) {
      for (double n : {1.0, 2.0, 5.0}) out.push_back(elementary_identity_check(a, c, n));
    }
  }
  return out;
}

void write_boundary_csv(std::ostream& out, const CharacteristicSolution& sol) {
  csv::row(out, {"t", "b"});
  const auto b = sol.boundary();
  for (std::size_t j = 0; j < b.size(); ++j) csv::row(out, {csv::number(sol.time(j)), csv::number(b[j])});
}

void write_field_csv(std::ostream& out, const CharacteristicSolution& sol) {
  csv::row(out, {"t", "x", "value"});
  const auto& tab = sol.table();
  for (std::size_t r = 0; r < tab.t.size(); ++r) {
    for (std::size_t i = 0; i < tab.values[r].size(); ++i) {
      csv::row(out, {csv::number(tab.t[r]), csv::number(static_cast<double>(i) * tab.dx), csv::number(tab.values[r][i])});
    }
  }
}

}  // namespace agebranch
