#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "agebranch/errors.hpp"
#include "agebranch/kernels.hpp"
#include "agebranch/rng.hpp"
#include "agebranch/solvers.hpp"

using namespace agebranch;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

BranchingModel critical_binary() {
  return BranchingModel(ScalarField::constant(1.0), OffspringLaw(Pmf{FinitePmf{{0.5, 0.0, 0.5}}}));
}

BranchingModel pure_death(ScalarField alpha = ScalarField::constant(1.0)) {
  return BranchingModel(std::move(alpha), OffspringLaw());
}

SolverGrid grid(double dt, double horizon, Quadrature q = Quadrature::trapezoid,
                EquationForm form = EquationForm::renewal) {
  return SolverGrid{dt, horizon, q, form};
}

// Critical binary, alpha = 1: E s^{Z_t} = 1 - (1 - s) / (1 + t (1 - s) / 2).
double critical_u(double theta, double t) {
  const double s = std::exp(-theta);
  return -std::log(1.0 - (1.0 - s) / (1.0 + t * (1.0 - s) / 2.0));
}

struct Lanes {
  std::vector<double> w, decay, a0, s0, a1, s1;
  explicit Lanes(std::size_t n, std::uint64_t seed) : w(n), decay(n), a0(n), s0(n), a1(n), s1(n) {
    Philox4x64 rng(seed, n);
    for (auto* v : {&w, &decay, &a0, &s0, &a1, &s1}) {
      for (double& x : *v) x = uniform01(rng) * 2.0;
    }
  }
  kernels::Lanes view() { return {w, decay, a0, s0, a1, s1}; }
};

// Restores the dispatched ISA after a test changes it.
struct IsaGuard {
  kernels::Isa saved = kernels::active_isa();
  ~IsaGuard() { kernels::set_isa(saved); }
};

}  // namespace

TEST_SUITE("solvers") {
  TEST_CASE("scalar and AVX2 kernels agree bit for bit") {
    if (!kernels::avx2_available()) {
      MESSAGE("AVX2 not available; only the scalar kernels are exercised");
      CHECK_THROWS_AS(kernels::set_isa(kernels::Isa::avx2), DomainError);
      return;
    }
    using Kernel = void (*)(const kernels::Lanes&, double);
    const std::pair<Kernel, Kernel> pairs[] = {
        {kernels::scalar::renewal_trapezoid, kernels::avx2::renewal_trapezoid},
        {kernels::scalar::renewal_rectangle, kernels::avx2::renewal_rectangle},
        {kernels::scalar::transport_trapezoid, kernels::avx2::transport_trapezoid},
        {kernels::scalar::transport_rectangle, kernels::avx2::transport_rectangle},
    };
    for (const auto& [scalar, vector] : pairs) {
      for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 13u, 37u, 1000u}) {
        Lanes a(n, 42), b(n, 42);
        scalar(a.view(), 0.013);
        vector(b.view(), 0.013);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(std::bit_cast<std::uint64_t>(a.w[i]) == std::bit_cast<std::uint64_t>(b.w[i]));
      }
    }
  }

  TEST_CASE("scalar kernels evaluate the per-lane step") {
    Lanes l(7, 1);
    const auto before = l.w;
    kernels::scalar::renewal_trapezoid(l.view(), 0.1);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(l.w[i] == kernels::renewal_trapezoid_step(before[i], l.decay[i], l.a0[i], l.s0[i], l.a1[i], l.s1[i], 0.05));
    }
  }

  TEST_CASE("solutions do not depend on the dispatched ISA") {
    IsaGuard guard;
    const auto model = BranchingModel(ScalarField::exp_decay(0.5, 1.0, 1.0), OffspringLaw(Pmf{PoissonPmf{1.2}}));
    const auto f = ScalarField::rational(0.2, 1.0, 1.0);
    kernels::set_isa(kernels::Isa::scalar);
    CHECK(kernels::active_isa() == kernels::Isa::scalar);
    const auto a = solve_u(model, f, grid(1e-2, 2.0));
    const auto pa = solve_pi(model, f, grid(1e-2, 2.0, Quadrature::trapezoid, EquationForm::transport));
    if (kernels::avx2_available()) {
      kernels::set_isa(kernels::Isa::avx2);
      const auto b = solve_u(model, f, grid(1e-2, 2.0));
      const auto pb = solve_pi(model, f, grid(1e-2, 2.0, Quadrature::trapezoid, EquationForm::transport));
      CHECK(std::equal(a.boundary().begin(), a.boundary().end(), b.boundary().begin()));
      CHECK(std::equal(pa.boundary().begin(), pa.boundary().end(), pb.boundary().begin()));
    }
    CHECK(kernels::to_string(kernels::Isa::scalar) == "scalar");
  }

  TEST_CASE("grid arithmetic") {
    CHECK(grid(1e-3, 1.0).steps() == 1000);
    CHECK(grid(0.3, 1.0).steps() == 3);
    CHECK(grid(0.3, 1.0).step() == doctest::Approx(1.0 / 3.0));
    CHECK(grid(5.0, 1.0).steps() == 1);
    CHECK_THROWS_AS(grid(0.0, 1.0).validate(), DomainError);
    CHECK_THROWS_AS(grid(-1.0, 1.0).validate(), DomainError);
    CHECK_THROWS_AS(grid(0.1, NAN).validate(), DomainError);
  }

  TEST_CASE("critical binary cumulant against the closed form") {
    const auto model = critical_binary();
    const auto sol = solve_u(model, ScalarField::constant(1.0), grid(1e-3, 1.0));
    CHECK(sol.boundary().front() == doctest::Approx(1.0));
    CHECK(sol.boundary().back() == doctest::Approx(0.654528129921877512025).epsilon(1e-7));
    for (std::size_t j = 0; j <= sol.steps(); j += 100) {
      CHECK(std::abs(sol.boundary()[j] - critical_u(1.0, sol.time(j))) < 1e-7);
    }
    const auto half = solve_u(model, ScalarField::constant(0.5), grid(1e-3, 2.0));
    CHECK(half.boundary().back() == doctest::Approx(0.331796565751186226425).epsilon(1e-7));
  }

  TEST_CASE("pure death cumulant is exact along the boundary") {
    const auto sol = solve_u(pure_death(), ScalarField::constant(1.0), grid(1e-3, 1.0));
    CHECK(std::abs(sol.boundary().back() - 0.264674335944480775290) < 1e-12);
    const auto two = solve_u(pure_death(), ScalarField::constant(2.0), grid(1e-2, 0.5, Quadrature::rectangle));
    CHECK(std::abs(two.boundary().back() - 0.743274126109948179709) < 1e-12);
  }

  TEST_CASE("age-dependent hazard: boundary, trace and evaluator") {
    const auto model = pure_death(ScalarField::exp_decay(0.5, 1.0, 1.0));
    RecordOptions rec;
    rec.trace_ages = {0.7};
    const auto sol = solve_u(model, ScalarField::constant(1.0), grid(1e-3, 1.0), rec);
    CHECK(sol.boundary().back() == doctest::Approx(0.227858915949295847827).epsilon(1e-10));
    CHECK(sol.trace(0.7).back() == doctest::Approx(0.328655288617858502716).epsilon(1e-10));
    CHECK(sol(1.0, 0.7) == doctest::Approx(0.328655288617858502716).epsilon(1e-9));
    CHECK(sol(1.0, 0.0) == doctest::Approx(sol.boundary().back()).epsilon(1e-12));
    CHECK(sol(0.0, 3.0) == doctest::Approx(1.0));
    CHECK(sol.trace(0.0).back() == sol.boundary().back());
    CHECK_THROWS_AS(sol.trace(0.3), DomainError);
    CHECK_THROWS_AS(sol(2.0, 0.0), DomainError);
    CHECK_THROWS_AS(sol(0.5, -1.0), DomainError);
  }

  TEST_CASE("moment semigroup") {
    const auto death = solve_pi(pure_death(), ScalarField::constant(1.0), grid(1e-3, 1.0));
    CHECK(std::abs(death.boundary().back() - std::exp(-1.0)) < 1e-12);
    // f(x) = e^{-x}: survivors carry e^{-(x+t)}, so pi_t f(0) = e^{-2t}.
    const auto decay = solve_pi(pure_death(), ScalarField::exp_decay(0.0, 1.0, 1.0), grid(1e-3, 1.0));
    CHECK(std::abs(decay.boundary().back() - std::exp(-2.0)) < 1e-7);
    const auto crit = solve_pi(critical_binary(), ScalarField::constant(1.0), grid(1e-3, 2.0));
    // Second order: error ~ h^2, here 1.7e-7 at h = 1e-3.
    CHECK(std::abs(crit.boundary().back() - 1.0) < 1e-6);
    const auto poi = solve_pi(BranchingModel(ScalarField::constant(2.0), OffspringLaw(Pmf{PoissonPmf{1.5}})),
                              ScalarField::constant(1.0), grid(1e-3, 1.0));
    CHECK(poi.boundary().back() == doctest::Approx(std::exp(1.0)).epsilon(1e-5));  // h^2 error 6e-6
  }

  TEST_CASE("observed orders of the four schemes") {
    const auto model = critical_binary();
    for (auto form : {EquationForm::renewal, EquationForm::transport}) {
      for (auto q : {Quadrature::rectangle, Quadrature::trapezoid}) {
        std::vector<double> err;
        for (double dt : {4e-3, 2e-3, 1e-3}) {
          err.push_back(std::abs(solve_u(model, ScalarField::constant(1.0), grid(dt, 1.0, q, form)).boundary().back() -
                                 critical_u(1.0, 1.0)));
        }
        const double nominal = q == Quadrature::rectangle ? 1.0 : 2.0;
        CAPTURE(to_string(form));
        CAPTURE(to_string(q));
        CHECK(std::abs(std::log2(err[0] / err[1]) - nominal) <= 0.3);
        CHECK(std::abs(std::log2(err[1] / err[2]) - nominal) <= 0.3);
      }
    }
  }

  TEST_CASE("renewal and transport forms agree") {
    const auto model = BranchingModel(ScalarField::rational(0.5, 1.0, 2.0),
                                      OffspringLaw({{0.0, Pmf{GeometricPmf{0.5}}}, {1.5, Pmf{PoissonPmf{0.5}}}}));
    const auto f = ScalarField::exp_decay(0.1, 1.0, 0.5);
    const auto a = solve_u(model, f, grid(1e-3, 2.0));
    const auto b = solve_u(model, f, grid(1e-3, 2.0, Quadrature::trapezoid, EquationForm::transport));
    CHECK(std::abs(a.boundary().back() - b.boundary().back()) < 1e-6);
    const auto pa = solve_pi(model, f, grid(1e-3, 2.0));
    const auto pb = solve_pi(model, f, grid(1e-3, 2.0, Quadrature::trapezoid, EquationForm::transport));
    CHECK(std::abs(pa.boundary().back() - pb.boundary().back()) < 1e-6);
  }

  TEST_CASE("lower bound <= u <= pi on every grid node") {
    const std::vector<BranchingModel> models = {
        critical_binary(),
        pure_death(),
        pure_death(ScalarField::step({1.0}, {2.0, 0.5})),
        BranchingModel(ScalarField::exp_decay(0.5, 1.0, 1.0), OffspringLaw(Pmf{PoissonPmf{1.3}})),
        BranchingModel(ScalarField::table({0.0, 1.0, 2.0}, {1.0, 2.0, 0.5}), OffspringLaw(Pmf{GeometricPmf{0.6}})),
    };
    const auto f = ScalarField::exp_decay(0.2, 1.0, 1.0);
    const double x_max = 2.0;
    for (const auto& model : models) {
      RecordOptions rec;
      rec.x_max = x_max;
      rec.stride = 50;
      const auto u = solve_u(model, f, grid(1e-2, 2.0), rec);
      const auto pi = solve_pi(model, f, grid(1e-2, 2.0), rec);
      const auto& tu = u.table();
      const auto& tp = pi.table();
      REQUIRE(tu.values.size() == tp.values.size());
      REQUIRE(!tu.values.empty());
      for (std::size_t r = 0; r < tu.values.size(); ++r) {
        for (std::size_t i = 0; i < tu.values[r].size(); ++i) {
          const double x = static_cast<double>(i) * tu.dx;
          REQUIRE(tu.values[r][i] <= tp.values[r][i] + 1e-12);
          REQUIRE(tu.values[r][i] >= survival_lower_bound(model, f, tu.t[r], x) - 1e-12);
        }
      }
    }
  }

  TEST_CASE("solver preconditions") {
    const auto fast = BranchingModel(ScalarField::constant(200.0), OffspringLaw());
    CHECK_THROWS_AS(solve_u(fast, ScalarField::constant(1.0), grid(1e-2, 1.0)), ContractionError);
    CHECK_THROWS_AS(solve_pi(fast, ScalarField::constant(1.0), grid(1e-2, 1.0)), ContractionError);
    CHECK_THROWS_AS(solve_u(critical_binary(), [](double) { return -1.0; }, grid(1e-2, 1.0)), DomainError);
    RecordOptions bad;
    bad.trace_ages = {-1.0};
    CHECK_THROWS_AS(solve_u(critical_binary(), ScalarField::constant(1.0), grid(1e-2, 1.0), bad), DomainError);
    CHECK_THROWS_AS(survival_lower_bound(critical_binary(), ScalarField::constant(1.0), -1.0, 0.0), DomainError);
  }

  TEST_CASE("zero horizon and zero data") {
    const auto sol = solve_u(critical_binary(), ScalarField::constant(0.0), grid(1e-2, 1.0));
    for (double b : sol.boundary()) CHECK(b == 0.0);
    const auto now = solve_u(critical_binary(), ScalarField::constant(1.5), grid(1e-2, 0.0));
    CHECK(now.boundary().back() == doctest::Approx(1.5));
  }

  TEST_CASE("Laplace functional, extinction and mean") {
    const auto model = critical_binary();
    const ImmigrationMechanism none;
    const auto lap = analytic_laplace(model, none, AgeMeasure{0.0}, ScalarField::constant(1.0), grid(1e-3, 1.0));
    CHECK(lap.value == doctest::Approx(0.519687229592639151883).epsilon(1e-7));
    CHECK(lap.exponent == doctest::Approx(-std::log(lap.value)));
    const auto ext = analytic_laplace(model, none, AgeMeasure{0.0}, [](double) { return kInf; }, grid(1e-3, 2.0));
    CHECK(ext.value == doctest::Approx(0.5).epsilon(1e-7));
    const auto two = analytic_laplace(model, none, AgeMeasure{0.0, 0.0}, ScalarField::constant(1.0), grid(1e-3, 1.0));
    CHECK(two.value == doctest::Approx(lap.value * lap.value).epsilon(1e-12));
    CHECK(analytic_laplace(model, none, AgeMeasure{}, ScalarField::constant(1.0), grid(1e-3, 1.0)).value == 1.0);
    CHECK(analytic_mean(pure_death(), none, AgeMeasure(std::vector<double>(100, 0.0)), ScalarField::constant(1.0),
                        grid(1e-3, 1.0)) == doctest::Approx(100.0 * std::exp(-1.0)).epsilon(1e-12));
  }

  TEST_CASE("immigration terms") {
    const auto imm = ImmigrationMechanism::single_immigrants(1.0);
    // Pure death: psi(u_s theta) = (1 - e^{-theta}) e^{-s}.
    const double integral = psi_integral(pure_death(), imm, ScalarField::constant(1.0), grid(1e-3, 2.0));
    CHECK(integral == doctest::Approx((1.0 - std::exp(-1.0)) * (1.0 - std::exp(-2.0))).epsilon(1e-6));
    // c0 = -0.2, one immigrant per unit time: mean 5 (1 - e^{-0.2 T}).
    const auto sub = BranchingModel(ScalarField::constant(1.0), OffspringLaw(Pmf{FinitePmf{{0.6, 0.0, 0.4}}}));
    const double exact = 4.99977300035118757574;
    const double coarse = analytic_mean(sub, imm, AgeMeasure{}, ScalarField::constant(1.0), grid(1e-2, 50.0));
    const double fine = analytic_mean(sub, imm, AgeMeasure{}, ScalarField::constant(1.0), grid(5e-3, 50.0));
    CHECK(std::abs(coarse - exact) < 2e-4);
    CHECK(std::abs(coarse - exact) / std::abs(fine - exact) == doctest::Approx(4.0).epsilon(0.25));
  }

  TEST_CASE("ergodicity classification") {
    const auto sub = BranchingModel(ScalarField::constant(1.0), OffspringLaw(Pmf{FinitePmf{{0.6, 0.0, 0.4}}}));
    const auto log_power = ImmigrationMechanism(ParametricGroups{1.0, LogPowerSizeLaw{2.0}, {{0.0, 1.0}}});
    CHECK(ergodicity_check(sub, log_power).status == Ergodicity::not_ergodic);
    CHECK(ergodicity_check(sub, ImmigrationMechanism::single_immigrants(2.0)).status == Ergodicity::ergodic);
    CHECK(ergodicity_check(pure_death(), ImmigrationMechanism(GroupList{{{1.0, AgeMeasure{0.0, 1.0, 2.0}}}})).status ==
          Ergodicity::ergodic);
    const auto heavy_mean = ImmigrationMechanism(ParametricGroups{1.0, PowerSizeLaw{1.5}, {{0.0, 1.0}}});
    CHECK(ergodicity_check(sub, heavy_mean).status == Ergodicity::ergodic);
    const auto crit = ergodicity_check(critical_binary(), ImmigrationMechanism::single_immigrants(1.0));
    CHECK(crit.status == Ergodicity::unknown);
    CHECK(crit.c0 == 0.0);
    CHECK(to_string(Ergodicity::not_ergodic) == "not_ergodic");
  }

  TEST_CASE("stationary Laplace transform") {
    const auto imm = ImmigrationMechanism::single_immigrants(3.0);
    const auto one = stationary_laplace(pure_death(), imm, ScalarField::constant(1.0));
    CHECK(std::abs(one.value - 0.150113789398306826835) < 1e-6);
    CHECK(one.tail_bound + one.quad_error < 1e-6);
    CHECK(one.horizon > 0.0);
    const auto decay = stationary_laplace(pure_death(), imm, ScalarField::exp_decay(0.0, 1.0, 1.0));
    CHECK(std::abs(decay.value - 0.331662191511005214168) < 1e-6);
    const auto none = stationary_laplace(pure_death(), ImmigrationMechanism(), ScalarField::constant(1.0));
    CHECK(none.value == 1.0);
    CHECK_THROWS_AS(stationary_laplace(critical_binary(), imm, ScalarField::constant(1.0)), PreconditionError);
    const auto sub = BranchingModel(ScalarField::constant(1.0), OffspringLaw(Pmf{FinitePmf{{0.6, 0.0, 0.4}}}));
    const auto heavy = ImmigrationMechanism(ParametricGroups{1.0, PowerSizeLaw{1.5}, {{0.0, 1.0}}});
    CHECK_THROWS_AS(stationary_laplace(sub, heavy, ScalarField::constant(1.0)), PreconditionError);
    CHECK_THROWS_AS(stationary_laplace(pure_death(), imm, ScalarField::constant(1.0), 0.0), DomainError);
  }

  TEST_CASE("integral identity grid") {
    const auto rows = identity_grid();
    CHECK(rows.size() == 27);
    for (const auto& r : rows) CHECK(std::abs(r.lhs - r.rhs) <= 1e-8);
    const auto unit = elementary_identity_check(1.0, 1.0, 1.0);
    CHECK(unit.lhs == doctest::Approx(0.796599599297053134284).epsilon(1e-12));
    const auto big = elementary_identity_check(2.0, 0.5, 5.0);
    CHECK(big.rhs == doctest::Approx(5.759609829729016459898).epsilon(1e-12));
    CHECK_THROWS_AS(elementary_identity_check(0.0, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(elementary_identity_check(1.0, 1.0, 0.5), DomainError);
  }

  TEST_CASE("CSV exports") {
    RecordOptions rec;
    rec.x_max = 1.0;
    rec.stride = 5;
    const auto sol = solve_u(pure_death(), ScalarField::constant(1.0), grid(0.1, 1.0), rec);
    std::ostringstream b, f;
    write_boundary_csv(b, sol);
    write_field_csv(f, sol);
    const std::string bs = b.str();
    CHECK(bs.rfind("t,b\n0,1\n", 0) == 0);
    CHECK(std::count(bs.begin(), bs.end(), '\n') == 12);
    const std::string fs = f.str();
    CHECK(fs.rfind("t,x,value\n", 0) == 0);
    CHECK(std::count(fs.begin(), fs.end(), '\n') > 1);
  }
}
