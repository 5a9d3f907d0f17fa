#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "agebranch/errors.hpp"
#include "agebranch/field.hpp"
#include "agebranch/measure.hpp"
#include "agebranch/parallel.hpp"
#include "agebranch/rng.hpp"

using namespace agebranch;

TEST_SUITE("core_measures") {
  TEST_CASE("constant field") {
    const auto f = ScalarField::constant(2.5);
    CHECK(f(0.0) == 2.5);
    CHECK(f(1e6) == 2.5);
    CHECK(f.derivative(3.0) == 0.0);
    CHECK(f.integral(1.0, 3.0) == doctest::Approx(5.0));
    CHECK(f.sup() == 2.5);
    CHECK(f.inf() == 2.5);
    CHECK(f.is_constant());
    CHECK(f.smooth());
    CHECK(f.kind() == "constant");
  }

  TEST_CASE("step field is right-continuous at breaks") {
    const auto f = ScalarField::step({1.0, 2.0}, {1.0, 3.0, 0.5});
    CHECK(f(0.999) == 1.0);
    CHECK(f(1.0) == 3.0);
    CHECK(f(2.0) == 0.5);
    CHECK(f.integral(0.0, 3.0) == doctest::Approx(1.0 + 3.0 + 0.5));
    CHECK(f.integral(0.5, 1.5) == doctest::Approx(0.5 + 1.5));
    CHECK(f.sup() == 3.0);
    CHECK(f.inf() == 0.5);
    const auto r = f.range(0.0, 1.0);
    CHECK(r.inf == 1.0);
    CHECK(r.sup == 1.0);
    CHECK_FALSE(f.smooth());
    CHECK_FALSE(f.is_constant());
  }

  TEST_CASE("table field interpolates and extrapolates flat") {
    const auto f = ScalarField::table({1.0, 2.0, 4.0}, {2.0, 4.0, 0.0});
    CHECK(f(0.0) == 2.0);
    CHECK(f(1.5) == doctest::Approx(3.0));
    CHECK(f(3.0) == doctest::Approx(2.0));
    CHECK(f(10.0) == 0.0);
    CHECK(f.derivative(1.5) == doctest::Approx(2.0));
    CHECK(f.derivative(5.0) == 0.0);
    // 2*1 + 3*1 + 2*2 + 0
    CHECK(f.integral(0.0, 5.0) == doctest::Approx(9.0));
    CHECK(f.sup() == 4.0);
    CHECK(f.inf() == 0.0);
  }

  TEST_CASE("exp_decay and rational closed forms") {
    const auto e = ScalarField::exp_decay(0.5, 1.0, 1.0);
    CHECK(e(0.0) == doctest::Approx(1.5));
    CHECK(e.derivative(0.0) == doctest::Approx(-1.0));
    CHECK(e.integral(0.0, 1.0) == doctest::Approx(0.5 + 1.0 - std::exp(-1.0)).epsilon(1e-14));
    CHECK(e.sup() == doctest::Approx(1.5));
    CHECK(e.inf() == doctest::Approx(0.5));
    const auto r = ScalarField::rational(0.25, 1.0, 2.0);
    CHECK(r(1.0) == doctest::Approx(0.25 + 1.0 / 3.0));
    CHECK(r.integral(0.0, 1.0) == doctest::Approx(0.25 + 0.5 * std::log(3.0)).epsilon(1e-14));
    CHECK(r.derivative(0.0) == doctest::Approx(-2.0));
    CHECK(r.sup() == doctest::Approx(1.25));
    CHECK(r.inf() == doctest::Approx(0.25));
  }

  TEST_CASE("integral over a tiny interval keeps relative accuracy") {
    const auto e = ScalarField::exp_decay(0.0, 1.0, 1.0);
    const double h = 1e-12;
    CHECK(e.integral(2.0, 2.0 + h) == doctest::Approx(std::exp(-2.0) * h).epsilon(1e-9));
  }

  TEST_CASE("invalid fields are rejected") {
    CHECK_THROWS_AS(ScalarField::constant(-1.0), DomainError);
    CHECK_THROWS_AS(ScalarField::constant(NAN), DomainError);
    CHECK_THROWS_AS(ScalarField::step({1.0}, {1.0}), DomainError);
    CHECK_THROWS_AS(ScalarField::step({2.0, 1.0}, {1.0, 1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(ScalarField::step({1.0}, {1.0, -2.0}), DomainError);
    CHECK_THROWS_AS(ScalarField::table({}, {}), DomainError);
    CHECK_THROWS_AS(ScalarField::table({1.0, 1.0}, {1.0, 2.0}), DomainError);
    CHECK_THROWS_AS(ScalarField::exp_decay(-0.1, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(ScalarField::exp_decay(1.0, -2.0, 1.0), DomainError);
    CHECK_THROWS_AS(ScalarField::rational(0.0, 1.0, -1.0), DomainError);
    CHECK_THROWS_AS(ScalarField::constant(1.0).integral(2.0, 1.0), DomainError);
  }

  TEST_CASE("age measure stores a sorted multiset") {
    AgeMeasure mu{2.0, 0.5, 2.0};
    CHECK(mu.mass() == 3);
    CHECK(mu.ages()[0] == 0.5);
    CHECK(mu.dist_fn(-1.0) == 0);
    CHECK(mu.dist_fn(0.5) == 1);
    CHECK(mu.dist_fn(2.0) == 3);
    mu.insert(1.0);
    CHECK(mu.ages()[1] == 1.0);
    mu.erase_at(0);
    CHECK(mu.ages()[0] == 1.0);
    const auto s = mu.shifted(1.5);
    CHECK(s.ages()[0] == 2.5);
    CHECK(integrate(s, [](double a) { return a; }) == doctest::Approx(2.5 + 3.5 + 3.5));
    CHECK_THROWS_AS(AgeMeasure({-1.0}), DomainError);
    CHECK_THROWS_AS(mu.insert(INFINITY), DomainError);
    CHECK_THROWS_AS(mu.erase_at(10), DomainError);
    CHECK_THROWS_AS(mu.shifted(-1.0), DomainError);
  }

  TEST_CASE("alpha-weighted inverse uses the strict exceedance convention") {
    const AgeMeasure mu{0.0, 1.0, 2.0};
    const auto one = [](double) { return 1.0; };
    CHECK(alpha_weighted_inverse(mu, one, 0.0) == 0.0);
    // y = 1/3 hits the first cumulative step exactly; strict > moves past it.
    CHECK(alpha_weighted_inverse(mu, one, 1.0 / 3.0 + 1e-12) == 1.0);
    CHECK(alpha_weighted_inverse(mu, one, 0.999) == 2.0);
    const auto heavy_old = [](double a) { return a >= 2.0 ? 8.0 : 1.0; };
    CHECK(alpha_weighted_inverse(mu, heavy_old, 0.25) == 2.0);
    CHECK(alpha_weighted_inverse(mu, heavy_old, 0.05) == 0.0);
    CHECK_THROWS_AS(alpha_weighted_inverse(AgeMeasure{}, one, 0.5), EmptyPopulationError);
    CHECK_THROWS_AS(alpha_weighted_inverse(mu, one, 1.0), DomainError);
    CHECK_THROWS_AS(alpha_weighted_inverse(mu, one, -0.1), DomainError);
  }

  TEST_CASE("rho distance") {
    CHECK(rho_distance(AgeMeasure{0.0}, AgeMeasure{}) == doctest::Approx(1.0));
    CHECK(rho_distance(AgeMeasure{1.0}, AgeMeasure{2.0}) == doctest::Approx(0.232544157934829629701524275189));
    CHECK(rho_distance(AgeMeasure{1.0, 3.0}, AgeMeasure{1.0, 3.0}) == 0.0);
    const AgeMeasure a{0.5, 1.0}, b{2.0}, c{0.1, 0.2, 4.0};
    CHECK(rho_distance(a, b) == doctest::Approx(rho_distance(b, a)));
    CHECK(rho_distance(a, c) <= rho_distance(a, b) + rho_distance(b, c) + 1e-15);
  }

  TEST_CASE("philox known-answer vectors") {
    using B = Philox4x64::Block;
    const B zero = Philox4x64::block({0, 0, 0, 0}, {0, 0});
    CHECK(zero == B{0x16554d9eca36314cULL, 0xdb20fe9d672d0fdcULL, 0xd7e772cee186176bULL, 0x7e68b68aec7ba23bULL});
    const std::uint64_t ones = ~0ULL;
    const B all = Philox4x64::block({ones, ones, ones, ones}, {ones, ones});
    CHECK(all == B{0x87b092c3013fe90bULL, 0x438c3c67be8d0224ULL, 0x9cc7d7c69cd777b6ULL, 0xa09caebf594f0ba0ULL});
    const B pi = Philox4x64::block({0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL,
                                    0x082efa98ec4e6c89ULL},
                                   {0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL});
    CHECK(pi == B{0xa528f45403e61d95ULL, 0x38c72dbd566e9788ULL, 0xa5a1610e72fd18b5ULL, 0x57bd43b5e52b7fe6ULL});
  }

  TEST_CASE("philox streams are reproducible and distinct") {
    Philox4x64 a(7, 3, stream::laplace), b(7, 3, stream::laplace), c(7, 4, stream::laplace), d(7, 3, stream::mean);
    std::vector<std::uint64_t> xa, xb, xc, xd;
    for (int i = 0; i < 9; ++i) {
      xa.push_back(a());
      xb.push_back(b());
      xc.push_back(c());
      xd.push_back(d());
    }
    CHECK(xa == xb);
    CHECK(xa != xc);
    CHECK(xa != xd);
    std::set<std::uint64_t> unique(xa.begin(), xa.end());
    CHECK(unique.size() == xa.size());
  }

  TEST_CASE("uniform and exponential draws") {
    Philox4x64 rng(1, 0);
    double sum = 0.0, esum = 0.0;
    bool in_range = true;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      in_range = in_range && u >= 0.0 && u < 1.0;
      sum += u;
      esum += exponential(rng, 2.0);
    }
    CHECK(in_range);
    // Means 1/2 and 1/2 with standard errors about 6.5e-4 and 1.1e-3.
    CHECK(std::abs(sum / n - 0.5) < 4e-3);
    CHECK(std::abs(esum / n - 0.5) < 6e-3);
  }

  TEST_CASE("replicate pool is independent of parallelism") {
    auto fn = [](std::size_t r) {
      Philox4x64 rng(11, r);
      return uniform01(rng);
    };
    const auto one = run_replicates<double>(1000, 1, fn);
    const auto four = run_replicates<double>(1000, 4, fn);
    CHECK(one == four);
    CHECK(pairwise_sum(one) == pairwise_sum(four));
    CHECK(run_replicates<double>(0, 3, fn).empty());
  }

  TEST_CASE("replicate pool propagates exceptions") {
    CHECK_THROWS_AS(run_replicates<int>(50, 3,
                                        [](std::size_t r) {
                                          if (r == 17) throw DomainError("boom");
                                          return 0;
                                        }),
                    DomainError);
  }

  TEST_CASE("pairwise sum") {
    std::vector<double> xs(1000);
    std::iota(xs.begin(), xs.end(), 1.0);
    CHECK(pairwise_sum(xs) == 500500.0);
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
  }
}
