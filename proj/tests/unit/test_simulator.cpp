#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "agebranch/errors.hpp"
#include "agebranch/parallel.hpp"
#include "agebranch/simulator.hpp"

using namespace agebranch;

namespace {

SimConfig base_config(BranchingModel model, AgeMeasure initial, double t_end) {
  SimConfig c;
  c.model = std::move(model);
  c.initial = std::move(initial);
  c.t_end = t_end;
  c.seed = 2024;
  return c;
}

BranchingModel critical_binary() {
  return BranchingModel(ScalarField::constant(1.0), OffspringLaw(Pmf{FinitePmf{{0.5, 0.0, 0.5}}}));
}

// Mean and standard error of fn(replicate) over n replicates.
template <class Fn>
std::pair<double, double> mc(std::size_t n, Fn&& fn) {
  const auto xs = run_replicates<double>(n, 1, fn);
  double s = 0.0, s2 = 0.0;
  for (double x : xs) {
    s += x;
    s2 += x * x;
  }
  const double m = s / static_cast<double>(n);
  return {m, std::sqrt((s2 / static_cast<double>(n) - m * m) / static_cast<double>(n))};
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("configuration checks") {
    auto c = base_config(critical_binary(), AgeMeasure{0.0}, 1.0);
    CHECK_NOTHROW(c.validate());
    c.t_end = 0.0;
    CHECK_THROWS_AS(simulate(c), DomainError);
    c.t_end = 1.0;
    c.snapshot_times = {0.5, 0.2};
    CHECK_THROWS_AS(simulate(c), DomainError);
    c.snapshot_times = {2.0};
    CHECK_THROWS_AS(simulate(c), DomainError);
    c.snapshot_times = {};
    c.max_events = 0;
    CHECK_THROWS_AS(simulate(c), DomainError);
  }

  TEST_CASE("paths are reproducible from seed, replicate and purpose") {
    auto c = base_config(critical_binary(), AgeMeasure{0.0, 0.5}, 3.0);
    c.snapshot_times = {1.0, 2.0, 3.0};
    const auto a = simulate(c);
    const auto b = simulate(c);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
      CHECK(a.events[i].time == b.events[i].time);
      CHECK(a.events[i].offspring_count == b.events[i].offspring_count);
    }
    CHECK(a.final_state == b.final_state);
    bool differs = false;
    for (std::uint64_t r = 1; r < 10 && !differs; ++r) {
      c.replicate = r;
      differs = simulate(c).events.size() != a.events.size() || simulate(c).final_state != a.final_state;
    }
    CHECK(differs);
  }

  TEST_CASE("pure death: one event, ages advance with time") {
    auto c = base_config(BranchingModel(), AgeMeasure{0.5}, 50.0);
    c.snapshot_times = {0.0};
    const auto tr = simulate(c);
    CHECK(tr.terminated_by == Termination::extinction);
    CHECK(tr.final_state.empty());
    REQUIRE(tr.events.size() == 1);
    CHECK(tr.events[0].kind == EventKind::branch);
    CHECK(tr.events[0].offspring_count == 0);
    CHECK(tr.events[0].dying_age == doctest::Approx(0.5 + tr.events[0].time));
    CHECK(tr.branch_events == 1);
    CHECK(tr.running_max == 1);
    REQUIRE(tr.snapshots.size() == 1);
    CHECK(tr.snapshots[0].state == AgeMeasure{0.5});
  }

  TEST_CASE("snapshots see survivors at their current age") {
    auto c = base_config(BranchingModel(), AgeMeasure{0.0, 1.0}, 0.3);
    c.snapshot_times = {0.3};
    for (std::uint64_t r = 0; r < 20; ++r) {
      c.replicate = r;
      const auto tr = simulate(c);
      for (double a : tr.snapshots.back().state.ages()) CHECK((a == doctest::Approx(0.3) || a == doctest::Approx(1.3)));
    }
  }

  TEST_CASE("pure death survival frequency, constant and age-dependent hazard") {
    auto c = base_config(BranchingModel(), AgeMeasure{0.0}, 1.0);
    c.record_events = false;
    auto [p, se] = mc(40000, [&](std::size_t r) {
      SimConfig x = c;
      x.replicate = r;
      return static_cast<double>(simulate(x).final_state.mass());
    });
    CHECK(std::abs(p - std::exp(-1.0)) < 4.0 * se);
    // alpha = 0.5 + e^{-x}: survival exp(-(0.5 + 1 - e^{-1})).
    c.model = BranchingModel(ScalarField::exp_decay(0.5, 1.0, 1.0), OffspringLaw());
    auto [q, qse] = mc(40000, [&](std::size_t r) {
      SimConfig x = c;
      x.replicate = r;
      return static_cast<double>(simulate(x).final_state.mass());
    });
    CHECK(std::abs(q - 0.322348971188398682441) < 4.0 * qse);
  }

  TEST_CASE("mean of an age-dependent test function") {
    // Pure death, f(x) = e^{-x}: E <X_1, f> = e^{-1} e^{-1}.
    auto c = base_config(BranchingModel(), AgeMeasure{0.0}, 1.0);
    c.record_events = false;
    const auto f = ScalarField::exp_decay(0.0, 1.0, 1.0);
    auto [m, se] = mc(40000, [&](std::size_t r) {
      SimConfig x = c;
      x.replicate = r;
      return integrate(simulate(x).final_state, f);
    });
    CHECK(std::abs(m - std::exp(-2.0)) < 4.0 * se);
  }

  TEST_CASE("immigration into pure death") {
    auto c = base_config(BranchingModel(), AgeMeasure{}, 2.0);
    c.immigration = ImmigrationMechanism::single_immigrants(3.0);
    c.record_events = false;
    auto [m, se] = mc(20000, [&](std::size_t r) {
      SimConfig x = c;
      x.replicate = r;
      const auto tr = simulate(x);
      CHECK(tr.terminated_by == Termination::t_end);
      return static_cast<double>(tr.final_state.mass());
    });
    CHECK(std::abs(m - 3.0 * (1.0 - std::exp(-2.0))) < 4.0 * se);
  }

  TEST_CASE("group immigration records group sizes") {
    auto c = base_config(BranchingModel(), AgeMeasure{}, 5.0);
    c.immigration = ImmigrationMechanism(GroupList{{{1.0, AgeMeasure{0.0, 2.0, 2.0}}}});
    const auto tr = simulate(c);
    std::size_t arrivals = 0;
    for (const auto& e : tr.events) {
      if (e.kind == EventKind::immigrate) {
        CHECK(e.group_size == 3);
        ++arrivals;
      }
    }
    CHECK(arrivals == tr.immigration_events);
    CHECK(arrivals > 0);
  }

  TEST_CASE("event and population caps are reported") {
    const auto growing = BranchingModel(ScalarField::constant(1.0), OffspringLaw(Pmf{FinitePmf{{0.0, 0.0, 1.0}}}));
    auto c = base_config(growing, AgeMeasure{0.0}, 10.0);
    c.max_events = 10;
    const auto capped = simulate(c);
    CHECK(capped.terminated_by == Termination::event_cap);
    CHECK(capped.biased());
    CHECK(capped.branch_events == 10);
    CHECK(capped.end_time < 10.0);
    c.max_events = 1'000'000;
    c.max_population = 50;
    const auto big = simulate(c);
    CHECK(big.terminated_by == Termination::population_cap);
    CHECK(big.biased());
    CHECK(to_string(Termination::population_cap) == "population_cap");
  }

  TEST_CASE("snapshot statistics") {
    auto c = base_config(critical_binary(), AgeMeasure{0.0, 0.0, 0.0}, 2.0);
    c.snapshot_times = {0.0, 0.5, 1.0, 1.5, 2.0};
    const auto tr = simulate(c);
    const auto st = replay_statistics(tr, ScalarField::constant(1.0));
    REQUIRE(st.times.size() == 5);
    CHECK(st.values[0] == 3.0);
    for (std::size_t i = 1; i < st.times.size(); ++i) {
      CHECK(st.branch_events[i] >= st.branch_events[i - 1]);
      CHECK(st.running_max[i] >= st.running_max[i - 1]);
      CHECK(st.running_max[i] >= st.mass[i]);
      CHECK(st.values[i] == static_cast<double>(st.mass[i]));
    }
    CHECK(tr.running_max >= st.running_max.back());
    CHECK_FALSE(st.biased);
  }

  TEST_CASE("events CSV layout") {
    auto c = base_config(BranchingModel(), AgeMeasure{}, 3.0);
    c.immigration = ImmigrationMechanism::single_immigrants(2.0);
    const auto tr = simulate(c);
    std::ostringstream out;
    write_events_csv(out, tr);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "time,kind,dying_age,offspring_count,group_size");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      if (line.find(",immigrate,") != std::string::npos) {
        CHECK(line.find(",immigrate,,,1") != std::string::npos);
      } else {
        CHECK(line.find(",branch,") != std::string::npos);
        CHECK(line.back() == ',');
      }
    }
    CHECK(rows == tr.events.size());
  }
}
