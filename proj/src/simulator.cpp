#include "agebranch/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <ranges>

#include "agebranch/csv.hpp"
#include "agebranch/errors.hpp"

namespace agebranch {

std::string to_string(EventKind k) { return k == EventKind::branch ? "branch" : "immigrate"; }

std::string to_string(Termination t) {
  switch (t) {
    case Termination::t_end:
      return "t_end";
    case Termination::extinction:
      return "extinction";
    case Termination::event_cap:
      return "event_cap";
    case Termination::population_cap:
      return "population_cap";
  }
  return "t_end";
}

void SimConfig::validate() const {
  if (!(std::isfinite(t_end) && t_end > 0.0)) throw DomainError("simulation: t_end must be finite and > 0");
  if (max_events == 0) throw DomainError("simulation: max_events must be > 0");
  if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end())) {
    throw DomainError("simulation: snapshot times must be sorted");
  }
  for (double s : snapshot_times) {
    if (!(s >= 0.0 && s <= t_end)) throw DomainError("simulation: snapshot times must lie in [0, t_end]");
  }
}

namespace {

/// Population as birth times, ascending (oldest first); age = t - birth.
class Population {
 public:
  explicit Population(const AgeMeasure& initial) {
    births_.reserve(initial.mass());
    for (double a : std::views::reverse(initial.ages())) births_.push_back(-a);
  }

  std::size_t size() const { return births_.size(); }

  AgeMeasure at(double t) const {
    std::vector<double> ages;
    ages.reserve(births_.size());
    for (double b : std::views::reverse(births_)) ages.push_back(t - b);
    return AgeMeasure(std::move(ages));
  }

  /// Youngest-first ages, the order of the alpha-weighted distribution function.
  auto ages_youngest_first(double t) const {
    return births_ | std::views::reverse | std::views::transform([t](double b) { return t - b; });
  }

  /// Position (youngest-first) -> storage index.
  std::size_t storage_index(std::size_t youngest_pos) const { return births_.size() - 1 - youngest_pos; }
  double age(std::size_t idx, double t) const { return t - births_[idx]; }

  void erase(std::size_t idx) { births_.erase(births_.begin() + static_cast<std::ptrdiff_t>(idx)); }
  void add_newborns(double t, int k) { births_.insert(births_.end(), static_cast<std::size_t>(k), t); }
  void add_group(double t, const AgeMeasure& group) {
    for (double a : group.ages()) births_.insert(std::upper_bound(births_.begin(), births_.end(), t - a), t - a);
  }

 private:
  std::vector<double> births_;
};

}  // namespace

Trajectory simulate(const SimConfig& cfg) {
  cfg.validate();
  Philox4x64 rng(cfg.seed, cfg.replicate, cfg.purpose);
  const auto& model = cfg.model;
  const auto& alpha = model.alpha();
  const double c1 = model.constants().c1;
  const bool constant_alpha = alpha.is_constant();
  const double lambda = cfg.immigration.total_rate();

  Trajectory traj;
  Population pop(cfg.initial);
  traj.running_max = pop.size();
  std::size_t next_snap = 0;
  double t = 0.0;

  auto snapshots_before = [&](double limit, bool inclusive) {
    while (next_snap < cfg.snapshot_times.size() &&
           (cfg.snapshot_times[next_snap] < limit || (inclusive && cfg.snapshot_times[next_snap] == limit))) {
      const double s = cfg.snapshot_times[next_snap++];
      traj.snapshots.push_back({s, pop.at(s), traj.branch_events, traj.immigration_events, traj.running_max});
    }
  };
  auto finish = [&](Termination why, double end) {
    traj.terminated_by = why;
    traj.end_time = end;
    traj.final_state = pop.at(end);
  };

  for (;;) {
    const std::size_t n = pop.size();
    if (n > cfg.max_population) {
      finish(Termination::population_cap, t);
      return traj;
    }
    const double branch_rate = c1 * static_cast<double>(n);
    const double total_rate = branch_rate + lambda;
    if (total_rate == 0.0) {
      // Extinct with no immigration: the state stays null.
      snapshots_before(cfg.t_end, true);
      finish(Termination::extinction, cfg.t_end);
      return traj;
    }
    const double t_next = t + exponential(rng, total_rate);
    if (t_next > cfg.t_end) {
      snapshots_before(cfg.t_end, true);
      finish(n == 0 && lambda == 0.0 ? Termination::extinction : Termination::t_end, cfg.t_end);
      return traj;
    }
    snapshots_before(t_next, false);
    t = t_next;

    // With lambda = 0 no selector draw is made, so the stream matches pure branching.
    const bool arrival = lambda > 0.0 && uniform01(rng) * total_rate < lambda;
    if (arrival) {
      const AgeMeasure group = cfg.immigration.sample_group(rng, cfg.max_population);
      pop.add_group(t, group);
      ++traj.immigration_events;
      if (cfg.record_events) traj.events.push_back({t, EventKind::immigrate, 0.0, 0, group.mass()});
    } else {
      ++traj.proposals;
      std::size_t idx;
      if (constant_alpha) {
        // <nu, alpha> = c1 * mass: every proposal is accepted and the pick is uniform.
        const double y = uniform01(rng);
        const auto pos = std::min(n - 1, static_cast<std::size_t>(y * static_cast<double>(n)));
        idx = pop.storage_index(pos);
      } else {
        double hazard = 0.0;
        for (double a : pop.ages_youngest_first(t)) hazard += alpha(a);
        if (!(uniform01(rng) * branch_rate < hazard)) continue;
        const double y = uniform01(rng);
        idx = pop.storage_index(detail::alpha_weighted_pick(pop.ages_youngest_first(t), alpha, y));
      }
      const double age = pop.age(idx, t);
      const int k = model.offspring().sample(age, rng);
      pop.erase(idx);
      pop.add_newborns(t, k);
      ++traj.branch_events;
      if (cfg.record_events) traj.events.push_back({t, EventKind::branch, age, k, 0});
    }
    traj.running_max = std::max(traj.running_max, pop.size());

    if (traj.branch_events + traj.immigration_events >= cfg.max_events) {
      snapshots_before(t, true);
      finish(Termination::event_cap, t);
      return traj;
    }
  }
}

ReplayStatistics replay_statistics(const Trajectory& traj, const ScalarField& f) {
  ReplayStatistics out;
  out.biased = traj.biased();
  for (const auto& s : traj.snapshots) {
    out.times.push_back(s.time);
    out.values.push_back(integrate(s.state, f));
    out.mass.push_back(s.state.mass());
    out.branch_events.push_back(s.branch_events);
    out.running_max.push_back(s.running_max);
  }
  return out;
}

void write_events_csv(std::ostream& out, const Trajectory& traj) {
  csv::row(out, {"time", "kind", "dying_age", "offspring_count", "group_size"});
  for (const auto& e : traj.events) {
    if (e.kind == EventKind::branch) {
      csv::row(out, {csv::number(e.time), "branch", csv::number(e.dying_age),
                     csv::number(static_cast<long long>(e.offspring_count)), ""});
    } else {
      csv::row(out, {csv::number(e.time), "immigrate", "", "", csv::number(static_cast<long long>(e.group_size))});
    }
  }
}

}  // namespace agebranch
