#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "agebranch/field.hpp"
#include "agebranch/immigration.hpp"
#include "agebranch/measure.hpp"
#include "agebranch/model.hpp"
#include "agebranch/rng.hpp"

namespace agebranch {

struct SimConfig {
  BranchingModel model;
  ImmigrationMechanism immigration;
  AgeMeasure initial;
  double t_end = 1.0;
  /// Sorted, within [0, t_end].
  std::vector<double> snapshot_times;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::uint64_t purpose = stream::simulate;
  /// Cap on accepted events (branchings plus arrivals).
  std::size_t max_events = 10'000'000;
  std::size_t max_population = 100'000'000;
  bool record_events = true;

  /// Throws DomainError on a malformed configuration.
  void validate() const;
};

enum class EventKind { branch, immigrate };
enum class Termination { t_end, extinction, event_cap, population_cap };

std::string to_string(EventKind k);
std::string to_string(Termination t);

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::branch;
  double dying_age = 0.0;      ///< branch only
  int offspring_count = 0;     ///< branch only
  std::size_t group_size = 0;  ///< immigrate only
};

struct Snapshot {
  double time = 0.0;
  AgeMeasure state;
  std::size_t branch_events = 0;  ///< n(time)
  std::size_t immigration_events = 0;
  std::size_t running_max = 0;  ///< sup of the total mass over [0, time]
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  std::vector<Event> events;  ///< empty unless record_events
  std::size_t branch_events = 0;
  std::size_t immigration_events = 0;
  std::size_t proposals = 0;
  std::size_t running_max = 0;
  Termination terminated_by = Termination::t_end;
  /// Time up to which the path is exact (t_end unless a cap fired).
  double end_time = 0.0;
  AgeMeasure final_state;

  bool biased() const { return terminated_by == Termination::event_cap || terminated_by == Termination::population_cap; }
};

/// Exact path by thinning against c1 * mass; arrivals of immigrant groups
/// compete as an independent exponential clock. Reproducible from
/// (seed, replicate, purpose).
Trajectory simulate(const SimConfig& cfg);

struct ReplayStatistics {
  std::vector<double> times;
  std::vector<double> values;  ///< <X_t, f>
  std::vector<std::size_t> mass;
  std::vector<std::size_t> branch_events;
  std::vector<std::size_t> running_max;
  bool biased = false;
};

ReplayStatistics replay_statistics(const Trajectory& traj, const ScalarField& f);

/// CSV with columns time,kind,dying_age,offspring_count,group_size.
void write_events_csv(std::ostream& out, const Trajectory& traj);

}  // namespace agebranch
