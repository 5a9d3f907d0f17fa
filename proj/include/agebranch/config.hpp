#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <vector>

#include "agebranch/field.hpp"
#include "agebranch/immigration.hpp"
#include "agebranch/measure.hpp"
#include "agebranch/model.hpp"
#include "agebranch/simulator.hpp"
#include "agebranch/solvers.hpp"
#include "agebranch/validation.hpp"

namespace agebranch {

inline constexpr int kSchemaVersion = 1;

/// Everything a CLI run needs; every number in an output is reproducible from
/// this plus the seed.
struct RunConfig {
  int schema_version = kSchemaVersion;
  BranchingModel model;
  ImmigrationMechanism immigration;
  AgeMeasure initial;
  double t_end = 1.0;
  std::vector<double> snapshots;
  double dt = 1e-3;
  Quadrature quadrature = Quadrature::trapezoid;
  EquationForm form = EquationForm::renewal;
  std::size_t replicates = 10'000;
  std::uint64_t seed = 0;
  unsigned parallelism = 1;
  std::size_t max_events = 10'000'000;
  ScalarField test_function = ScalarField::constant(1.0);
  std::vector<TestG> martingale_g{TestG::exp};
  std::size_t snapshot_intervals = 50;
  std::vector<double> ergodic_horizons{5.0, 10.0, 20.0};
  double stationary_tolerance = 1e-6;
  std::vector<ScalarField> stationary_functions;
  double record_x_max = 0.0;
  std::size_t record_stride = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Parses and validates; throws ConfigError listing every offending field
/// as "path: message".
RunConfig parse_config(const nlohmann::json& doc);
/// Reads a JSON file; a missing or unparsable file is a ConfigError.
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json to_json(const ScalarField& f);
ScalarField field_from_json(const nlohmann::json& j);

SimConfig to_sim_config(const RunConfig& cfg);
McSettings to_mc_settings(const RunConfig& cfg);
SolverGrid to_grid(const RunConfig& cfg);

}  // namespace agebranch
