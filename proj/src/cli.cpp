#include "agebranch/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

#include "agebranch/config.hpp"
#include "agebranch/csv.hpp"
#include "agebranch/errors.hpp"
#include "agebranch/parallel.hpp"
#include "agebranch/report.hpp"

namespace agebranch::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Largest |lhs - rhs| accepted by identity-check.
constexpr double kIdentityTolerance = 1e-8;
/// Shift applied to the analytic Laplace value for the validate negative control.
constexpr double kLaplaceControlShift = 0.05;
/// Multiplier on LG_f for the martingale negative control.
constexpr double kGeneratorPerturbation = 1.05;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  double t_end = 0.0;
  double dt = 0.0;
  std::string out;
  unsigned parallelism = 1;
  bool ci = false;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* replicates_opt = nullptr;
  CLI::Option* t_end_opt = nullptr;
  CLI::Option* dt_opt = nullptr;
  CLI::Option* parallelism_opt = nullptr;
};

/// Files are kept in memory until the run finished, then written together.
class Outputs {
 public:
  std::ostringstream& open(const std::string& name) {
    files_.emplace_back(name, std::make_unique<std::ostringstream>());
    return *files_.back().second;
  }

  void commit(const fs::path& dir) const {
    if (dir.empty()) return;
    fs::create_directories(dir);
    std::vector<fs::path> staged;
    try {
      for (const auto& [name, body] : files_) {
        const fs::path tmp = dir / (name + ".tmp");
        std::ofstream f(tmp, std::ios::binary);
        f << body->str();
        f.close();
        staged.push_back(tmp);
        if (!f) throw Error("cannot write '" + tmp.string() + "'");
      }
      for (std::size_t i = 0; i < staged.size(); ++i) fs::rename(staged[i], dir / files_[i].first);
    } catch (...) {
      std::error_code ec;
      for (const auto& p : staged) fs::remove(p, ec);
      throw;
    }
  }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

RunConfig load(const Flags& flags) {
  std::ifstream in(flags.config);
  if (!in) throw ConfigError("config: cannot open '" + flags.config + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + flags.config + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  // Overrides go through the same validation as the file itself.
  if (flags.seed_opt->count()) doc["seed"] = flags.seed;
  if (flags.replicates_opt->count()) doc["replicates"] = flags.replicates;
  if (flags.t_end_opt->count()) doc["t_end"] = flags.t_end;
  if (flags.dt_opt->count()) doc["grid"]["dt"] = flags.dt;
  if (flags.parallelism_opt->count()) doc["parallelism"] = flags.parallelism;
  return parse_config(doc);
}

/// Config echo for summaries; parallelism is left out so outputs do not depend on it.
json config_echo(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("parallelism");
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int finish(bool ok, const Flags& flags) { return (flags.ci && !ok) ? kExitCheckFailed : kExitOk; }

// simulate

int cmd_simulate(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = load(flags);
  SimConfig base = to_sim_config(cfg);
  if (base.snapshot_times.empty()) base.snapshot_times = {cfg.t_end};

  const auto trajectories = run_replicates<Trajectory>(cfg.replicates, cfg.parallelism, [&](std::size_t r) {
    SimConfig c = base;
    c.replicate = r;
    c.record_events = r == 0;
    return simulate(c);
  });

  Outputs files;
  auto& snaps = files.open("snapshots.csv");
  csv::row(snaps, {"replicate", "time", "mass", "value", "branch_events", "immigration_events", "running_max"});
  auto& states = files.open("states.csv");
  csv::row(states, {"replicate", "time", "age"});
  auto& summary = files.open("trajectories.csv");
  csv::row(summary, {"replicate", "terminated_by", "end_time", "final_mass", "branch_events", "immigration_events",
                     "proposals", "running_max"});
  std::vector<double> final_mass;
  std::size_t extinct = 0;
  std::size_t capped = 0;
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& tr = trajectories[r];
    const auto rep = csv::number(static_cast<long long>(r));
    for (const auto& s : tr.snapshots) {
      const auto time = csv::number(s.time);
      csv::row(snaps, {rep, time, csv::number(static_cast<long long>(s.state.mass())),
                       csv::number(integrate(s.state, cfg.test_function)),
                       csv::number(static_cast<long long>(s.branch_events)),
                       csv::number(static_cast<long long>(s.immigration_events)),
                       csv::number(static_cast<long long>(s.running_max))});
      for (double a : s.state.ages()) csv::row(states, {rep, time, csv::number(a)});
    }
    csv::row(summary, {rep, to_string(tr.terminated_by), csv::number(tr.end_time),
                       csv::number(static_cast<long long>(tr.final_state.mass())),
                       csv::number(static_cast<long long>(tr.branch_events)),
                       csv::number(static_cast<long long>(tr.immigration_events)),
                       csv::number(static_cast<long long>(tr.proposals)),
                       csv::number(static_cast<long long>(tr.running_max))});
    if (tr.biased()) {
      ++capped;
      final_mass.push_back(std::nan(""));
    } else {
      final_mass.push_back(static_cast<double>(tr.final_state.mass()));
      if (tr.final_state.empty()) ++extinct;
    }
  }
  if (!trajectories.empty()) write_events_csv(files.open("events.csv"), trajectories.front());

  out << "simulate: " << cfg.replicates << " replicates to t = " << cfg.t_end << "\n";
  if (final_mass.size() - capped >= 2) {
    const auto est = make_estimate(final_mass, cfg.seed);
    out << "  mean final mass " << est.value << " (se " << est.std_error << ")\n";
  }
  out << "  extinct " << extinct << ", capped " << capped << "\n";
  files.commit(flags.out);
  return kExitOk;
}

// solve-u / solve-pi

int cmd_solve(const Flags& flags, std::ostream& out, CharacteristicSolution::Kind kind) {
  const RunConfig cfg = load(flags);
  const SolverGrid grid = to_grid(cfg);
  const RecordOptions record{{}, cfg.record_x_max, cfg.record_stride};
  const bool cumulant = kind == CharacteristicSolution::Kind::cumulant;
  const auto sol = cumulant ? solve_u(cfg.model, cfg.test_function, grid, record)
                            : solve_pi(cfg.model, cfg.test_function, grid, record);

  json summary = {
      {"quantity", cumulant ? "u" : "pi"},
      {"horizon", grid.horizon},
      {"dt", sol.step()},
      {"steps", sol.steps()},
      {"quadrature", to_string(grid.quadrature)},
      {"form", to_string(grid.form)},
      {"boundary_at_horizon", sol.boundary().back()},
  };
  if (cumulant) {
    const auto lap = analytic_laplace(cfg.model, cfg.immigration, cfg.initial, cfg.test_function, grid);
    summary["laplace"] = lap.value;
    summary["laplace_exponent"] = lap.exponent;
  } else {
    summary["mean"] = analytic_mean(cfg.model, cfg.immigration, cfg.initial, cfg.test_function, grid);
  }
  summary["config"] = config_echo(cfg);

  Outputs files;
  write_boundary_csv(files.open("boundary.csv"), sol);
  if (cfg.record_stride > 0) write_field_csv(files.open("field.csv"), sol);
  files.open("summary.json") << dump(summary);

  out << (cumulant ? "solve-u" : "solve-pi") << ": T = " << grid.horizon << ", dt = " << sol.step() << ", "
      << sol.steps() << " steps\n";
  out << "  b(T) = " << csv::number(sol.boundary().back()) << "\n";
  if (cumulant) {
    out << "  E exp(-<X_T,f>) = " << csv::number(summary["laplace"].get<double>()) << "\n";
  } else {
    out << "  E <X_T,f> = " << csv::number(summary["mean"].get<double>()) << "\n";
  }
  files.commit(flags.out);
  return kExitOk;
}

// validate

int cmd_validate(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = load(flags);
  const SimConfig base = to_sim_config(cfg);
  const McSettings s = to_mc_settings(cfg);
  const double t = cfg.t_end;
  std::vector<ComparisonReport> reports;
  std::vector<std::string> skipped;

  const auto lap = compare_laplace(base, cfg.test_function, t, s);
  reports.push_back(lap);
  reports.push_back(make_report("laplace_shifted", lap.mc, lap.analytic + kLaplaceControlShift, lap.tol,
                                Sidedness::two_sided, true));
  reports.push_back(compare_extinction(base, t, s));
  reports.push_back(compare_mean(base, cfg.test_function, t, s));
  if (cfg.immigration.total_rate() == 0.0) {
    for (auto& r : bound_suite(base, t, s)) reports.push_back(std::move(r));
  } else {
    skipped.push_back("bounds: defined without immigration only");
  }
  if (cfg.test_function.smooth() && !cfg.martingale_g.empty()) {
    for (TestG g : cfg.martingale_g) reports.push_back(martingale_residual(base, g, cfg.test_function, t, s));
    reports.push_back(martingale_residual(base, TestG::exp, cfg.test_function, t, s, kGeneratorPerturbation));
  } else if (!cfg.martingale_g.empty()) {
    skipped.push_back("martingale: test function is not smooth");
  }

  json summary = summary_json(reports);
  summary["skipped"] = skipped;
  summary["config"] = config_echo(cfg);

  Outputs files;
  write_reports_csv(files.open("reports.csv"), reports);
  files.open("summary.json") << dump(summary);

  for (const auto& r : reports) {
    out << "  " << r.name << ": mc " << csv::number(r.mc.value) << " (se " << csv::number(r.mc.std_error)
        << "), analytic " << csv::number(r.analytic) << ", z " << csv::number(r.z) << " -> " << r.verdict() << "\n";
  }
  for (const auto& s : skipped) out << "  skipped " << s << "\n";
  const bool ok = all_pass(reports);
  out << "validate: " << summary["counts"]["pass"].get<std::size_t>() << "/" << reports.size() << " pass\n";
  files.commit(flags.out);
  return finish(ok, flags);
}

// ergodic

json ergodicity_json(const ErgodicityReport& e) {
  return {{"status", to_string(e.status)},
          {"c0", e.c0},
          {"log_moment",
           {{"status", to_string(e.log_moment.status)},
            {"value", e.log_moment.value},
            {"certificate", e.log_moment.certificate}}},
          {"reason", e.reason}};
}

int cmd_ergodic(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = load(flags);
  const auto erg = ergodicity_check(cfg.model, cfg.immigration);
  json summary = {{"ergodicity", ergodicity_json(erg)}};
  out << "ergodic: " << to_string(erg.status) << " (c0 = " << csv::number(erg.c0) << "; " << erg.reason << ")\n";

  Outputs files;
  bool ok = true;
  std::vector<ComparisonReport> reports;
  if (erg.status == Ergodicity::ergodic) {
    const auto study = ergodic_convergence(to_sim_config(cfg), cfg.test_function, cfg.ergodic_horizons,
                                           to_mc_settings(cfg), cfg.stationary_tolerance);
    reports = study.reports;
    auto& gaps = files.open("gaps.csv");
    csv::row(gaps, {"horizon", "finite_analytic", "stationary", "gap"});
    for (std::size_t i = 0; i < study.horizons.size(); ++i) {
      csv::row(gaps, {csv::number(study.horizons[i]), csv::number(study.finite_analytic[i]),
                      csv::number(study.stationary.value), csv::number(study.analytic_gaps[i])});
    }
    summary["gaps_decreasing"] = study.gaps_decreasing;
    summary["stationary"] = {{"value", study.stationary.value},
                             {"exponent", study.stationary.exponent},
                             {"tail_bound", study.stationary.tail_bound},
                             {"quad_error", study.stationary.quad_error},
                             {"horizon", study.stationary.horizon},
                             {"dt", study.stationary.dt}};
    ok = study.gaps_decreasing && all_pass(reports);
    for (const auto& r : reports) {
      out << "  " << r.name << ": mc " << csv::number(r.mc.value) << ", analytic " << csv::number(r.analytic)
          << ", z " << csv::number(r.z) << " -> " << r.verdict() << "\n";
    }
    out << "  analytic gaps decreasing: " << (study.gaps_decreasing ? "yes" : "no") << "\n";
  }
  summary["checks"] = summary_json(reports);
  summary["config"] = config_echo(cfg);
  write_reports_csv(files.open("reports.csv"), reports);
  files.open("summary.json") << dump(summary);
  files.commit(flags.out);
  return finish(ok, flags);
}

// stationary

int cmd_stationary(const Flags& flags, std::ostream& out) {
  const RunConfig cfg = load(flags);
  std::vector<ScalarField> fs = cfg.stationary_functions;
  if (fs.empty()) fs.push_back(cfg.test_function);

  Outputs files;
  auto& table = files.open("stationary.csv");
  csv::row(table, {"index", "f", "value", "exponent", "tail_bound", "quad_error", "horizon", "dt"});
  json rows = json::array();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto r = stationary_laplace(cfg.model, cfg.immigration, fs[i], cfg.stationary_tolerance);
    const std::string desc = to_json(fs[i]).dump();
    csv::row(table, {csv::number(static_cast<long long>(i)), csv::quoted(desc), csv::number(r.value),
                     csv::number(r.exponent), csv::number(r.tail_bound), csv::number(r.quad_error),
                     csv::number(r.horizon), csv::number(r.dt)});
    rows.push_back({{"f", to_json(fs[i])},
                    {"value", r.value},
                    {"exponent", r.exponent},
                    {"tail_bound", r.tail_bound},
                    {"quad_error", r.quad_error},
                    {"horizon", r.horizon},
                    {"dt", r.dt}});
    out << "  f = " << desc << ": " << csv::number(r.value) << " (error bound on exponent "
        << csv::number(r.tail_bound + r.quad_error) << ")\n";
  }
  files.open("summary.json") << dump({{"tolerance", cfg.stationary_tolerance}, {"results", rows},
                                      {"config", config_echo(cfg)}});
  out << "stationary: " << fs.size() << " test function" << (fs.size() == 1 ? "" : "s") << "\n";
  files.commit(flags.out);
  return kExitOk;
}

// identity-check

int cmd_identity(const Flags& flags, std::ostream& out) {
  Outputs files;
  auto& table = files.open("identity.csv");
  csv::row(table, {"a", "c", "n", "lhs", "rhs", "abs_diff", "verdict"});
  bool ok = true;
  double worst = 0.0;
  for (const auto& row : identity_grid()) {
    const double diff = std::abs(row.lhs - row.rhs);
    const bool pass = diff <= kIdentityTolerance;
    ok = ok && pass;
    worst = std::max(worst, diff);
    csv::row(table, {csv::number(row.a), csv::number(row.c), csv::number(row.n), csv::number(row.lhs),
                     csv::number(row.rhs), csv::number(diff), pass ? "pass" : "fail"});
  }
  out << "identity-check: max |lhs - rhs| = " << csv::number(worst) << " (tolerance "
      << csv::number(kIdentityTolerance) << ") -> " << (ok ? "pass" : "fail") << "\n";
  files.commit(flags.out);
  return finish(ok, flags);
}

void add_common(CLI::App* sub, Flags& flags, bool needs_config) {
  auto* cfg = sub->add_option("--config", flags.config, "JSON run configuration");
  if (needs_config) cfg->required()->check(CLI::ExistingFile);
  flags.seed_opt = sub->add_option("--seed", flags.seed, "master seed (overrides config)");
  flags.replicates_opt = sub->add_option("--replicates", flags.replicates, "Monte Carlo replicates");
  flags.t_end_opt = sub->add_option("--t-end,--t", flags.t_end, "horizon");
  flags.dt_opt = sub->add_option("--dt", flags.dt, "solver step");
  sub->add_option("--out", flags.out, "output directory (nothing is written without it)");
  flags.parallelism_opt = sub->add_option("--parallelism", flags.parallelism, "worker threads")
                              ->check(CLI::Range(1u, 1024u));
  sub->add_flag("--ci", flags.ci, "exit with status 1 when any check fails");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age-structured branching processes: simulation, solvers and validation"};
  app.require_subcommand(1);
  Flags flags;

  using Handler = std::function<int()>;
  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto add = [&](const char* name, const char* help, bool needs_config, Handler h) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, flags, needs_config);
    commands.emplace_back(sub, std::move(h));
  };
  // Each subcommand registers its own option objects, so the pointers in
  // `flags` must be re-bound to the parsed subcommand before use.
  std::vector<Flags> bound;
  add("simulate", "simulate trajectories", true, [&] { return cmd_simulate(flags, out); });
  bound.push_back(flags);
  add("solve-u", "solve the cumulant equation", true,
      [&] { return cmd_solve(flags, out, CharacteristicSolution::Kind::cumulant); });
  bound.push_back(flags);
  add("solve-pi", "solve the moment equation", true,
      [&] { return cmd_solve(flags, out, CharacteristicSolution::Kind::moment); });
  bound.push_back(flags);
  add("validate", "Monte Carlo against analytic values", true, [&] { return cmd_validate(flags, out); });
  bound.push_back(flags);
  add("ergodic", "ergodicity criterion and convergence study", true, [&] { return cmd_ergodic(flags, out); });
  bound.push_back(flags);
  add("stationary", "certified stationary Laplace transforms", true, [&] { return cmd_stationary(flags, out); });
  bound.push_back(flags);
  add("identity-check", "self-test of the integral identity", false, [&] { return cmd_identity(flags, out); });
  bound.push_back(flags);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!commands[i].first->parsed()) continue;
    flags.seed_opt = bound[i].seed_opt;
    flags.replicates_opt = bound[i].replicates_opt;
    flags.t_end_opt = bound[i].t_end_opt;
    flags.dt_opt = bound[i].dt_opt;
    flags.parallelism_opt = bound[i].parallelism_opt;
    try {
      return commands[i].second();
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

}  // namespace agebranch::cli
