#include "agebranch/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "agebranch/errors.hpp"
#include "overloaded.hpp"

namespace agebranch {

using json = nlohmann::json;
using detail::Overloaded;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

/// Collects every problem with its JSON path instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
      if (!ok.contains(key)) fail(join(path, key), "unknown field");
    }
  }

  const json* member(const json& obj, const std::string& key, const std::string& path, bool required) {
    if (!obj.is_object()) {
      fail(path, "must be an object");
      return nullptr;
    }
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) fail(join(path, key), "is required");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json& obj, const std::string& key, const std::string& path, bool required) {
    const json* v = member(obj, key, path, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      fail(join(path, key), "must be a number");
      return std::nullopt;
    }
    const double x = v->get<double>();
    if (!std::isfinite(x)) {
      fail(join(path, key), "must be finite");
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::uint64_t> count(const json& obj, const std::string& key, const std::string& path, bool required) {
    const json* v = member(obj, key, path, required);
    if (!v) return std::nullopt;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
    fail(join(path, key), "must be a nonnegative integer");
    return std::nullopt;
  }

  std::optional<std::string> text(const json& obj, const std::string& key, const std::string& path, bool required) {
    const json* v = member(obj, key, path, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      fail(join(path, key), "must be a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<std::vector<double>> numbers(const json& obj, const std::string& key, const std::string& path,
                                             bool required) {
    const json* v = member(obj, key, path, required);
    if (!v) return std::nullopt;
    return numbers(*v, join(path, key));
  }

  std::optional<std::vector<double>> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) {
      fail(path, "must be an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    bool ok = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
        fail(index(path, i), "must be a finite number");
        ok = false;
      } else {
        out.push_back(v[i].get<double>());
      }
    }
    if (!ok) return std::nullopt;
    return out;
  }

  template <class F>
  auto guarded(const std::string& path, F&& make) -> std::optional<decltype(make())> {
    try {
      return make();
    } catch (const Error& e) {
      fail(path, e.what());
      return std::nullopt;
    }
  }

  std::optional<ScalarField> field(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "must be an object with a 'kind'");
      return std::nullopt;
    }
    const auto kind = text(j, "kind", path, true);
    if (!kind) return std::nullopt;
    if (*kind == "constant") {
      check_keys(j, path, {"kind", "value"});
      const auto v = number(j, "value", path, true);
      if (!v) return std::nullopt;
      return guarded(path, [&] { return ScalarField::constant(*v); });
    }
    if (*kind == "step") {
      check_keys(j, path, {"kind", "breaks", "values"});
      auto b = numbers(j, "breaks", path, true);
      auto v = numbers(j, "values", path, true);
      if (!b || !v) return std::nullopt;
      return guarded(path, [&] { return ScalarField::step(*b, *v); });
    }
    if (*kind == "table") {
      check_keys(j, path, {"kind", "x", "y"});
      auto x = numbers(j, "x", path, true);
      auto y = numbers(j, "y", path, true);
      if (!x || !y) return std::nullopt;
      return guarded(path, [&] { return ScalarField::table(*x, *y); });
    }
    if (*kind == "exp_decay" || *kind == "rational") {
      check_keys(j, path, {"kind", "floor", "scale", "rate"});
      const auto fl = number(j, "floor", path, true);
      const auto sc = number(j, "scale", path, true);
      const auto ra = number(j, "rate", path, true);
      if (!fl || !sc || !ra) return std::nullopt;
      return guarded(path, [&] {
        return *kind == "exp_decay" ? ScalarField::exp_decay(*fl, *sc, *ra) : ScalarField::rational(*fl, *sc, *ra);
      });
    }
    fail(join(path, "kind"), "unknown field kind '" + *kind + "' (constant, step, table, exp_decay, rational)");
    return std::nullopt;
  }

  std::optional<Pmf> pmf(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "must be an object with a 'kind'");
      return std::nullopt;
    }
    const auto kind = text(j, "kind", path, true);
    if (!kind) return std::nullopt;
    if (*kind == "finite") {
      check_keys(j, path, {"kind", "p"});
      auto p = numbers(j, "p", path, true);
      if (!p) return std::nullopt;
      return Pmf{FinitePmf{*p}};
    }
    if (*kind == "geometric") {
      check_keys(j, path, {"kind", "success"});
      const auto q = number(j, "success", path, true);
      if (!q) return std::nullopt;
      return Pmf{GeometricPmf{*q}};
    }
    if (*kind == "poisson") {
      check_keys(j, path, {"kind", "mean"});
      const auto m = number(j, "mean", path, true);
      if (!m) return std::nullopt;
      return Pmf{PoissonPmf{*m}};
    }
    fail(join(path, "kind"), "unknown pmf kind '" + *kind + "' (finite, geometric, poisson)");
    return std::nullopt;
  }

  std::optional<OffspringLaw> offspring(const json& j, const std::string& path) {
    if (j.is_object() && j.contains("regimes")) {
      check_keys(j, path, {"regimes"});
      const json& regs = j["regimes"];
      const std::string rpath = join(path, "regimes");
      if (!regs.is_array() || regs.empty()) {
        fail(rpath, "must be a nonempty array");
        return std::nullopt;
      }
      std::vector<AgeRegime> out;
      bool ok = true;
      for (std::size_t i = 0; i < regs.size(); ++i) {
        const std::string ip = index(rpath, i);
        if (!regs[i].is_object()) {
          fail(ip, "must be an object");
          ok = false;
          continue;
        }
        check_keys(regs[i], ip, {"from", "pmf"});
        const auto from = number(regs[i], "from", ip, true);
        const json* p = member(regs[i], "pmf", ip, true);
        auto law = p ? pmf(*p, join(ip, "pmf")) : std::nullopt;
        if (!from || !law) {
          ok = false;
          continue;
        }
        out.push_back({*from, *law});
      }
      if (!ok) return std::nullopt;
      return guarded(path, [&] { return OffspringLaw(out); });
    }
    auto law = pmf(j, path);
    if (!law) return std::nullopt;
    return guarded(path, [&] { return OffspringLaw(*law); });
  }

  std::optional<SizeLaw> size_law(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "must be an object with a 'kind'");
      return std::nullopt;
    }
    const auto kind = text(j, "kind", path, true);
    if (!kind) return std::nullopt;
    if (*kind == "finite") {
      check_keys(j, path, {"kind", "weights"});
      auto w = numbers(j, "weights", path, true);
      if (!w) return std::nullopt;
      return SizeLaw{FiniteSizeLaw{*w}};
    }
    if (*kind == "power" || *kind == "log_power") {
      check_keys(j, path, {"kind", "exponent"});
      const auto e = number(j, "exponent", path, true);
      if (!e) return std::nullopt;
      return *kind == "power" ? SizeLaw{PowerSizeLaw{*e}} : SizeLaw{LogPowerSizeLaw{*e}};
    }
    fail(join(path, "kind"), "unknown size law '" + *kind + "' (finite, power, log_power)");
    return std::nullopt;
  }

  std::optional<ImmigrationMechanism> immigration(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "must be an object with a 'kind'");
      return std::nullopt;
    }
    const auto kind = text(j, "kind", path, true);
    if (!kind) return std::nullopt;
    if (*kind == "none") {
      check_keys(j, path, {"kind"});
      return ImmigrationMechanism();
    }
    if (*kind == "groups") {
      check_keys(j, path, {"kind", "groups"});
      const json* gs = member(j, "groups", path, true);
      if (!gs) return std::nullopt;
      const std::string gpath = join(path, "groups");
      if (!gs->is_array()) {
        fail(gpath, "must be an array");
        return std::nullopt;
      }
      GroupList list;
      bool ok = true;
      for (std::size_t i = 0; i < gs->size(); ++i) {
        const std::string ip = index(gpath, i);
        const json& g = (*gs)[i];
        if (!g.is_object()) {
          fail(ip, "must be an object");
          ok = false;
          continue;
        }
        check_keys(g, ip, {"weight", "ages"});
        const auto w = number(g, "weight", ip, true);
        auto ages = numbers(g, "ages", ip, true);
        auto group = ages ? guarded(join(ip, "ages"), [&] { return AgeMeasure(*ages); }) : std::nullopt;
        if (!w || !group) {
          ok = false;
          continue;
        }
        list.groups.push_back({*w, *group});
      }
      if (!ok) return std::nullopt;
      return guarded(path, [&] { return ImmigrationMechanism(GroupLaw{list}); });
    }
    if (*kind == "parametric") {
      check_keys(j, path, {"kind", "rate", "size", "ages"});
      const auto rate = number(j, "rate", path, true);
      const json* sz = member(j, "size", path, true);
      auto size = sz ? size_law(*sz, join(path, "size")) : std::nullopt;
      const json* ag = member(j, "ages", path, true);
      std::optional<std::vector<AgeAtom>> atoms;
      if (ag) {
        const std::string apath = join(path, "ages");
        if (!ag->is_array()) {
          fail(apath, "must be an array of {age, prob}");
        } else {
          atoms.emplace();
          for (std::size_t i = 0; i < ag->size(); ++i) {
            const std::string ip = index(apath, i);
            if ((*ag)[i].is_object()) check_keys((*ag)[i], ip, {"age", "prob"});
            const auto age = number((*ag)[i], "age", ip, true);
            const auto prob = number((*ag)[i], "prob", ip, true);
            if (age && prob) {
              atoms->push_back({*age, *prob});
            } else {
              atoms.reset();
              break;
            }
          }
        }
      }
      if (!rate || !size || !atoms) return std::nullopt;
      return guarded(path, [&] { return ImmigrationMechanism(GroupLaw{ParametricGroups{*rate, *size, *atoms}}); });
    }
    fail(join(path, "kind"), "unknown immigration kind '" + *kind + "' (none, groups, parametric)");
    return std::nullopt;
  }
};

json pmf_json(const Pmf& p) {
  return std::visit(Overloaded{
                        [](const FinitePmf& f) { return json{{"kind", "finite"}, {"p", f.p}}; },
                        [](const GeometricPmf& g) { return json{{"kind", "geometric"}, {"success", g.success}}; },
                        [](const PoissonPmf& q) { return json{{"kind", "poisson"}, {"mean", q.mean}}; },
                    },
                    p);
}

json immigration_json(const ImmigrationMechanism& imm) {
  return std::visit(
      Overloaded{
          [](const GroupList& g) {
            if (g.groups.empty()) return json{{"kind", "none"}};
            json groups = json::array();
            for (const auto& wg : g.groups) {
              groups.push_back({{"weight", wg.weight},
                                {"ages", std::vector<double>(wg.group.ages().begin(), wg.group.ages().end())}});
            }
            return json{{"kind", "groups"}, {"groups", groups}};
          },
          [](const ParametricGroups& p) {
            json size = std::visit(Overloaded{
                                       [](const FiniteSizeLaw& f) { return json{{"kind", "finite"}, {"weights", f.weights}}; },
                                       [](const PowerSizeLaw& s) { return json{{"kind", "power"}, {"exponent", s.exponent}}; },
                                       [](const LogPowerSizeLaw& s) {
                                         return json{{"kind", "log_power"}, {"exponent", s.exponent}};
                                       },
                                   },
                                   p.size);
            json ages = json::array();
            for (const auto& a : p.ages) ages.push_back({{"age", a.age}, {"prob", a.prob}});
            return json{{"kind", "parametric"}, {"rate", p.rate}, {"size", size}, {"ages", ages}};
          },
      },
      imm.law());
}

}  // namespace

json to_json(const ScalarField& f) {
  return std::visit(Overloaded{
                        [](const ConstantField& c) { return json{{"kind", "constant"}, {"value", c.value}}; },
                        [](const StepField& s) { return json{{"kind", "step"}, {"breaks", s.breaks}, {"values", s.values}}; },
                        [](const TableField& t) { return json{{"kind", "table"}, {"x", t.x}, {"y", t.y}}; },
                        [](const ExpDecayField& e) {
                          return json{{"kind", "exp_decay"}, {"floor", e.floor}, {"scale", e.scale}, {"rate", e.rate}};
                        },
                        [](const RationalField& r) {
                          return json{{"kind", "rational"}, {"floor", r.floor}, {"scale", r.scale}, {"rate", r.rate}};
                        },
                    },
                    f.spec());
}

ScalarField field_from_json(const json& j) {
  Reader rd;
  auto f = rd.field(j, "field");
  if (!f) {
    std::string msg = "invalid field";
    for (const auto& e : rd.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return *f;
}

RunConfig parse_config(const json& doc) {
  Reader rd;
  RunConfig cfg;
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  rd.check_keys(doc, "", {"schema_version", "model", "immigration", "initial", "t_end", "snapshots", "grid", "replicates",
                          "seed", "parallelism", "max_events", "test_function", "martingale", "ergodic", "stationary",
                          "record"});

  if (const auto v = rd.count(doc, "schema_version", "", true)) {
    if (*v != static_cast<std::uint64_t>(kSchemaVersion)) {
      rd.fail("schema_version", "unsupported version " + std::to_string(*v) + " (expected " +
                                    std::to_string(kSchemaVersion) + ")");
    }
  }

  if (const json* m = rd.member(doc, "model", "", true)) {
    rd.check_keys(*m, "model", {"alpha", "offspring"});
    const json* a = rd.member(*m, "alpha", "model", true);
    const json* o = rd.member(*m, "offspring", "model", true);
    auto alpha = a ? rd.field(*a, "model.alpha") : std::nullopt;
    auto off = o ? rd.offspring(*o, "model.offspring") : std::nullopt;
    if (alpha && off) {
      if (auto model = rd.guarded("model", [&] { return BranchingModel(*alpha, *off); })) cfg.model = *model;
    }
  }

  if (const json* im = rd.member(doc, "immigration", "", false)) {
    if (auto imm = rd.immigration(*im, "immigration")) cfg.immigration = *imm;
  }

  if (auto ages = rd.numbers(doc, "initial", "", true)) {
    if (auto mu = rd.guarded("initial", [&] { return AgeMeasure(*ages); })) cfg.initial = *mu;
  }

  if (const auto t = rd.number(doc, "t_end", "", true)) {
    if (*t > 0.0) {
      cfg.t_end = *t;
    } else {
      rd.fail("t_end", "must be > 0");
    }
  }

  if (auto snaps = rd.numbers(doc, "snapshots", "", false)) {
    if (!std::is_sorted(snaps->begin(), snaps->end())) rd.fail("snapshots", "must be sorted");
    for (std::size_t i = 0; i < snaps->size(); ++i) {
      if ((*snaps)[i] < 0.0 || (*snaps)[i] > cfg.t_end) rd.fail(index("snapshots", i), "must lie in [0, t_end]");
    }
    cfg.snapshots = *snaps;
  }

  if (const json* g = rd.member(doc, "grid", "", false)) {
    rd.check_keys(*g, "grid", {"dt", "quadrature", "form"});
    if (const auto dt = rd.number(*g, "dt", "grid", false)) {
      if (*dt > 0.0) {
        cfg.dt = *dt;
      } else {
        rd.fail("grid.dt", "must be > 0");
      }
    }
    if (const auto q = rd.text(*g, "quadrature", "grid", false)) {
      if (*q == "trapezoid") {
        cfg.quadrature = Quadrature::trapezoid;
      } else if (*q == "rectangle") {
        cfg.quadrature = Quadrature::rectangle;
      } else {
        rd.fail("grid.quadrature", "must be 'trapezoid' or 'rectangle'");
      }
    }
    if (const auto f = rd.text(*g, "form", "grid", false)) {
      if (*f == "renewal") {
        cfg.form = EquationForm::renewal;
      } else if (*f == "transport") {
        cfg.form = EquationForm::transport;
      } else {
        rd.fail("grid.form", "must be 'renewal' or 'transport'");
      }
    }
  }

  if (const auto r = rd.count(doc, "replicates", "", false)) {
    if (*r >= 2) {
      cfg.replicates = *r;
    } else {
      rd.fail("replicates", "must be >= 2");
    }
  }
  if (const auto s = rd.count(doc, "seed", "", false)) cfg.seed = *s;
  if (const auto p = rd.count(doc, "parallelism", "", false)) {
    if (*p >= 1 && *p <= 1024) {
      cfg.parallelism = static_cast<unsigned>(*p);
    } else {
      rd.fail("parallelism", "must be in [1, 1024]");
    }
  }
  if (const auto m = rd.count(doc, "max_events", "", false)) {
    if (*m > 0) {
      cfg.max_events = *m;
    } else {
      rd.fail("max_events", "must be > 0");
    }
  }

  if (const json* tf = rd.member(doc, "test_function", "", false)) {
    if (auto f = rd.field(*tf, "test_function")) cfg.test_function = *f;
  }

  if (const json* mg = rd.member(doc, "martingale", "", false)) {
    rd.check_keys(*mg, "martingale", {"g", "snapshot_intervals"});
    if (const json* gs = rd.member(*mg, "g", "martingale", false)) {
      cfg.martingale_g.clear();
      if (!gs->is_array()) {
        rd.fail("martingale.g", "must be an array of names");
      } else {
        for (std::size_t i = 0; i < gs->size(); ++i) {
          const std::string ip = index("martingale.g", i);
          if (!(*gs)[i].is_string()) {
            rd.fail(ip, "must be a string");
            continue;
          }
          if (auto g = rd.guarded(ip, [&] { return parse_test_g((*gs)[i].get<std::string>()); })) {
            cfg.martingale_g.push_back(*g);
          }
        }
      }
    }
    if (const auto k = rd.count(*mg, "snapshot_intervals", "martingale", false)) {
      if (*k >= 2 && *k % 2 == 0) {
        cfg.snapshot_intervals = *k;
      } else {
        rd.fail("martingale.snapshot_intervals", "must be even and >= 2");
      }
    }
  }

  if (const json* eg = rd.member(doc, "ergodic", "", false)) {
    rd.check_keys(*eg, "ergodic", {"horizons"});
    if (auto hs = rd.numbers(*eg, "horizons", "ergodic", false)) {
      if (hs->empty() || !std::is_sorted(hs->begin(), hs->end()) || hs->front() <= 0.0) {
        rd.fail("ergodic.horizons", "must be a nonempty sorted list of positive times");
      } else {
        cfg.ergodic_horizons = *hs;
      }
    }
  }

  if (const json* st = rd.member(doc, "stationary", "", false)) {
    rd.check_keys(*st, "stationary", {"tolerance", "test_functions"});
    if (const auto tol = rd.number(*st, "tolerance", "stationary", false)) {
      if (*tol > 0.0) {
        cfg.stationary_tolerance = *tol;
      } else {
        rd.fail("stationary.tolerance", "must be > 0");
      }
    }
    if (const json* fs = rd.member(*st, "test_functions", "stationary", false)) {
      if (!fs->is_array()) {
        rd.fail("stationary.test_functions", "must be an array of fields");
      } else {
        for (std::size_t i = 0; i < fs->size(); ++i) {
          if (auto f = rd.field((*fs)[i], index("stationary.test_functions", i))) cfg.stationary_functions.push_back(*f);
        }
      }
    }
  }

  if (const json* rc = rd.member(doc, "record", "", false)) {
    rd.check_keys(*rc, "record", {"x_max", "stride"});
    if (const auto x = rd.number(*rc, "x_max", "record", false)) {
      if (*x >= 0.0) {
        cfg.record_x_max = *x;
      } else {
        rd.fail("record.x_max", "must be >= 0");
      }
    }
    if (const auto s = rd.count(*rc, "stride", "record", false)) cfg.record_stride = *s;
  }

  if (!rd.errors.empty()) {
    std::string msg = "invalid config (" + std::to_string(rd.errors.size()) + " problem" +
                      (rd.errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : rd.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& cfg) {
  json regimes = json::array();
  for (const auto& r : cfg.model.offspring().regimes()) regimes.push_back({{"from", r.from}, {"pmf", pmf_json(r.pmf)}});
  json g_names = json::array();
  for (TestG g : cfg.martingale_g) g_names.push_back(to_string(g));
  json stationary_fns = json::array();
  for (const auto& f : cfg.stationary_functions) stationary_fns.push_back(to_json(f));
  return json{
      {"schema_version", cfg.schema_version},
      {"model", {{"alpha", to_json(cfg.model.alpha())}, {"offspring", {{"regimes", regimes}}}}},
      {"immigration", immigration_json(cfg.immigration)},
      {"initial", std::vector<double>(cfg.initial.ages().begin(), cfg.initial.ages().end())},
      {"t_end", cfg.t_end},
      {"snapshots", cfg.snapshots},
      {"grid", {{"dt", cfg.dt}, {"quadrature", to_string(cfg.quadrature)}, {"form", to_string(cfg.form)}}},
      {"replicates", cfg.replicates},
      {"seed", cfg.seed},
      {"parallelism", cfg.parallelism},
      {"max_events", cfg.max_events},
      {"test_function", to_json(cfg.test_function)},
      {"martingale", {{"g", g_names}, {"snapshot_intervals", cfg.snapshot_intervals}}},
      {"ergodic", {{"horizons", cfg.ergodic_horizons}}},
      {"stationary", {{"tolerance", cfg.stationary_tolerance}, {"test_functions", stationary_fns}}},
      {"record", {{"x_max", cfg.record_x_max}, {"stride", cfg.record_stride}}},
  };
}

SimConfig to_sim_config(const RunConfig& cfg) {
  SimConfig s;
  s.model = cfg.model;
  s.immigration = cfg.immigration;
  s.initial = cfg.initial;
  s.t_end = cfg.t_end;
  s.snapshot_times = cfg.snapshots;
  s.seed = cfg.seed;
  s.max_events = cfg.max_events;
  return s;
}

McSettings to_mc_settings(const RunConfig& cfg) {
  McSettings m;
  m.replicates = cfg.replicates;
  m.seed = cfg.seed;
  m.parallelism = cfg.parallelism;
  m.dt = cfg.dt;
  m.snapshot_intervals = cfg.snapshot_intervals;
  return m;
}

SolverGrid to_grid(const RunConfig& cfg) { return SolverGrid{cfg.dt, cfg.t_end, cfg.quadrature, cfg.form}; }

}  // namespace agebranch
