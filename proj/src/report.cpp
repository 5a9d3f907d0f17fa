#include "agebranch/report.hpp"

#include <algorithm>

#include "agebranch/csv.hpp"

namespace agebranch {

void write_reports_csv(std::ostream& out, std::span<const ComparisonReport> reports) {
  csv::row(out, {"name", "mc", "se", "analytic", "tol", "z", "verdict"});
  for (const auto& r : reports) {
    csv::row(out, {r.name, csv::number(r.mc.value), csv::number(r.mc.std_error), csv::number(r.analytic),
                   csv::number(r.tol), csv::number(r.z), r.verdict()});
  }
}

bool all_pass(std::span<const ComparisonReport> reports) {
  return std::all_of(reports.begin(), reports.end(), [](const ComparisonReport& r) { return r.pass; });
}

nlohmann::json summary_json(std::span<const ComparisonReport> reports) {
  nlohmann::json rows = nlohmann::json::array();
  std::size_t passed = 0;
  for (const auto& r : reports) {
    passed += r.pass ? 1 : 0;
    rows.push_back({
        {"name", r.name},
        {"mc", r.mc.value},
        {"se", r.mc.std_error},
        {"replicates", r.mc.replicates},
        {"excluded", r.mc.excluded},
        {"seed", r.mc.seed},
        {"analytic", r.analytic},
        {"tol", r.tol},
        {"z", r.z},
        {"p_value", r.p_value},
        {"sidedness", r.sidedness == Sidedness::two_sided ? "two_sided" : "upper_bound"},
        {"negative_control", r.negative_control},
        {"verdict", r.verdict()},
    });
  }
  return {
      {"reports", rows},
      {"counts", {{"total", reports.size()}, {"pass", passed}, {"fail", reports.size() - passed}}},
      {"all_pass", passed == reports.size()},
  };
}

}  // namespace agebranch
