#pragma once

#include <json.hpp>
#include <ostream>
#include <span>

#include "agebranch/validation.hpp"

namespace agebranch {

/// reports.csv: name,mc,se,analytic,tol,z,verdict. Header only for an empty suite.
void write_reports_csv(std::ostream& out, std::span<const ComparisonReport> reports);

/// Every number of the CSV plus replicate counts, p-values and pass/fail totals.
nlohmann::json summary_json(std::span<const ComparisonReport> reports);

bool all_pass(std::span<const ComparisonReport> reports);

}  // namespace agebranch
