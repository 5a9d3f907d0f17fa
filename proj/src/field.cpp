#include "agebranch/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agebranch/errors.hpp"
#include "overloaded.hpp"

namespace agebranch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using detail::Overloaded;

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError("scalar field: " + what);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

void validate(const ConstantField& c) { require(finite_nonneg(c.value), "constant value must be finite and >= 0"); }

void validate(const StepField& s) {
  require(!s.values.empty() && s.values.size() == s.breaks.size() + 1,
          "step field needs values.size() == breaks.size() + 1");
  for (double v : s.values) require(finite_nonneg(v), "step values must be finite and >= 0");
  for (std::size_t i = 0; i < s.breaks.size(); ++i) {
    require(std::isfinite(s.breaks[i]) && s.breaks[i] > 0.0, "step breaks must be finite and > 0");
    if (i > 0) require(s.breaks[i] > s.breaks[i - 1], "step breaks must be strictly increasing");
  }
}

void validate(const TableField& t) {
  require(!t.x.empty() && t.x.size() == t.y.size(), "table needs matching non-empty x and y");
  for (std::size_t i = 0; i < t.x.size(); ++i) {
    require(std::isfinite(t.x[i]) && t.x[i] >= 0.0, "table knots must be finite and >= 0");
    require(finite_nonneg(t.y[i]), "table values must be finite and >= 0");
    if (i > 0) require(t.x[i] > t.x[i - 1], "table knots must be strictly increasing");
  }
}

void validate_monotone(double floor, double scale, double rate, const char* name) {
  require(std::isfinite(floor) && std::isfinite(scale) && std::isfinite(rate), std::string(name) + " parameters must be finite");
  require(floor >= 0.0 && floor + scale >= 0.0, std::string(name) + " needs floor >= 0 and floor + scale >= 0");
  require(rate >= 0.0, std::string(name) + " rate must be >= 0");
}

void validate(const ExpDecayField& e) { validate_monotone(e.floor, e.scale, e.rate, "exp_decay"); }
void validate(const RationalField& r) { validate_monotone(r.floor, r.scale, r.rate, "rational"); }

// Index of the step piece containing x.
std::size_t step_piece(const StepField& s, double x) {
  return static_cast<std::size_t>(std::upper_bound(s.breaks.begin(), s.breaks.end(), x) - s.breaks.begin());
}

double table_eval(const TableField& t, double x) {
  if (x <= t.x.front()) return t.y.front();
  if (x >= t.x.back()) return t.y.back();
  const auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - t.x.begin());
  const double x0 = t.x[i - 1], x1 = t.x[i];
  const double y0 = t.y[i - 1], y1 = t.y[i];
  return y0 + (y1 - y0) * ((x - x0) / (x1 - x0));
}

// Integral of the table from 0 to x.
double table_primitive(const TableField& t, double x) {
  if (x <= t.x.front()) return t.y.front() * x;
  double acc = t.y.front() * t.x.front();
  for (std::size_t i = 1; i < t.x.size(); ++i) {
    const double x0 = t.x[i - 1];
    if (x <= x0) break;
    const double x1 = std::min(t.x[i], x);
    acc += 0.5 * (t.y[i - 1] + table_eval(t, x1)) * (x1 - x0);
  }
  if (x > t.x.back()) acc += t.y.back() * (x - t.x.back());
  return acc;
}

double step_primitive(const StepField& s, double x) {
  double acc = 0.0;
  double left = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    const double right = i < s.breaks.size() ? s.breaks[i] : kInf;
    if (x <= left) break;
    acc += s.values[i] * (std::min(x, right) - left);
    left = right;
  }
  return acc;
}

Range monotone_range(double fa, double fb) { return {std::min(fa, fb), std::max(fa, fb)}; }

}  // namespace

ScalarField::ScalarField(Spec spec) : spec_(std::move(spec)) {
  std::visit([](const auto& s) { validate(s); }, spec_);
}

double ScalarField::operator()(double x) const {
  return std::visit(
      Overloaded{
          [](const ConstantField& c) { return c.value; },
          [x](const StepField& s) { return s.values[step_piece(s, x)]; },
          [x](const TableField& t) { return table_eval(t, x); },
          [x](const ExpDecayField& e) { return e.floor + e.scale * std::exp(-e.rate * x); },
          [x](const RationalField& r) { return r.floor + r.scale / (1.0 + r.rate * x); },
      },
      spec_);
}

double ScalarField::derivative(double x) const {
  return std::visit(
      Overloaded{
          [](const ConstantField&) { return 0.0; },
          [](const StepField&) { return 0.0; },
          [x](const TableField& t) {
            if (x < t.x.front() || x >= t.x.back()) return 0.0;
            const auto i = static_cast<std::size_t>(std::upper_bound(t.x.begin(), t.x.end(), x) - t.x.begin());
            return (t.y[i] - t.y[i - 1]) / (t.x[i] - t.x[i - 1]);
          },
          [x](const ExpDecayField& e) { return -e.scale * e.rate * std::exp(-e.rate * x); },
          [x](const RationalField& r) {
            const double d = 1.0 + r.rate * x;
            return -r.scale * r.rate / (d * d);
          },
      },
      spec_);
}

double ScalarField::integral(double a, double b) const {
  if (b < a) throw DomainError("scalar field: integral needs a <= b");
  return std::visit(
      Overloaded{
          [=](const ConstantField& c) { return c.value * (b - a); },
          [=](const StepField& s) { return step_primitive(s, b) - step_primitive(s, a); },
          [=](const TableField& t) { return table_primitive(t, b) - table_primitive(t, a); },
          [=](const ExpDecayField& e) {
            if (e.rate == 0.0) return (e.floor + e.scale) * (b - a);
            // scale/rate * (e^{-ra} - e^{-rb}) written to avoid cancellation for short intervals
            return e.floor * (b - a) - e.scale / e.rate * std::exp(-e.rate * a) * std::expm1(-e.rate * (b - a));
          },
          [=](const RationalField& r) {
            if (r.rate == 0.0) return (r.floor + r.scale) * (b - a);
            return r.floor * (b - a) + r.scale / r.rate * std::log1p(r.rate * (b - a) / (1.0 + r.rate * a));
          },
      },
      spec_);
}

Range ScalarField::range(double a, double b) const {
  if (!(b > a)) return {(*this)(a), (*this)(a)};
  return std::visit(
      Overloaded{
          [](const ConstantField& c) { return Range{c.value, c.value}; },
          [=](const StepField& s) {
            Range r{kInf, -kInf};
            double left = 0.0;
            for (std::size_t i = 0; i < s.values.size(); ++i) {
              const double right = i < s.breaks.size() ? s.breaks[i] : kInf;
              if (left < b && right > a) {
                r.inf = std::min(r.inf, s.values[i]);
                r.sup = std::max(r.sup, s.values[i]);
              }
              left = right;
            }
            return r;
          },
          [=](const TableField& t) {
            const double fb = std::isinf(b) ? t.y.back() : table_eval(t, b);
            Range r = monotone_range(table_eval(t, a), fb);
            for (std::size_t i = 0; i < t.x.size(); ++i) {
              if (t.x[i] > a && t.x[i] < b) {
                r.inf = std::min(r.inf, t.y[i]);
                r.sup = std::max(r.sup, t.y[i]);
              }
            }
            return r;
          },
          [=](const ExpDecayField& e) {
            const double fb = std::isinf(b) ? (e.rate > 0.0 ? e.floor : e.floor + e.scale)
                                            : e.floor + e.scale * std::exp(-e.rate * b);
            return monotone_range(e.floor + e.scale * std::exp(-e.rate * a), fb);
          },
          [=](const RationalField& r) {
            const double fb = std::isinf(b) ? (r.rate > 0.0 ? r.floor : r.floor + r.scale)
                                            : r.floor + r.scale / (1.0 + r.rate * b);
            return monotone_range(r.floor + r.scale / (1.0 + r.rate * a), fb);
          },
      },
      spec_);
}

double ScalarField::sup() const { return range(0.0, kInf).sup; }
double ScalarField::inf() const { return range(0.0, kInf).inf; }

bool ScalarField::smooth() const {
  return std::holds_alternative<ConstantField>(spec_) || std::holds_alternative<ExpDecayField>(spec_) ||
         std::holds_alternative<RationalField>(spec_);
}

bool ScalarField::is_constant() const {
  const Range r = range(0.0, kInf);
  return r.inf == r.sup;
}

std::string ScalarField::kind() const {
  return std::visit(Overloaded{
                        [](const ConstantField&) { return std::string("constant"); },
                        [](const StepField&) { return std::string("step"); },
                        [](const TableField&) { return std::string("table"); },
                        [](const ExpDecayField&) { return std::string("exp_decay"); },
                        [](const RationalField&) { return std::string("rational"); },
                    },
                    spec_);
}

}  // namespace agebranch
