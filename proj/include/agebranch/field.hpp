#pragma once

#include <string>
#include <variant>
#include <vector>

namespace agebranch {

// Declarative catalog of bounded nonnegative functions on [0, inf).
// Every entry has a closed-form antiderivative and exact range on intervals,
// which is what the thinning bound c1 = sup alpha and the solvers rely on.

struct ConstantField {
  double value = 0.0;
  bool operator==(const ConstantField&) const = default;
};

/// values[0] on [0, breaks[0]), values[i] on [breaks[i-1], breaks[i]), values.back() after.
struct StepField {
  std::vector<double> breaks;
  std::vector<double> values;
  bool operator==(const StepField&) const = default;
};

/// Linear interpolation between knots, constant extrapolation outside [x.front(), x.back()].
struct TableField {
  std::vector<double> x;
  std::vector<double> y;
  bool operator==(const TableField&) const = default;
};

/// floor + scale * exp(-rate * x)
struct ExpDecayField {
  double floor = 0.0;
  double scale = 1.0;
  double rate = 1.0;
  bool operator==(const ExpDecayField&) const = default;
};

/// floor + scale / (1 + rate * x)
struct RationalField {
  double floor = 0.0;
  double scale = 1.0;
  double rate = 1.0;
  bool operator==(const RationalField&) const = default;
};

struct Range {
  double inf = 0.0;
  double sup = 0.0;
};

class ScalarField {
 public:
  using Spec = std::variant<ConstantField, StepField, TableField, ExpDecayField, RationalField>;

  ScalarField() : spec_(ConstantField{0.0}) {}
  /// Validates the descriptor; throws DomainError on negative values or malformed knots.
  explicit ScalarField(Spec spec);

  static ScalarField constant(double value) { return ScalarField(ConstantField{value}); }
  static ScalarField step(std::vector<double> breaks, std::vector<double> values) {
    return ScalarField(StepField{std::move(breaks), std::move(values)});
  }
  static ScalarField table(std::vector<double> x, std::vector<double> y) {
    return ScalarField(TableField{std::move(x), std::move(y)});
  }
  static ScalarField exp_decay(double floor, double scale, double rate) {
    return ScalarField(ExpDecayField{floor, scale, rate});
  }
  static ScalarField rational(double floor, double scale, double rate) {
    return ScalarField(RationalField{floor, scale, rate});
  }

  double operator()(double x) const;
  /// Derivative where it exists; step and table fields return the one-sided slope.
  double derivative(double x) const;
  /// Exact integral over [a, b], a <= b.
  double integral(double a, double b) const;
  /// inf / sup over [a, b); b may be +infinity.
  Range range(double a, double b) const;

  double sup() const;
  double inf() const;
  /// True for fields with a bounded continuous first derivative.
  bool smooth() const;
  /// True when the field does not depend on x.
  bool is_constant() const;

  const Spec& spec() const { return spec_; }
  std::string kind() const;

  bool operator==(const ScalarField& other) const { return spec_ == other.spec_; }

 private:
  Spec spec_;
};

}  // namespace agebranch
