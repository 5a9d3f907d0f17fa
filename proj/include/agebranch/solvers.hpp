#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "agebranch/field.hpp"
#include "agebranch/immigration.hpp"
#include "agebranch/measure.hpp"
#include "agebranch/model.hpp"

namespace agebranch {

enum class Quadrature { rectangle, trapezoid };
/// renewal: integrating-factor form with exact exp(-int alpha) decay.
/// transport: the same ray equation with alpha w treated by the quadrature.
enum class EquationForm { renewal, transport };

std::string to_string(Quadrature q);
std::string to_string(EquationForm f);

struct SolverGrid {
  double dt = 1e-3;
  double horizon = 1.0;
  Quadrature quadrature = Quadrature::trapezoid;
  EquationForm form = EquationForm::renewal;

  /// Number of steps, round(horizon / dt), at least 1.
  std::size_t steps() const;
  /// Actual step horizon / steps().
  double step() const;
  /// Throws DomainError unless dt > 0 and horizon >= 0 are finite.
  void validate() const;
};

struct RecordOptions {
  /// Ages whose trace t_j -> u_{t_j} f(a) (or pi) is kept for every step.
  std::vector<double> trace_ages;
  /// Record the field on x in [0, x_max] every `stride` steps (0 disables).
  double x_max = 0.0;
  std::size_t stride = 0;
};

/// Field values recorded on the grid: values[r][i] at time t[r], x = i * dx.
struct FieldTable {
  std::vector<double> t;
  double dx = 0.0;
  std::vector<std::vector<double>> values;
};

using Function = std::function<double(double)>;

namespace detail {
struct RayProblem;
}

/// Discretised u_t f or pi_t f: boundary trace at age 0, traces at requested
/// ages, optional recorded field, and an evaluator at arbitrary (t, x).
class CharacteristicSolution {
 public:
  enum class Kind { cumulant, moment };

  Kind kind() const { return kind_; }
  const SolverGrid& grid() const { return grid_; }
  std::size_t steps() const { return boundary_.size() - 1; }
  double step() const { return h_; }
  double time(std::size_t j) const { return static_cast<double>(j) * h_; }

  /// u_{t_j} f(0) (or pi_{t_j} f(0)) for j = 0..steps().
  std::span<const double> boundary() const { return boundary_; }
  /// Values at a registered trace age for j = 0..steps(); DomainError otherwise.
  std::span<const double> trace(double age) const;
  const FieldTable& table() const { return table_; }

  /// Marches the single characteristic through (t, x) against the stored
  /// boundary; t in [0, horizon], x >= 0.
  double operator()(double t, double x) const;

 private:
  friend CharacteristicSolution solve_characteristics(Kind, const BranchingModel&, Function, const SolverGrid&,
                                                      const RecordOptions&);
  Kind kind_ = Kind::cumulant;
  SolverGrid grid_;
  double h_ = 0.0;
  std::vector<double> boundary_;
  std::vector<double> trace_ages_;
  std::vector<std::vector<double>> traces_;
  FieldTable table_;
  std::shared_ptr<const detail::RayProblem> problem_;
};

using CumulantSolution = CharacteristicSolution;
using MomentSolution = CharacteristicSolution;

/// Shared engine behind solve_u / solve_pi.
CharacteristicSolution solve_characteristics(CharacteristicSolution::Kind kind, const BranchingModel& model, Function f,
                                             const SolverGrid& grid, const RecordOptions& record);

/// Cumulant semigroup u_t f for t in [0, grid.horizon]. Throws ContractionError
/// when dt * c1 >= 1 or the implicit boundary step fails to converge.
CumulantSolution solve_u(const BranchingModel& model, const ScalarField& f, const SolverGrid& grid,
                         const RecordOptions& record = {});
CumulantSolution solve_u(const BranchingModel& model, Function f, const SolverGrid& grid,
                         const RecordOptions& record = {});

/// Moment semigroup pi_t f.
MomentSolution solve_pi(const BranchingModel& model, const ScalarField& f, const SolverGrid& grid,
                        const RecordOptions& record = {});
MomentSolution solve_pi(const BranchingModel& model, Function f, const SolverGrid& grid,
                        const RecordOptions& record = {});

/// (1 - e^{-f(x+t)}) exp(-int_x^{x+t} alpha).
double survival_lower_bound(const BranchingModel& model, const ScalarField& f, double t, double x);

/// int_0^T psi(u_s f) ds with T = grid.horizon.
double psi_integral(const BranchingModel& model, const ImmigrationMechanism& imm, const ScalarField& f,
                    const SolverGrid& grid);

struct AnalyticValue {
  double value = 0.0;
  double exponent = 0.0;  ///< -log(value) for Laplace functionals
};

/// exp(-<sigma, u_T f> - int_0^T psi(u_s f) ds), T = grid.horizon.
AnalyticValue analytic_laplace(const BranchingModel& model, const ImmigrationMechanism& imm, const AgeMeasure& sigma,
                               const ScalarField& f, const SolverGrid& grid);
/// Same for an arbitrary nonnegative f; f = +infinity gives P(X_T = 0).
AnalyticValue analytic_laplace(const BranchingModel& model, const ImmigrationMechanism& imm, const AgeMeasure& sigma,
                               Function f, const SolverGrid& grid);

/// <sigma, pi_T f> + int_0^T int <nu, pi_s f> L(dnu) ds.
double analytic_mean(const BranchingModel& model, const ImmigrationMechanism& imm, const AgeMeasure& sigma,
                     const ScalarField& f, const SolverGrid& grid);

enum class Ergodicity { ergodic, not_ergodic, unknown };
std::string to_string(Ergodicity e);

struct ErgodicityReport {
  Ergodicity status = Ergodicity::unknown;
  double c0 = 0.0;
  LogMoment log_moment;
  std::string reason;
};

ErgodicityReport ergodicity_check(const BranchingModel& model, const ImmigrationMechanism& imm);

struct StationaryResult {
  double value = 1.0;       ///< exp(-int_0^inf psi(u_s f) ds)
  double exponent = 0.0;    ///< the integral itself
  double tail_bound = 0.0;  ///< certified bound on int_T^inf
  double quad_error = 0.0;  ///< Richardson estimate on [0, T]
  double horizon = 0.0;
  double dt = 0.0;
};

/// Certified stationary Laplace transform; total error on the exponent below
/// `tol`. Throws PreconditionError unless ergodicity_check reports ergodic.
StationaryResult stationary_laplace(const BranchingModel& model, const ImmigrationMechanism& imm,
                                    const ScalarField& f, double tol = 1e-6);

struct IdentityCheck {
  double a = 0.0;
  double c = 0.0;
  double n = 0.0;
  double lhs = 0.0;  ///< int_0^inf (1 - exp(-a n e^{-c s})) ds
  double rhs = 0.0;  ///< c^{-1} int_0^{a n} (1 - e^{-z}) / z dz
};

IdentityCheck elementary_identity_check(double a, double c, double n);
/// a, c in {0.5, 1, 2}, n in {1, 2, 5}.
std::vector<IdentityCheck> identity_grid();

/// CSV exports: "t,b" and "t,x,value".
void write_boundary_csv(std::ostream& out, const CharacteristicSolution& sol);
void write_field_csv(std::ostream& out, const CharacteristicSolution& sol);

}  // namespace agebranch
