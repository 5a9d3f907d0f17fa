#pragma once

#include <span>
#include <string>

// Elementwise time-level updates of the characteristic solvers. Each lane is
// one ray; a0/s0 are hazard and source at the start of the step, a1/s1 at the
// end, decay = exp(-int alpha) over the step. The scalar reference and the
// AVX2 variant evaluate the same expression tree in the same order, so they
// agree bit for bit.

namespace agebranch::kernels {

struct Lanes {
  std::span<double> w;
  std::span<const double> decay;
  std::span<const double> a0;
  std::span<const double> s0;
  std::span<const double> a1;
  std::span<const double> s1;
};

inline double renewal_trapezoid_step(double w, double d, double a0, double s0, double a1, double s1, double hh) {
  return d * w + hh * (d * a0 * s0 + a1 * s1);
}

inline double renewal_rectangle_step(double w, double d, double a0, double s0, double h) {
  return d * w + h * (d * a0 * s0);
}

inline double transport_trapezoid_step(double w, double a0, double s0, double a1, double s1, double hh) {
  return (w + hh * (a0 * (s0 - w) + a1 * s1)) / (1.0 + hh * a1);
}

inline double transport_rectangle_step(double w, double a0, double s0, double h) {
  return w + h * (a0 * (s0 - w));
}

enum class Isa { scalar, avx2 };

std::string to_string(Isa isa);
bool avx2_available();
/// Variant used by the dispatching entry points. Defaults to the best the CPU
/// supports; AGEBRANCH_ISA=scalar|avx2 overrides at first use.
Isa active_isa();
/// Throws DomainError if the requested variant is not available.
void set_isa(Isa isa);

// Dispatching entry points. `h` is the full step; trapezoid variants halve it.
void renewal_trapezoid(const Lanes& l, double h);
void renewal_rectangle(const Lanes& l, double h);
void transport_trapezoid(const Lanes& l, double h);
void transport_rectangle(const Lanes& l, double h);

namespace scalar {
void renewal_trapezoid(const Lanes& l, double h);
void renewal_rectangle(const Lanes& l, double h);
void transport_trapezoid(const Lanes& l, double h);
void transport_rectangle(const Lanes& l, double h);
}  // namespace scalar

namespace avx2 {
void renewal_trapezoid(const Lanes& l, double h);
void renewal_rectangle(const Lanes& l, double h);
void transport_trapezoid(const Lanes& l, double h);
void transport_rectangle(const Lanes& l, double h);
}  // namespace avx2

}  // namespace agebranch::kernels
