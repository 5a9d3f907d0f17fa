#include <cstddef>

#include "agebranch/kernels.hpp"

namespace agebranch::kernels::scalar {

void renewal_trapezoid(const Lanes& l, double h) {
  const double hh = 0.5 * h;
  for (std::size_t i = 0; i < l.w.size(); ++i) {
    l.w[i] = renewal_trapezoid_step(l.w[i], l.decay[i], l.a0[i], l.s0[i], l.a1[i], l.s1[i], hh);
  }
}

void renewal_rectangle(const Lanes& l, double h) {
  for (std::size_t i = 0; i < l.w.size(); ++i) {
    l.w[i] = renewal_rectangle_step(l.w[i], l.decay[i], l.a0[i], l.s0[i], h);
  }
}

void transport_trapezoid(const Lanes& l, double h) {
  const double hh = 0.5 * h;
  for (std::size_t i = 0; i < l.w.size(); ++i) {
    l.w[i] = transport_trapezoid_step(l.w[i], l.a0[i], l.s0[i], l.a1[i], l.s1[i], hh);
  }
}

void transport_rectangle(const Lanes& l, double h) {
  for (std::size_t i = 0; i < l.w.size(); ++i) {
    l.w[i] = transport_rectangle_step(l.w[i], l.a0[i], l.s0[i], h);
  }
}

}  // namespace agebranch::kernels::scalar
