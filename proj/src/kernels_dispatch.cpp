#include <atomic>
#include <cstdlib>
#include <string_view>

#include "agebranch/errors.hpp"
#include "agebranch/kernels.hpp"

namespace agebranch::kernels {

namespace {

bool detect_avx2() {
#if (defined(__x86_64__) || defined(__i386__)) && defined(AGEBRANCH_HAVE_AVX2_TU)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa initial_isa() {
  const bool have = detect_avx2();
  if (const char* env = std::getenv("AGEBRANCH_ISA")) {
    const std::string_view v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && have) return Isa::avx2;
  }
  return have ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string to_string(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
  static const bool have = detect_avx2();
  return have;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_available()) throw DomainError("kernels: AVX2 is not available on this CPU/build");
  current().store(isa, std::memory_order_relaxed);
}

void renewal_trapezoid(const Lanes& l, double h) {
  active_isa() == Isa::avx2 ? avx2::renewal_trapezoid(l, h) : scalar::renewal_trapezoid(l, h);
}

void renewal_rectangle(const Lanes& l, double h) {
  active_isa() == Isa::avx2 ? avx2::renewal_rectangle(l, h) : scalar::renewal_rectangle(l, h);
}

void transport_trapezoid(const Lanes& l, double h) {
  active_isa() == Isa::avx2 ? avx2::transport_trapezoid(l, h) : scalar::transport_trapezoid(l, h);
}

void transport_rectangle(const Lanes& l, double h) {
  active_isa() == Isa::avx2 ? avx2::transport_rectangle(l, h) : scalar::transport_rectangle(l, h);
}

}  // namespace agebranch::kernels
