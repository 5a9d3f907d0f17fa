// Compiled with -mavx2 only (no FMA) and -ffp-contract=off; see CMakeLists.txt.

#include <cstddef>

#include "agebranch/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace agebranch::kernels::avx2 {

#if defined(__AVX2__)

void renewal_trapezoid(const Lanes& l, double h) {
  const double hh = 0.5 * h;
  const __m256d vhh = _mm256_set1_pd(hh);
  const std::size_t n = l.w.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(l.w.data() + i);
    const __m256d d = _mm256_loadu_pd(l.decay.data() + i);
    const __m256d a0 = _mm256_loadu_pd(l.a0.data() + i);
    const __m256d s0 = _mm256_loadu_pd(l.s0.data() + i);
    const __m256d a1 = _mm256_loadu_pd(l.a1.data() + i);
    const __m256d s1 = _mm256_loadu_pd(l.s1.data() + i);
    const __m256d src = _mm256_add_pd(_mm256_mul_pd(_mm256_mul_pd(d, a0), s0), _mm256_mul_pd(a1, s1));
    _mm256_storeu_pd(l.w.data() + i, _mm256_add_pd(_mm256_mul_pd(d, w), _mm256_mul_pd(vhh, src)));
  }
  for (; i < n; ++i) {
    l.w[i] = renewal_trapezoid_step(l.w[i], l.decay[i], l.a0[i], l.s0[i], l.a1[i], l.s1[i], hh);
  }
}

void renewal_rectangle(const Lanes& l, double h) {
  const __m256d vh = _mm256_set1_pd(h);
  const std::size_t n = l.w.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(l.w.data() + i);
    const __m256d d = _mm256_loadu_pd(l.decay.data() + i);
    const __m256d a0 = _mm256_loadu_pd(l.a0.data() + i);
    const __m256d s0 = _mm256_loadu_pd(l.s0.data() + i);
    const __m256d src = _mm256_mul_pd(_mm256_mul_pd(d, a0), s0);
    _mm256_storeu_pd(l.w.data() + i, _mm256_add_pd(_mm256_mul_pd(d, w), _mm256_mul_pd(vh, src)));
  }
  for (; i < n; ++i) {
    l.w[i] = renewal_rectangle_step(l.w[i], l.decay[i], l.a0[i], l.s0[i], h);
  }
}

void transport_trapezoid(const Lanes& l, double h) {
  const double hh = 0.5 * h;
  const __m256d vhh = _mm256_set1_pd(hh);
  const __m256d one = _mm256_set1_pd(1.0);
  const std::size_t n = l.w.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(l.w.data() + i);
    const __m256d a0 = _mm256_loadu_pd(l.a0.data() + i);
    const __m256d s0 = _mm256_loadu_pd(l.s0.data() + i);
    const __m256d a1 = _mm256_loadu_pd(l.a1.data() + i);
    const __m256d s1 = _mm256_loadu_pd(l.s1.data() + i);
    const __m256d rhs = _mm256_add_pd(_mm256_mul_pd(a0, _mm256_sub_pd(s0, w)), _mm256_mul_pd(a1, s1));
    const __m256d num = _mm256_add_pd(w, _mm256_mul_pd(vhh, rhs));
    const __m256d den = _mm256_add_pd(one, _mm256_mul_pd(vhh, a1));
    _mm256_storeu_pd(l.w.data() + i, _mm256_div_pd(num, den));
  }
  for (; i < n; ++i) {
    l.w[i] = transport_trapezoid_step(l.w[i], l.a0[i], l.s0[i], l.a1[i], l.s1[i], hh);
  }
}

void transport_rectangle(const Lanes& l, double h) {
  const __m256d vh = _mm256_set1_pd(h);
  const std::size_t n = l.w.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(l.w.data() + i);
    const __m256d a0 = _mm256_loadu_pd(l.a0.data() + i);
    const __m256d s0 = _mm256_loadu_pd(l.s0.data() + i);
    const __m256d step = _mm256_mul_pd(a0, _mm256_sub_pd(s0, w));
    _mm256_storeu_pd(l.w.data() + i, _mm256_add_pd(w, _mm256_mul_pd(vh, step)));
  }
  for (; i < n; ++i) {
    l.w[i] = transport_rectangle_step(l.w[i], l.a0[i], l.s0[i], h);
  }
}

#else

// Non-x86 builds: the AVX2 entry points forward to the reference code and
// avx2_available() reports false, so dispatch never selects them.
void renewal_trapezoid(const Lanes& l, double h) { scalar::renewal_trapezoid(l, h); }
void renewal_rectangle(const Lanes& l, double h) { scalar::renewal_rectangle(l, h); }
void transport_trapezoid(const Lanes& l, double h) { scalar::transport_trapezoid(l, h); }
void transport_rectangle(const Lanes& l, double h) { scalar::transport_rectangle(l, h); }

#endif

}  // namespace agebranch::kernels::avx2
