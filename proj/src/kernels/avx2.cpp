// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "icsurv/kernels.hpp"

namespace icsurv::kernels {

namespace {

// Cephes-style exp: x = n ln2 + r, |r| <= ln2/2, rational approximation for
// e^r, scale by 2^n through the exponent field. Lanes outside the safe range
// fall back to std::exp.
constexpr double kExpLo = -708.0;
constexpr double kExpHi = 709.0;

inline __m256d exp256(__m256d x) {
  const __m256d lo = _mm256_set1_pd(kExpLo);
  const __m256d hi = _mm256_set1_pd(kExpHi);
  const __m256d out_of_range = _mm256_or_pd(_mm256_cmp_pd(x, lo, _CMP_LT_OQ),
                                            _mm256_cmp_pd(x, hi, _CMP_NLE_UQ));
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);
  __m256d n = _mm256_floor_pd(_mm256_add_pd(_mm256_mul_pd(xc, log2e), _mm256_set1_pd(0.5)));
  __m256d r = _mm256_sub_pd(xc, _mm256_mul_pd(n, c1));
  r = _mm256_sub_pd(r, _mm256_mul_pd(n, c2));

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d px = _mm256_set1_pd(1.26177193074810590878E-4);
  px = _mm256_fmadd_pd(px, rr, _mm256_set1_pd(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, rr, _mm256_set1_pd(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_set1_pd(3.00198505138664455042E-6);
  qx = _mm256_fmadd_pd(qx, rr, _mm256_set1_pd(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, rr, _mm256_set1_pd(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, rr, _mm256_set1_pd(2.00000000000000000009E0));
  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));

  // 2^n: place n + 1023 in the exponent field.
  const __m256d magic = _mm256_set1_pd(4503599627370496.0 + 1023.0);
  __m256i bits = _mm256_castpd_si256(_mm256_add_pd(n, magic));
  bits = _mm256_slli_epi64(bits, 52);
  __m256d result = _mm256_mul_pd(e, _mm256_castsi256_pd(bits));

  if (_mm256_movemask_pd(out_of_range) != 0) {
    alignas(32) double xs[4], rs[4];
    _mm256_store_pd(xs, x);
    _mm256_store_pd(rs, result);
    for (int k = 0; k < 4; ++k)
      if (!(xs[k] >= kExpLo && xs[k] <= kExpHi)) rs[k] = std::exp(xs[k]);
    result = _mm256_load_pd(rs);
  }
  return result;
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

void exp_linear_avx2(const double* cols, std::size_t stride, std::size_t n, const double* coef,
                     std::size_t d, double* out) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d lp = _mm256_setzero_pd();
    for (std::size_t c = 0; c < d; ++c)
      lp = _mm256_add_pd(lp, _mm256_mul_pd(_mm256_set1_pd(coef[c]),
                                           _mm256_loadu_pd(cols + c * stride + j)));
    _mm256_storeu_pd(out + j, exp256(lp));
  }
  if (j < n) {
    alignas(32) double buf[4] = {0.0, 0.0, 0.0, 0.0};
    __m256d lp = _mm256_setzero_pd();
    for (std::size_t c = 0; c < d; ++c) {
      double tmp[4] = {0.0, 0.0, 0.0, 0.0};
      std::memcpy(tmp, cols + c * stride + j, (n - j) * sizeof(double));
      lp = _mm256_add_pd(lp, _mm256_mul_pd(_mm256_set1_pd(coef[c]), _mm256_loadu_pd(tmp)));
    }
    _mm256_store_pd(buf, exp256(lp));
    std::memcpy(out + j, buf, (n - j) * sizeof(double));
  }
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4), acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

void mul_avx2(const double* a, const double* b, std::size_t n, double* out) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4)
    _mm256_storeu_pd(out + j, _mm256_mul_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j)));
  for (; j < n; ++j) out[j] = a[j] * b[j];
}

// Same operation order as the scalar kernel (no FMA), so results match bit for bit.
void accumulate_moments_avx2(const double* w, const double* cols, std::size_t stride,
                             std::size_t n, std::size_t d, double* s0, double* s1, double* s2,
                             std::size_t ld) {
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d wv = _mm256_loadu_pd(w + j);
    _mm256_storeu_pd(s0 + j, _mm256_add_pd(_mm256_loadu_pd(s0 + j), wv));
    for (std::size_t c = 0; c < d; ++c) {
      const __m256d xc = _mm256_loadu_pd(cols + c * stride + j);
      const __m256d wx = _mm256_mul_pd(wv, xc);
      double* s1c = s1 + c * ld + j;
      _mm256_storeu_pd(s1c, _mm256_add_pd(_mm256_loadu_pd(s1c), wx));
      for (std::size_t e = 0; e <= c; ++e) {
        const __m256d xe = _mm256_loadu_pd(cols + e * stride + j);
        double* s2ce = s2 + (c * d + e) * ld + j;
        _mm256_storeu_pd(s2ce, _mm256_add_pd(_mm256_loadu_pd(s2ce), _mm256_mul_pd(wx, xe)));
      }
    }
  }
  for (; j < n; ++j) {
    s0[j] += w[j];
    for (std::size_t c = 0; c < d; ++c) {
      const double wx = w[j] * cols[c * stride + j];
      s1[c * ld + j] += wx;
      for (std::size_t e = 0; e <= c; ++e) s2[(c * d + e) * ld + j] += wx * cols[e * stride + j];
    }
  }
}

double log_sum_exp_avx2(const double* v, std::size_t n) {
  const double ninf = -std::numeric_limits<double>::infinity();
  if (n == 0) return ninf;
  __m256d mxv = _mm256_set1_pd(ninf);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) mxv = _mm256_max_pd(mxv, _mm256_loadu_pd(v + j));
  double mx = hmax(mxv);
  for (std::size_t k = j; k < n; ++k) mx = v[k] > mx ? v[k] : mx;
  if (!std::isfinite(mx)) return mx;
  const __m256d m = _mm256_set1_pd(mx);
  __m256d acc = _mm256_setzero_pd();
  for (j = 0; j + 4 <= n; j += 4)
    acc = _mm256_add_pd(acc, exp256(_mm256_sub_pd(_mm256_loadu_pd(v + j), m)));
  double s = hsum(acc);
  for (; j < n; ++j) s += std::exp(v[j] - mx);
  return mx + std::log(s);
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{exp_linear_avx2, dot_avx2, mul_avx2, accumulate_moments_avx2,
                                 log_sum_exp_avx2};
  return table;
}

}  // namespace icsurv::kernels
