#include <cmath>
#include <limits>

#include "icsurv/kernels.hpp"

namespace icsurv::kernels {

namespace {

void exp_linear_scalar(const double* cols, std::size_t stride, std::size_t n, const double* coef,
                       std::size_t d, double* out) {
  for (std::size_t j = 0; j < n; ++j) {
    double lp = 0.0;
    for (std::size_t c = 0; c < d; ++c) lp += coef[c] * cols[c * stride + j];
    out[j] = std::exp(lp);
  }
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

void mul_scalar(const double* a, const double* b, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = a[j] * b[j];
}

void accumulate_moments_scalar(const double* w, const double* cols, std::size_t stride,
                               std::size_t n, std::size_t d, double* s0, double* s1, double* s2,
                               std::size_t ld) {
  for (std::size_t j = 0; j < n; ++j) s0[j] += w[j];
  for (std::size_t c = 0; c < d; ++c) {
    const double* xc = cols + c * stride;
    double* s1c = s1 + c * ld;
    for (std::size_t j = 0; j < n; ++j) s1c[j] += w[j] * xc[j];
    for (std::size_t e = 0; e <= c; ++e) {
      const double* xe = cols + e * stride;
      double* s2ce = s2 + (c * d + e) * ld;
      for (std::size_t j = 0; j < n; ++j) s2ce[j] += w[j] * xc[j] * xe[j];
    }
  }
}

double log_sum_exp_scalar(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = v[j] > mx ? v[j] : mx;
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp(v[j] - mx);
  return mx + std::log(s);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{exp_linear_scalar, dot_scalar, mul_scalar,
                                 accumulate_moments_scalar, log_sum_exp_scalar};
  return table;
}

}  // namespace icsurv::kernels
