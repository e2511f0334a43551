#pragma once

// Data-parallel inner loops of the likelihood and M-step.
//
// Each kernel has a scalar reference implementation and, on x86-64, an AVX2+FMA
// variant. The active table is chosen once at startup from CPU features and can
// be overridden (ICSURV_SIMD=scalar|avx2 or set_backend) for equivalence tests.
// Column-major covariate blocks: column c of an (n x d) block starts at
// cols + c * stride.

#include <cstddef>
#include <string_view>

namespace icsurv::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
  /// out[j] = exp(sum_c coef[c] * cols[c * stride + j]) for j < n.
  void (*exp_linear)(const double* cols, std::size_t stride, std::size_t n, const double* coef,
                     std::size_t d, double* out);
  /// sum_j a[j] * b[j].
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// out[j] = a[j] * b[j].
  void (*mul)(const double* a, const double* b, std::size_t n, double* out);
  /// Risk-set moments: s0[j] += w[j]; s1[c][j] += w[j] x_c[j];
  /// s2[(c*d+e)][j] += w[j] x_c[j] x_e[j] for e <= c. s1/s2 are column-major
  /// with leading dimension `ld`.
  void (*accumulate_moments)(const double* w, const double* cols, std::size_t stride,
                             std::size_t n, std::size_t d, double* s0, double* s1, double* s2,
                             std::size_t ld);
  /// log(sum_j exp(v[j])); -inf entries contribute nothing; empty or all -inf -> -inf.
  double (*log_sum_exp)(const double* v, std::size_t n);
};

const KernelTable& scalar_table();
/// Null when the build or CPU lacks AVX2 + FMA.
const KernelTable* avx2_table();

/// The table in use.
const KernelTable& active();
Backend active_backend();
/// Returns false (and leaves the selection unchanged) if unavailable.
bool set_backend(Backend b);
std::string_view backend_name(Backend b);

}  // namespace icsurv::kernels
