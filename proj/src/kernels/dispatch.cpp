#include <atomic>
#include <cstdlib>
#include <string>

#include "icsurv/kernels.hpp"

namespace icsurv::kernels {

#if defined(ICSURV_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(ICSURV_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const char* env = std::getenv("ICSURV_SIMD");
  if (env != nullptr && std::string(env) == "scalar") return Backend::scalar;
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& selection() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(ICSURV_HAVE_AVX2)
  if (cpu_has_avx2()) return &avx2_kernels();
#endif
  return nullptr;
}

const KernelTable& active() {
  if (selection().load(std::memory_order_relaxed) == Backend::avx2) {
    if (const KernelTable* t = avx2_table()) return *t;
  }
  return scalar_table();
}

Backend active_backend() { return selection().load(); }

bool set_backend(Backend b) {
  if (b == Backend::avx2 && avx2_table() == nullptr) return false;
  selection().store(b);
  return true;
}

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

}  // namespace icsurv::kernels
