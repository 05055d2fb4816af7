#include "bifrl/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace bifrl::kern {
namespace {

Backend g_forced = static_cast<Backend>(-1);
bool g_has_force = false;

Backend pick_backend() {
  if (g_has_force) return g_forced;
  if (const char* env = std::getenv("BIFRL_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::Avx2;
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

Backend& backend_slot() {
  static Backend b = pick_backend();
  return b;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return backend_slot(); }

const char* backend_name() {
  return active_backend() == Backend::Avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) b = Backend::Scalar;
  g_forced = b;
  g_has_force = true;
  backend_slot() = b;
}

const KernelTable& table() {
#if defined(__x86_64__) || defined(_M_X64)
  return backend_slot() == Backend::Avx2 ? avx2_table() : scalar_table();
#else
  return scalar_table();
#endif
}

}  // namespace bifrl::kern
