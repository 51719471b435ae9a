#include <atomic>
#include <cstdlib>
#include <string_view>

#include "dsdf/kernels.hpp"

namespace dsdf::kernels {

#if defined(DSDF_HAVE_AVX2)
const KernelTable& avx2_table_impl();
#endif

const KernelTable* avx2_table() {
#if defined(DSDF_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("DSDF_KERNELS")) {
    if (std::string_view(env) == "scalar") return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table());
    return true;
  }
  if (name == "avx2" || name == "auto") {
    if (const KernelTable* t = avx2_table()) {
      current().store(t);
      return true;
    }
    if (name == "auto") {
      current().store(&scalar_table());
      return true;
    }
  }
  return false;
}

}  // namespace dsdf::kernels
