#include "aesm2/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace aesm2::kernels {

#if defined(AESM2_HAVE_AVX2)
const Kernels& avx2_kernels();

static bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#else
static bool avx2_supported() { return false; }
#endif

namespace {

std::atomic<const Kernels*> g_active{nullptr};

const Kernels* by_name(std::string_view name) {
  if (name == "scalar") return &scalar_kernels();
#if defined(AESM2_HAVE_AVX2)
  if (name == "avx2" && avx2_supported()) return &avx2_kernels();
#endif
  if (name == "auto") {
#if defined(AESM2_HAVE_AVX2)
    if (avx2_supported()) return &avx2_kernels();
#endif
    return &scalar_kernels();
  }
  return nullptr;
}

const Kernels* resolve_from_env() {
  const char* env = std::getenv("AESM2_KERNELS");
  const Kernels* k = by_name(env ? std::string_view(env) : "auto");
  return k ? k : by_name("auto");
}

}  // namespace

const Kernels& active() {
  const Kernels* k = g_active.load(std::memory_order_acquire);
  if (k == nullptr) {
    k = resolve_from_env();
    g_active.store(k, std::memory_order_release);
  }
  return *k;
}

bool select(std::string_view name) {
  const Kernels* k = by_name(name);
  if (k == nullptr) return false;
  g_active.store(k, std::memory_order_release);
  return true;
}

std::vector<const Kernels*> available() {
  std::vector<const Kernels*> out{&scalar_kernels()};
#if defined(AESM2_HAVE_AVX2)
  if (avx2_supported()) out.push_back(&avx2_kernels());
#endif
  return out;
}

}  // namespace aesm2::kernels
