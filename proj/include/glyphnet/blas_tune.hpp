#pragma once

#include <cctype>
#include <cstdlib>
#include <string_view>

#if defined(__linux__) && defined(__x86_64__) && defined(__GNUC__)
#include <unistd.h>
// Resolve when the linked BLAS is OpenBLAS; null otherwise.
extern "C" char* openblas_get_corename(void) __attribute__((weak));
#endif

namespace glyphnet {

/// Repair OpenBLAS kernel selection on hosts where CPU model detection fails.
///
/// OpenBLAS picks its compute kernels from the CPU model id once, while the
/// library loads — before main() runs. Virtual machines often mask the model
/// id, and the fallback is a scalar-era kernel set that costs 3-5x in GEMM
/// throughput on wide-vector hardware. When that mismatch is visible (the
/// selected core predates AVX2 but the CPU reports AVX2 or AVX-512), the only
/// remedy after load is to restart the process with OPENBLAS_CORETYPE pinned,
/// so this re-execs the current binary once with that variable set.
///
/// Call it first thing in main(). It returns without acting when the
/// environment already chooses a core type, when the selected kernels are
/// already vector-era, when the BLAS is not OpenBLAS, off x86-64 Linux, or if
/// the re-exec fails — the process then simply keeps the kernels it has.
inline void tune_blas_kernels(char** argv) {
#if defined(__linux__) && defined(__x86_64__) && defined(__GNUC__)
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  if (!openblas_get_corename) return;

  const auto iequal = [](std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
      if (std::tolower(static_cast<unsigned char>(a[i])) !=
          std::tolower(static_cast<unsigned char>(b[i])))
        return false;
    return true;
  };
  const std::string_view picked = openblas_get_corename();
  for (std::string_view vector_era :
       {"Haswell", "Zen", "SkylakeX", "Cooperlake", "SapphireRapids"})
    if (iequal(picked, vector_era)) return;

  const char* core = nullptr;
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512vl") &&
      __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512dq"))
    core = "SKYLAKEX";
  else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    core = "HASWELL";
  if (core == nullptr) return;

  setenv("OPENBLAS_CORETYPE", core, 1);
  execv("/proc/self/exe", argv);
  // exec failed: carry on with the detected kernels.
#else
  (void)argv;
#endif
}

}  // namespace glyphnet
