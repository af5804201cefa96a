#pragma once

// Startup guard for executables: OpenBLAS picks its kernels when the library
// loads, so a faulty auto-detected kernel can only be replaced by restarting
// the process with OPENBLAS_CORETYPE set.

#include <cstdlib>
#include <cstdio>

#include <unistd.h>

#include "quenchstat/lapack.hpp"

namespace quenchstat {

inline const char* fallback_coretype() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f")) return "SkylakeX";
  if (__builtin_cpu_supports("avx2")) return "Haswell";
  return "Prescott";
#else
  return nullptr;
#endif
}

/// Runs the LAPACK self test; on failure re-executes the current program once
/// with a conservative OPENBLAS_CORETYPE. Returns false if the backend is still
/// faulty (the caller decides whether to continue).
inline bool ensure_working_backend(char** argv) {
  if (lapack::backend_self_test()) return true;
  const char* core = fallback_coretype();
  if (std::getenv("OPENBLAS_CORETYPE") == nullptr && core != nullptr) {
    ::setenv("OPENBLAS_CORETYPE", core, 1);
    ::execv("/proc/self/exe", argv);
  }
  std::fprintf(stderr, "warning: LAPACK self test failed; dense eigensolver results are unreliable\n");
  return false;
}

}  // namespace quenchstat
