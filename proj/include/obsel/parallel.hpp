#pragma once

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace obsel {

/// Selects between the serial reference loop and the OpenMP kernel.
enum class ExecutionPolicy { serial, parallel };

inline void set_thread_count(int n) {
#if defined(_OPENMP)
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace obsel
