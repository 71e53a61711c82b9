#include "upanets/kernels/parallel.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace upanets::kernels {

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int threads) {
#if defined(_OPENMP)
  omp_set_num_threads(threads < 1 ? 1 : threads);
#else
  (void)threads;
#endif
}

}  // namespace upanets::kernels
