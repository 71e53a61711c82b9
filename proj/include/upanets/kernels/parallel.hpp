#pragma once

#include "upanets/shape.hpp"

namespace upanets::kernels {

/// Threads used by the OpenMP kernels (1 when built without OpenMP).
int max_threads();
void set_num_threads(int threads);

/// Static-schedule loop over [begin, end). `body` must not throw.
template <typename Body>
void parallel_for(Index begin, Index end, Body&& body) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
  for (Index i = begin; i < end; ++i) body(i);
}

}  // namespace upanets::kernels
