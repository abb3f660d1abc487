#include "fscert/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fscert {

int worker_lanes() {
  int lanes = 1;
#ifdef _OPENMP
  lanes = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("FSCERT_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) lanes = std::min(lanes, cap);
    } catch (...) {
      // unparsable value: keep the default
    }
  }
  return std::max(lanes, 1);
}

}  // namespace fscert
