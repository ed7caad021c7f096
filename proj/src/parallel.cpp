#include "bdlab/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace bdlab {

int worker_count() {
  if (const char* env = std::getenv("BDLAB_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // Fall through to the OpenMP default.
    }
  }
  return omp_get_max_threads();
}

}  // namespace bdlab
