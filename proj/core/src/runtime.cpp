#include "latreg/parallel.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace latreg {

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace latreg
