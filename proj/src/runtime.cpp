#include "xstft/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace xstft {

void tune_allocator() {
#if defined(__GLIBC__)
  // Feature maps are reallocated every layer call; without this, large
  // buffers cycle through mmap/munmap and every pass pays page faults.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace xstft
