// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace seld {

/// Keep large activation buffers on the heap instead of fresh mmap pages.
/// Training reallocates the same sizes every step; without this most of
/// the system time goes to page faults.
inline void keep_large_allocations() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace seld
