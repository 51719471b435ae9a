#pragma once

namespace dsdf {

// Training allocates and frees multi-megabyte matrices every step. On glibc
// this keeps them on the heap instead of round-tripping through mmap/munmap.
// No-op elsewhere.
void tune_allocator();

}  // namespace dsdf
