#ifndef XSTFT_PARALLEL_HPP_
#define XSTFT_PARALLEL_HPP_

#include <cstdint>
#include <functional>

namespace xstft {

// Worker count for batch/channel-parallel layer loops. Work items own
// disjoint output ranges and keep their serial summation order, so results
// are bit-identical for any thread count; 1 (the default) runs inline.
void set_worker_threads(int n);
int worker_threads();

// Splits [0, n) into contiguous chunks, one per worker.
void parallel_for(int64_t n, const std::function<void(int64_t begin, int64_t end)>& fn);

}  // namespace xstft

#endif  // XSTFT_PARALLEL_HPP_
