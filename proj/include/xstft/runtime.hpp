#ifndef XSTFT_RUNTIME_HPP_
#define XSTFT_RUNTIME_HPP_

namespace xstft {

// Allocator settings for feature-map churn; call once at process start.
void tune_allocator();

}  // namespace xstft

#endif  // XSTFT_RUNTIME_HPP_
