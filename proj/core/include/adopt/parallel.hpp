#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace adopt {

/// Worker count: ADOPT_THREADS if set, otherwise hardware concurrency.
int default_thread_count();
void set_thread_count(int threads);
int thread_count();

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Splits [0, n) into fixed-size blocks and runs fn(begin, end, block) for each.
// Block boundaries never depend on the worker count, so callers that reduce
// per-block partials in block order get bit-identical results for any number
// of threads. Nested calls run on the calling worker. The first exception
// thrown by any block is rethrown after all workers finish.
template <class Fn>
void for_each_block(std::size_t n, std::size_t block_size, Fn&& fn) {
  if (n == 0) return;
  const std::size_t blocks = (n + block_size - 1) / block_size;
  const auto workers = detail::in_parallel_region
                           ? std::size_t{1}
                           : std::min<std::size_t>(blocks, static_cast<std::size_t>(std::max(1, thread_count())));
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t begin = b * block_size;
      fn(begin, std::min(n, begin + block_size), b);
    }
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  auto run_range = [&](std::size_t first_block, std::size_t stride) {
    detail::in_parallel_region = true;
    try {
      for (std::size_t b = first_block; b < blocks; b += stride) {
        const std::size_t begin = b * block_size;
        fn(begin, std::min(n, begin + block_size), b);
      }
    } catch (...) {
      errors[first_block] = std::current_exception();
    }
    detail::in_parallel_region = false;
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run_range, w, workers);
    run_range(0, workers);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::size_t block_count(std::size_t n, std::size_t block_size) {
  return (n + block_size - 1) / block_size;
}

}  // namespace adopt
