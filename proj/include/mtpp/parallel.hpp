#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mtpp {

/// Process-wide cap on worker threads (0 = hardware concurrency).
void set_max_threads(unsigned n);
unsigned max_threads();

/// Calls fn(i) for every i in [0, n). Work is split into contiguous blocks,
/// one per worker; callers must only write to slots owned by index i so
/// that results do not depend on the thread count. The first exception
/// thrown by any worker is rethrown after all workers joined.
namespace detail {
inline thread_local bool inside_worker = false;
}

/// Nested calls from inside a worker run serially.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = detail::inside_worker ? 1 : std::min<std::size_t>(max_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            detail::inside_worker = true;
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

/// Number of fixed-size chunks used for reductions over n items. The chunk
/// size is a constant so partial sums are combined in the same order for
/// every thread count.
inline constexpr std::size_t kReductionChunk = 64;
inline std::size_t reduction_chunks(std::size_t n) {
    return (n + kReductionChunk - 1) / kReductionChunk;
}

}  // namespace mtpp
