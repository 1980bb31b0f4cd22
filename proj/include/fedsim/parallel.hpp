#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fedsim {

/// Run fn(i) for i in [0, n) on up to `workers` threads. Items are claimed
/// dynamically, so callers must write results into per-index slots and
/// reduce afterwards in a fixed order. The first exception thrown by any
/// item is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn)
{
    const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(n);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads - 1);
        for (std::size_t t = 1; t < threads; ++t) {
            pool.emplace_back(body);
        }
        body();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace fedsim
