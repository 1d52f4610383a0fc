#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace unitsynth {

inline int default_parallelism() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

/// Calls fn(i) for i in [0, n) on up to `parallelism` threads. Every index is
/// attempted; the exception thrown for the lowest index is rethrown after all
/// workers finish.
template <class Fn>
void parallel_for(size_t n, int parallelism, Fn&& fn) {
    const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(1, parallelism)));
    if (workers <= 1) {
        std::exception_ptr first;
        for (size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                if (!first) {
                    first = std::current_exception();
                }
            }
        }
        if (first) {
            std::rethrow_exception(first);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex mu;
    std::exception_ptr first;
    size_t first_index = n;
    auto work = [&] {
        for (size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < first_index) {
                    first_index = i;
                    first = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back(work);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (first) {
        std::rethrow_exception(first);
    }
}

} // namespace unitsynth
