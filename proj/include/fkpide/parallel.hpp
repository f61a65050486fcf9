#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fkpide {

namespace detail {
inline std::atomic<int> &thread_setting() {
    static std::atomic<int> n{0};
    return n;
}
}  // namespace detail

/// Worker count: set_thread_count() if called, else FKPIDE_THREADS, else the
/// hardware concurrency.
inline int thread_count() {
    if (int n = detail::thread_setting().load(); n > 0) return n;
    if (const char *env = std::getenv("FKPIDE_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline void set_thread_count(int n) { detail::thread_setting().store(std::max(0, n)); }

/// Calls body(i) for i in [0, n) on contiguous chunks. Each index is handled
/// by exactly one call, so results written per index do not depend on the
/// thread count.
template <class Body>
void parallel_for(std::size_t n, Body &&body, int threads = 0) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(threads > 0 ? threads : thread_count()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace fkpide
