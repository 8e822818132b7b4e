#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace samreg {

/// Worker cap, from SAMREG_THREADS (0 or unset = auto).
inline std::size_t thread_count() {
    static const std::size_t cached = [] {
        std::size_t n = 0;
        if (const char* env = std::getenv("SAMREG_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end != env && v > 0) n = static_cast<std::size_t>(v);
        }
        if (n == 0) {
            unsigned hw = std::thread::hardware_concurrency();
            n = hw ? hw : 1;
            if (n > 16) n = 16;
        }
        return n;
    }();
    return cached;
}

/// Runs fn(begin, end) over fixed index chunks. Chunk boundaries depend only
/// on n and the configured thread count, never on scheduling, so any
/// per-chunk results combined in chunk order are reproducible.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = thread_count();
    if (workers > n) workers = n;
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        if (lo >= n) break;
        std::size_t hi = lo + chunk < n ? lo + chunk : n;
        pool.emplace_back([&fn, &first_error, &error_mutex, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace samreg
