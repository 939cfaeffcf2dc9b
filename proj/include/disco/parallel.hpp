#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace disco {

inline constexpr const char* kThreadsEnv = "DISCO_THREADS";

/* Worker count: $DISCO_THREADS if set and positive, else hardware concurrency. */
inline std::size_t thread_count()
{
    if (const char* env = std::getenv(kThreadsEnv)) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

namespace detail {
inline thread_local bool inParallel = false;
} // namespace detail

/*
 * Calls fn(i) for i in [0, n). Nested calls run serially on the calling worker. Work is handed out dynamically, so fn must only
 * write to slot i of its outputs; results are then schedule-independent.
 */
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1 || detail::inParallel) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failMutex;
    auto work = [&] {
        const bool outer = detail::inParallel;
        detail::inParallel = true;
        struct Reset {
            bool v;
            ~Reset() { detail::inParallel = v; }
        } reset{outer};
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failMutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace disco
