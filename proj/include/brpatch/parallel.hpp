#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace brpatch {

/// Worker count: hardware concurrency unless the BRPATCH_THREADS environment
/// variable holds a positive integer, which then sets the count (max 256).
unsigned worker_count();

/// Runs fn(i) for i in [0, n) over contiguous static chunks. Callers write
/// results by index, so output never depends on the thread count. The first
/// exception (lowest chunk) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, bool allow_threads = true)
{
    const std::size_t workers = allow_threads ? std::min<std::size_t>(worker_count(), n) : 1;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace brpatch
