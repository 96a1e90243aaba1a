#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace snprobe {

struct ExecPolicy {
    unsigned threads = 1; // 0 = hardware concurrency
};

inline unsigned resolve_threads(ExecPolicy policy) {
    if (policy.threads != 0) return policy.threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, n) into contiguous blocks, one per worker, and runs
/// fn(worker, begin, end) on each. Worker 0 always gets the lowest block.
/// If several workers throw, the exception of the lowest worker wins, so the
/// reported error does not depend on scheduling.
template <class Fn>
void parallel_blocks(std::uint64_t n, ExecPolicy policy, Fn&& fn) {
    const unsigned workers =
        static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(policy), std::max<std::uint64_t>(n, 1)));
    if (workers <= 1) {
        fn(0u, std::uint64_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            const std::uint64_t begin = n * w / workers;
            const std::uint64_t end = n * (w + 1) / workers;
            pool.emplace_back([&, w, begin, end] {
                try {
                    fn(w, begin, end);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline unsigned worker_count(std::uint64_t n, ExecPolicy policy) {
    return static_cast<unsigned>(
        std::min<std::uint64_t>(resolve_threads(policy), std::max<std::uint64_t>(n, 1)));
}

} // namespace snprobe
