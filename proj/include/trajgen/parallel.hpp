#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace trajgen {

/// Worker cap: WNI_TRAJGEN_THREADS if set, otherwise 1 (serial). Results must
/// never depend on the cap; parallel loops give every index its own RNG
/// stream and write to disjoint slots.
inline std::size_t thread_cap() {
    if (const char* env = std::getenv("WNI_TRAJGEN_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<std::size_t>(n);
    }
    return 1;
}

template <typename Fn>
inline void parallel_for(std::size_t count, const Fn& fn) {
    const std::size_t workers = std::min(thread_cap(), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace trajgen
