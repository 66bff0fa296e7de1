#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace sdr::core {

// Worker bound: SDR_THREADS caps parallelism, hardware concurrency is the
// ceiling, default is sequential. Parallel loops write disjoint slots only,
// so results never depend on the worker count.
inline int worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("SDR_THREADS")) {
        const int requested = std::atoi(env);
        if (requested >= 1) return requested < hw ? requested : hw;
    }
    return 1;
}

// fn(i) for i in [0, n), chunked over workers; fn must only touch state
// owned by index i.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    const int workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int used = static_cast<int>(std::min<std::int64_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(used));
    for (int w = 0; w < used; ++w) {
        pool.emplace_back([&, w] {
            for (std::int64_t i = w; i < n; i += used) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace sdr::core
