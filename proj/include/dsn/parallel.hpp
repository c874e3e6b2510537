#pragma once

// Bounded worker pool for index-addressed jobs. Each job writes its own slot,
// so results come back in index order whatever the completion order.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dsn {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception (lowest index) is rethrown after all workers have stopped.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
    workers = std::max(1u, workers);
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    pool.reserve(n);
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace dsn
