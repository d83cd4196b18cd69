#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cobez::par {

// Thread count resolution order: set_thread_count() > COARSE_BEZOUT_THREADS > hardware.
// Results of every helper below are independent of the effective thread count:
// work is split into a fixed block structure and blocks are combined in block order.

inline int& thread_count_override() {
    static int v = 0;
    return v;
}

inline void set_thread_count(int n) { thread_count_override() = n; }

inline int thread_count() {
    if (thread_count_override() > 0) return thread_count_override();
    if (const char* env = std::getenv("COARSE_BEZOUT_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(block_index) for block_index in [0, n_blocks). fn must only touch
// state owned by its block.
template <class Fn>
void for_blocks(std::int64_t n_blocks, const Fn& fn) {
    if (n_blocks <= 0) return;
    int nt = thread_count();
    if (nt <= 1 || n_blocks == 1) {
        for (std::int64_t b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::int64_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_blocks) break;
            fn(b);
        }
    };
    std::vector<std::thread> pool;
    int spawn = static_cast<int>(std::min<std::int64_t>(nt, n_blocks)) - 1;
    pool.reserve(spawn);
    for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

// Splits [0, n) into blocks of size block and calls fn(begin, end) per block.
template <class Fn>
void for_ranges(std::int64_t n, std::int64_t block, const Fn& fn) {
    if (n <= 0) return;
    std::int64_t n_blocks = (n + block - 1) / block;
    for_blocks(n_blocks, [&](std::int64_t b) {
        std::int64_t lo = b * block;
        std::int64_t hi = std::min(n, lo + block);
        fn(lo, hi);
    });
}

// Block-structured reduction: partial results are produced per block and
// combined sequentially in block order, so the result is bit-deterministic.
template <class T, class MapFn, class ReduceFn>
T reduce_ranges(std::int64_t n, std::int64_t block, T init, const MapFn& map_range,
                const ReduceFn& reduce) {
    if (n <= 0) return init;
    std::int64_t n_blocks = (n + block - 1) / block;
    std::vector<T> partial(static_cast<std::size_t>(n_blocks), init);
    for_blocks(n_blocks, [&](std::int64_t b) {
        std::int64_t lo = b * block;
        std::int64_t hi = std::min(n, lo + block);
        partial[static_cast<std::size_t>(b)] = map_range(lo, hi);
    });
    T acc = init;
    for (auto& p : partial) acc = reduce(acc, p);
    return acc;
}

}  // namespace cobez::par
