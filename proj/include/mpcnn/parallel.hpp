#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mpcnn {

inline unsigned effective_threads(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Runs fn(chunk_index, begin, end) over [begin, end) split into fixed-size
// chunks. Chunk boundaries depend only on grain, never on the thread count,
// so callers that reduce per-chunk partial results in chunk order get
// bit-identical sums for any number of workers.
inline void parallel_for_chunked(
    std::size_t begin, std::size_t end, std::size_t grain, unsigned threads,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (end <= begin) return;
    if (grain == 0) grain = 1;
    const std::size_t n = end - begin;
    const std::size_t num_chunks = (n + grain - 1) / grain;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(effective_threads(threads), num_chunks));

    if (workers <= 1) {
        for (std::size_t c = 0; c < num_chunks; ++c) {
            const std::size_t lo = begin + c * grain;
            const std::size_t hi = std::min(end, lo + grain);
            fn(c, lo, hi);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= num_chunks) return;
            const std::size_t lo = begin + c * grain;
            const std::size_t hi = std::min(end, lo + grain);
            try {
                fn(c, lo, hi);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline std::size_t chunk_count(std::size_t n, std::size_t grain) {
    if (grain == 0) grain = 1;
    return (n + grain - 1) / grain;
}

}  // namespace mpcnn
