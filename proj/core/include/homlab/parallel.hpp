#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace homlab {

/// Fixed chunk size for path-parallel work. Chunk boundaries never depend on
/// the worker count, so chunk-ordered reductions are reproducible.
inline constexpr std::size_t kChunk = 2048;

/// Runs body(chunk_index, begin, end) over [0, n) split into kChunk-sized
/// chunks, on `threads` workers (0 means hardware concurrency). The first
/// exception thrown by any chunk is rethrown on the caller.
template <typename Body>
void parallel_chunks(std::size_t n, int threads, Body&& body) {
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    if (chunks == 0) return;
    unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(chunks)));

    auto run_chunk = [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        body(c, begin, std::min(n, begin + kChunk));
    };
    if (workers == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
        return;
    }

    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < chunks; c += workers) {
                try {
                    run_chunk(c);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

}  // namespace homlab
