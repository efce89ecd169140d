#pragma once

// Seeded random streams and a small deterministic parallel loop.
//
// Every stochastic routine takes a master seed and derives one stream per
// work item from (master, indices...). Results therefore do not depend on
// how work items are scheduled across threads.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace sepkit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = splitmix64(master);
    for (auto p : path)
        h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    return Rng(derive_seed(master, path));
}

inline double uniform01(Rng& rng)
{
    return std::generate_canonical<double, 53>(rng);
}

/// Runs body(i) for i in [0, count). With threads <= 1 this is a plain loop.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body)
{
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    threads = std::min<unsigned>(threads, static_cast<unsigned>(count));
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < count; i += threads)
                    body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace sepkit
