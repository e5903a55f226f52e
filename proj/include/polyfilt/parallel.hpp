#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace polyfilt {

/// Number of worker threads to use for `requested` (<= 0 means available parallelism).
inline int resolve_threads(int requested)
{
    if (requested > 0)
    {
        return requested;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Evaluates fn(0), ..., fn(count - 1) on up to `threads` threads and returns the results in
/// index order. The first exception by index is rethrown after all workers finish.
template <typename F>
auto parallel_map(std::size_t count, int threads, F&& fn) -> std::vector<std::invoke_result_t<F&, std::size_t>>
{
    using R = std::invoke_result_t<F&, std::size_t>;
    std::vector<std::optional<R>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(std::max<std::size_t>(count, 1))));

    auto run = [&](std::size_t i) {
        try
        {
            slots[i].emplace(fn(i));
        }
        catch (...)
        {
            errors[i] = std::current_exception();
        }
    };

    if (workers <= 1)
    {
        for (std::size_t i = 0; i < count; ++i)
        {
            run(i);
        }
    }
    else
    {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t)
        {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++)
                {
                    run(i);
                }
            });
        }
        for (auto& th : pool)
        {
            th.join();
        }
    }

    for (const auto& e : errors)
    {
        if (e)
        {
            std::rethrow_exception(e);
        }
    }
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots)
    {
        out.push_back(std::move(*s));
    }
    return out;
}

}  // namespace polyfilt
