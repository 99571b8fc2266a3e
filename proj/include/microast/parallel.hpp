#pragma once

#include <cstddef>
#include <cstdint>

namespace microast {

/// Worker threads used by data-parallel kernels. Defaults to the number of
/// logical cores. Results never depend on this value: work is split over
/// disjoint output elements only.
int thread_count();
void set_thread_count(int threads);

/// Restores the previous thread count on destruction.
class ScopedThreadCount {
public:
    explicit ScopedThreadCount(int threads) : previous_(thread_count()) { set_thread_count(threads); }
    ~ScopedThreadCount() { set_thread_count(previous_); }
    ScopedThreadCount(const ScopedThreadCount&) = delete;
    ScopedThreadCount& operator=(const ScopedThreadCount&) = delete;

private:
    int previous_;
};

namespace detail {
void parallel_for_impl(std::int64_t count, void (*body)(void*, std::int64_t), void* ctx);
}

/// Runs `fn(i)` for i in [0, count) on the worker pool (static schedule).
template <class Fn>
void parallel_for(std::int64_t count, Fn&& fn) {
    detail::parallel_for_impl(
        count, [](void* ctx, std::int64_t i) { (*static_cast<Fn*>(ctx))(i); }, &fn);
}

}  // namespace microast
