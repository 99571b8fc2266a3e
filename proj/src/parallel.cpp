#include "microast/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>

namespace microast {

namespace {
std::atomic<int> g_threads{0};
}

int thread_count() {
    const int t = g_threads.load(std::memory_order_relaxed);
    return t > 0 ? t : std::max(1, omp_get_num_procs());
}

void set_thread_count(int threads) {
    g_threads.store(std::max(0, threads), std::memory_order_relaxed);
}

namespace detail {

void parallel_for_impl(std::int64_t count, void (*body)(void*, std::int64_t), void* ctx) {
    if (count <= 0) return;
    const int threads = static_cast<int>(std::min<std::int64_t>(thread_count(), count));
    if (threads == 1) {
        for (std::int64_t i = 0; i < count; ++i) body(ctx, i);
        return;
    }
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < count; ++i) {
        body(ctx, i);
    }
}

}  // namespace detail
}  // namespace microast
