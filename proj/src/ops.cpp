#include "microast/error.hpp"
#include "microast/ops.hpp"
#include "microast/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace microast {

ChannelStats instance_stats(const TensorF32& x) {
    const std::size_t planes = x.n() * x.c();
    const std::size_t size = x.shape().plane();
    if (size == 0) throw ShapeError("instance_stats: empty spatial extent");
    ChannelStats stats;
    stats.mean.resize(planes);
    stats.std.resize(planes);
    parallel_for(static_cast<std::int64_t>(planes), [&](std::int64_t i) {
        const float* p = x.data().data() + static_cast<std::size_t>(i) * size;
        double sum = 0.0;
        for (std::size_t k = 0; k < size; ++k) sum += p[k];
        const double mean = sum / static_cast<double>(size);
        double sq = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            const double d = p[k] - mean;
            sq += d * d;
        }
        const double var = sq / static_cast<double>(size);
        stats.mean[static_cast<std::size_t>(i)] = static_cast<float>(mean);
        stats.std[static_cast<std::size_t>(i)] = static_cast<float>(std::sqrt(var + double{kStatsEpsilon}));
    });
    return stats;
}

void relu_inplace(TensorF32& x) {
    for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
}

TensorF32 relu(const TensorF32& x) {
    TensorF32 out = x;
    relu_inplace(out);
    return out;
}

void clamp_inplace(TensorF32& x, float lo, float hi) {
    for (float& v : x.data()) v = std::clamp(v, lo, hi);
}

void add_inplace(TensorF32& x, const TensorF32& y) {
    if (x.shape() != y.shape()) {
        throw ShapeError("add: shape " + to_string(x.shape()) + " != " + to_string(y.shape()));
    }
    auto a = x.data();
    auto b = y.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

TensorF32 upsample_nearest(const TensorF32& x, int factor) {
    if (factor < 1) throw ValueError("upsample factor must be positive");
    const auto f = static_cast<std::size_t>(factor);
    TensorF32 out(Shape{x.n(), x.c(), x.h() * f, x.w() * f});
    parallel_for(static_cast<std::int64_t>(x.n() * x.c()), [&](std::int64_t nc) {
        const float* src = x.data().data() + static_cast<std::size_t>(nc) * x.shape().plane();
        float* dst = out.data().data() + static_cast<std::size_t>(nc) * out.shape().plane();
        for (std::size_t y = 0; y < out.h(); ++y) {
            const float* srow = src + (y / f) * x.w();
            float* drow = dst + y * out.w();
            for (std::size_t xo = 0; xo < out.w(); ++xo) drow[xo] = srow[xo / f];
        }
    });
    return out;
}

TensorF32 reflect_pad(const TensorF32& x, int amount) {
    return reflect_pad(x, amount, amount, amount, amount);
}

TensorF32 reflect_pad(const TensorF32& x, int top, int bottom, int left, int right) {
    if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ValueError("reflect_pad: negative amount");
    const auto h = static_cast<std::ptrdiff_t>(x.h());
    const auto w = static_cast<std::ptrdiff_t>(x.w());
    if (std::max(top, bottom) >= h || std::max(left, right) >= w) {
        throw ShapeError("reflect_pad: amount must be smaller than the spatial extent " + to_string(x.shape()));
    }
    auto reflect = [](std::ptrdiff_t v, std::ptrdiff_t extent) {
        if (v < 0) return -v;
        if (v >= extent) return 2 * (extent - 1) - v;
        return v;
    };
    const std::size_t oh = x.h() + static_cast<std::size_t>(top + bottom);
    const std::size_t ow = x.w() + static_cast<std::size_t>(left + right);
    TensorF32 out(Shape{x.n(), x.c(), oh, ow});
    parallel_for(static_cast<std::int64_t>(x.n() * x.c()), [&](std::int64_t nc) {
        const float* src = x.data().data() + static_cast<std::size_t>(nc) * x.shape().plane();
        float* dst = out.data().data() + static_cast<std::size_t>(nc) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const float* srow = src + reflect(static_cast<std::ptrdiff_t>(y) - top, h) * w;
            float* drow = dst + y * ow;
            for (std::size_t xo = 0; xo < ow; ++xo) {
                drow[xo] = srow[reflect(static_cast<std::ptrdiff_t>(xo) - left, w)];
            }
        }
    });
    return out;
}

TensorF32 crop(const TensorF32& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    if (y0 + h > x.h() || x0 + w > x.w()) {
        throw ShapeError("crop window exceeds tensor extent " + to_string(x.shape()));
    }
    TensorF32 out(Shape{x.n(), x.c(), h, w});
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                const float* srow = x.plane(n, c) + (y0 + y) * x.w() + x0;
                std::copy(srow, srow + w, out.plane(n, c) + y * w);
            }
        }
    }
    return out;
}

}  // namespace microast
