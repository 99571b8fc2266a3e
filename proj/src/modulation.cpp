#include "microast/modulation.hpp"

#include "microast/error.hpp"
#include "microast/ops.hpp"
#include "microast/parallel.hpp"

#include <cmath>

namespace microast {

namespace {

// Applies x * scale + shift per plane, where scale and shift map the
// content statistics onto the targets. `target_stride` is 0 when the targets
// are shared by every sample and C otherwise.
TensorF32 renormalize(const TensorF32& x, const ChannelStats& content, std::span<const float> mu,
                      std::span<const float> sigma, std::size_t target_stride) {
    TensorF32 out(x.shape());
    const std::size_t c_count = x.c();
    const std::size_t size = x.shape().plane();
    parallel_for(static_cast<std::int64_t>(x.n() * c_count), [&](std::int64_t i) {
        const std::size_t plane = static_cast<std::size_t>(i);
        const std::size_t n = plane / c_count;
        const std::size_t c = plane % c_count;
        const std::size_t t = n * target_stride + c;
        const float scale = sigma[t] / content.std[plane];
        const float shift = mu[t] - content.mean[plane] * scale;
        const float* src = x.data().data() + plane * size;
        float* dst = out.data().data() + plane * size;
        for (std::size_t k = 0; k < size; ++k) dst[k] = src[k] * scale + shift;
    });
    return out;
}

void check_sigma(std::span<const float> sigma, const char* what) {
    for (float s : sigma) {
        if (!(s > 0.0f) || !std::isfinite(s)) {
            throw ValueError(std::string(what) + ": sigma must be finite and strictly positive");
        }
    }
}

void check_filter_layer(const TensorF32& x, const ConvParams& p, const FilterSignal& signal, const char* what) {
    const std::size_t c = x.c();
    if (p.groups != 1 || p.in_channels() != c || p.out_channels() != c) {
        throw ShapeError(std::string(what) + ": layer must map " + std::to_string(c) + " channels to themselves");
    }
    if (signal.weight.size() != c || signal.bias.size() != c) {
        throw ShapeError(std::string(what) + ": signal lengths (" + std::to_string(signal.weight.size()) + ", " +
                         std::to_string(signal.bias.size()) + ") != channels " + std::to_string(c));
    }
}

}  // namespace

void ModSignals::validate(std::size_t channel_count, std::size_t filter_count) const {
    if (mu.size() != channel_count || sigma.size() != channel_count) {
        throw ShapeError("modulation signals: mu/sigma length must be " + std::to_string(channel_count));
    }
    if (filters.size() != filter_count) {
        throw ShapeError("modulation signals: expected " + std::to_string(filter_count) + " filter signals, got " +
                         std::to_string(filters.size()));
    }
    for (const auto& f : filters) {
        if (f.weight.size() != channel_count || f.bias.size() != channel_count) {
            throw ShapeError("modulation signals: filter signal length must be " + std::to_string(channel_count));
        }
    }
    check_sigma(sigma, "modulation signals");
}

TensorF32 adain(const TensorF32& content, const TensorF32& style) {
    if (content.c() != style.c()) {
        throw ShapeError("adain: content has " + std::to_string(content.c()) + " channels, style has " +
                         std::to_string(style.c()));
    }
    if (style.n() != 1 && style.n() != content.n()) {
        throw ShapeError("adain: style batch must be 1 or match the content batch");
    }
    const ChannelStats target = instance_stats(style);
    if (style.n() == 1) return feat_mod(content, target.mean, target.std);
    return renormalize(content, instance_stats(content), target.mean, target.std, content.c());
}

TensorF32 feat_mod(const TensorF32& x, std::span<const float> mu, std::span<const float> sigma) {
    if (mu.size() != x.c() || sigma.size() != x.c()) {
        throw ShapeError("feat_mod: signal lengths (" + std::to_string(mu.size()) + ", " +
                         std::to_string(sigma.size()) + ") != channels " + std::to_string(x.c()));
    }
    check_sigma(sigma, "feat_mod");
    return renormalize(x, instance_stats(x), mu, sigma, 0);
}

ConvParams modulate_filter(const ConvParams& p, const FilterSignal& signal) {
    const std::size_t c = p.out_channels();
    if (p.groups != 1 || p.in_channels() != c) throw ShapeError("modulate_filter: layer must preserve channels");
    if (signal.weight.size() != c || signal.bias.size() != c) {
        throw ShapeError("modulate_filter: signal lengths must equal " + std::to_string(c));
    }
    ConvParams out = p;
    const std::size_t cy = p.kernel_h() / 2;
    const std::size_t cx = p.kernel_w() / 2;
    for (std::size_t o = 0; o < c; ++o) {
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t ky = 0; ky < p.kernel_h(); ++ky) {
                for (std::size_t kx = 0; kx < p.kernel_w(); ++kx) {
                    out.weight.at(o, i, ky, kx) = signal.weight[o] * p.weight.at(o, i, ky, kx);
                }
            }
        }
        out.weight.at(o, o, cy, cx) += signal.bias[o];
        out.bias[o] = signal.weight[o] * p.bias[o];
    }
    return out;
}

TensorF32 filter_mod_direct(const TensorF32& x, const ConvParams& p, const FilterSignal& signal) {
    check_filter_layer(x, p, signal, "filter_mod_direct");
    TensorF32 out = conv2d(x, modulate_filter(p, signal));
    if (out.shape() != x.shape()) throw ShapeError("filter_mod_direct: layer must preserve spatial extents");
    return out;
}

TensorF32 filter_mod_pseudo(const TensorF32& x, const ConvParams& p, const FilterSignal& signal) {
    check_filter_layer(x, p, signal, "filter_mod_pseudo");
    TensorF32 out = conv2d(x, p);
    if (out.shape() != x.shape()) throw ShapeError("filter_mod_pseudo: layer must preserve spatial extents");
    const std::size_t c_count = x.c();
    const std::size_t size = x.shape().plane();
    parallel_for(static_cast<std::int64_t>(x.n() * c_count), [&](std::int64_t i) {
        const std::size_t plane = static_cast<std::size_t>(i);
        const float w = signal.weight[plane % c_count];
        const float b = signal.bias[plane % c_count];
        const float* src = x.data().data() + plane * size;
        float* dst = out.data().data() + plane * size;
        for (std::size_t k = 0; k < size; ++k) dst[k] = w * dst[k] + b * src[k];
    });
    return out;
}

TensorF32 modulated_resblock(const TensorF32& x, const ConvParams& conv1, const ConvParams& conv2,
                             const FilterSignal& signal1, const FilterSignal& signal2) {
    TensorF32 h = filter_mod_pseudo(x, conv1, signal1);
    relu_inplace(h);
    h = filter_mod_pseudo(h, conv2, signal2);
    add_inplace(h, x);
    return h;
}

TensorF32 residual_block(const TensorF32& x, const ConvParams& conv1, const ConvParams& conv2) {
    TensorF32 h = conv2d(x, conv1);
    relu_inplace(h);
    h = conv2d(h, conv2);
    add_inplace(h, x);
    return h;
}

std::vector<float> flatten_signals(const ModSignals& signals) {
    std::vector<float> flat;
    flat.reserve(signals.mu.size() + signals.sigma.size() + 2 * signals.mu.size() * signals.filters.size());
    flat.insert(flat.end(), signals.mu.begin(), signals.mu.end());
    flat.insert(flat.end(), signals.sigma.begin(), signals.sigma.end());
    for (const auto& f : signals.filters) {
        flat.insert(flat.end(), f.weight.begin(), f.weight.end());
        flat.insert(flat.end(), f.bias.begin(), f.bias.end());
    }
    return flat;
}

ModSignals unflatten_signals(std::span<const float> flat, std::size_t channels, std::size_t filter_count) {
    if (flat.size() != 2 * channels + 2 * channels * filter_count) {
        throw ShapeError("unflatten_signals: length " + std::to_string(flat.size()) +
                         " does not match the requested structure");
    }
    auto take = [&flat, channels](std::size_t& pos) {
        std::vector<float> v(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                             flat.begin() + static_cast<std::ptrdiff_t>(pos + channels));
        pos += channels;
        return v;
    };
    std::size_t pos = 0;
    ModSignals s;
    s.mu = take(pos);
    s.sigma = take(pos);
    for (std::size_t i = 0; i < filter_count; ++i) {
        FilterSignal f;
        f.weight = take(pos);
        f.bias = take(pos);
        s.filters.push_back(std::move(f));
    }
    return s;
}

}  // namespace microast
