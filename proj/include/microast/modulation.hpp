#pragma once

#include "microast/tensor.hpp"

#include <span>
#include <vector>

namespace microast {

/// Per-channel filter modulation for one convolution: `weight` scales each
/// output channel's filter, `bias` adds a diagonal pointwise term.
struct FilterSignal {
    std::vector<float> weight;
    std::vector<float> bias;

    bool operator==(const FilterSignal&) const = default;
};

/// Style modulation signals driving the decoder: the feature statistics used
/// by feature modulation plus one FilterSignal per modulated convolution.
struct ModSignals {
    std::vector<float> mu;
    std::vector<float> sigma;
    std::vector<FilterSignal> filters;

    std::size_t channels() const { return mu.size(); }

    /// Throws ShapeError on length mismatches and ValueError if any sigma is
    /// not strictly positive.
    void validate(std::size_t channels, std::size_t filter_count) const;

    bool operator==(const ModSignals&) const = default;
};

/// sigma(style) * (content - mu(content)) / sigma(content) + mu(style).
/// The style batch is either 1 or the content batch size.
TensorF32 adain(const TensorF32& content, const TensorF32& style);

/// Renormalizes every channel of `x` to the target mean and standard
/// deviation (shared across the batch).
TensorF32 feat_mod(const TensorF32& x, std::span<const float> mu, std::span<const float> sigma);

/// The convolution with its filter rewritten as weight[o] * F[o] plus
/// bias[o] on the centre tap of the diagonal (o, o); the layer bias is scaled
/// by weight[o]. Requires a channel-preserving, spatially-preserving layer.
ConvParams modulate_filter(const ConvParams& p, const FilterSignal& signal);

/// Filter modulation evaluated by building the modulated filter explicitly.
TensorF32 filter_mod_direct(const TensorF32& x, const ConvParams& p, const FilterSignal& signal);

/// Filter modulation evaluated in feature space:
/// weight * conv2d(x, p) + bias * x, broadcast over the spatial dimensions.
TensorF32 filter_mod_pseudo(const TensorF32& x, const ConvParams& p, const FilterSignal& signal);

/// conv2(relu(conv1(x))) + x, with each convolution filter-modulated.
TensorF32 modulated_resblock(const TensorF32& x, const ConvParams& conv1, const ConvParams& conv2,
                             const FilterSignal& signal1, const FilterSignal& signal2);

/// Unmodulated residual block, conv2(relu(conv1(x))) + x.
TensorF32 residual_block(const TensorF32& x, const ConvParams& conv1, const ConvParams& conv2);

/// Concatenates mu, sigma, then each filter signal's weight followed by its
/// bias, in layer order.
std::vector<float> flatten_signals(const ModSignals& signals);

/// Inverse of flatten_signals for a known structure.
ModSignals unflatten_signals(std::span<const float> flat, std::size_t channels, std::size_t filter_count);

}  // namespace microast
