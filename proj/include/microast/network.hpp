#pragma once

#include "microast/modulation.hpp"
#include "microast/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace microast {

/// Channel widths of the micro encoders and decoder.
///
/// Encoders: stem conv (3 -> stem) -> DS conv /2 (stem -> mid) ->
/// DS conv /2 (mid -> bottleneck) -> 2 residual blocks. The decoder mirrors
/// this with nearest x2 upsampling ahead of each DS conv. Both subnets of the
/// modulator use a hidden width equal to `bottleneck`.
struct ChannelPlan {
    std::size_t stem = 16;
    std::size_t mid = 32;
    std::size_t bottleneck = 64;
    std::size_t kernel = 3;
    std::size_t modulated_convs = 4;

    void validate() const;
    bool operator==(const ChannelPlan&) const = default;
};

/// Decoder residual blocks carrying filter modulation.
inline constexpr std::size_t kDecoderResBlocks = 2;

struct TensorSlot {
    std::string name;
    Shape shape;
};

/// Every named tensor of the network in canonical order. Biases are stored
/// as (C, 1, 1, 1), dense layers of the modulator as (out, in, 1, 1).
std::vector<TensorSlot> architecture(const ChannelPlan& plan);

/// Immutable named tensor map holding exactly the slots of `architecture(plan)`.
class NetworkWeights {
public:
    using Entry = std::pair<std::string, TensorF32>;

    /// Throws SchemaError if a slot is missing, duplicated, unknown, or has
    /// the wrong shape. Entries are reordered into canonical order.
    NetworkWeights(ChannelPlan plan, std::vector<Entry> tensors);

    const ChannelPlan& plan() const { return plan_; }
    const std::vector<Entry>& tensors() const { return tensors_; }
    const TensorF32& get(std::string_view name) const;

private:
    ChannelPlan plan_;
    std::vector<Entry> tensors_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Builds layer parameters for `prefix` ("<prefix>.weight", "<prefix>.bias")
/// with "same" reflect padding.
ConvParams load_conv(const NetworkWeights& weights, const std::string& prefix, int stride = 1, int groups = 1);

/// Spatial extent of an encoder output for an input extent.
std::size_t feature_extent(std::size_t input);

/// f_c: 1x3xHxW image in [0, 1] -> 1 x bottleneck x ceil(H/4) x ceil(W/4).
TensorF32 encode_content(const TensorF32& image, const NetworkWeights& weights);

/// Same architecture as encode_content with the style encoder's weights.
TensorF32 encode_style(const TensorF32& image, const NetworkWeights& weights);

/// Modulator: instance statistics of the style feature plus, for each
/// modulated conv, a (weight, bias) pair produced by the weight and bias
/// subnets (global average pool -> dense -> relu -> per-conv dense head).
ModSignals derive_signals(const TensorF32& style_feature, const NetworkWeights& weights);

/// Dual-modulated decoder: feature modulation ahead of each residual block,
/// filter modulation on the block convolutions, then two upsampling stages
/// and an output conv clamped to [0, 1].
TensorF32 decode(const TensorF32& content_feature, const ModSignals& signals, const NetworkWeights& weights);

/// Full pipeline. The output has exactly the content extents; content with
/// extents not divisible by 4 is reflect-padded internally and cropped back.
TensorF32 stylize(const TensorF32& content, const TensorF32& style, const NetworkWeights& weights);

/// Total scalar parameter count.
std::size_t count_params(const NetworkWeights& weights);
std::size_t count_params(const ChannelPlan& plan);

/// Analytic FLOPs (2 x multiply-adds of every convolution and dense layer)
/// of one stylize pass. The single-size form assumes a style image of the
/// same size as the content.
double estimate_flops(std::size_t height, std::size_t width, const ChannelPlan& plan = {});
double estimate_flops(std::size_t content_h, std::size_t content_w, std::size_t style_h, std::size_t style_w,
                      const ChannelPlan& plan = {});

/// Deterministic uniform fan-in init: every weight and bias of a layer is
/// drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) using a 64-bit Mersenne
/// Twister seeded with `seed`, in canonical slot order.
///
/// With `neutral` set, the style encoder's weights are zeroed (its output is
/// then a per-channel constant independent of the style image) and the
/// modulator is zeroed except the weight-head biases, which are 1. Every
/// filter signal is then exactly (1, 0).
NetworkWeights init_weights(std::uint64_t seed, bool neutral = false, const ChannelPlan& plan = {});

}  // namespace microast
