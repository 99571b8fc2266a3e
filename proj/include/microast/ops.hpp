#pragma once

#include "microast/tensor.hpp"

namespace microast {

/// Variance stabilizer added before the square root in instance statistics.
inline constexpr float kStatsEpsilon = 1e-5f;

/// 2-D convolution with optional grouping. Each output element accumulates
/// its products in a fixed order (in-channel, kernel row, kernel column),
/// starting from zero, and adds the bias last; results are bit-identical
/// for any worker thread count.
///
/// Reflect padding that would exceed the input extent degrades to zero
/// padding for that layer.
TensorF32 conv2d(const TensorF32& x, const ConvParams& p);

/// Depthwise (groups == channels) convolution followed by a 1x1 pointwise
/// convolution. The intermediate map is produced band by band and never
/// materialized in full.
TensorF32 depthwise_separable_conv2d(const TensorF32& x, const ConvParams& depthwise, const ConvParams& pointwise);

/// Equivalent to depthwise_separable_conv2d(upsample_nearest(x, factor), ...)
/// without materializing the upsampled input.
TensorF32 upsample_depthwise_separable_conv2d(const TensorF32& x, int factor, const ConvParams& depthwise,
                                              const ConvParams& pointwise);

/// Spatial mean and sqrt(biased variance + kStatsEpsilon) per sample and channel.
ChannelStats instance_stats(const TensorF32& x);

TensorF32 relu(const TensorF32& x);
void relu_inplace(TensorF32& x);

/// Clamps every element into [lo, hi].
void clamp_inplace(TensorF32& x, float lo, float hi);

/// x += y (shapes must match).
void add_inplace(TensorF32& x, const TensorF32& y);

TensorF32 upsample_nearest(const TensorF32& x, int factor);

/// Mirror padding that does not repeat the edge pixel. Throws when the
/// amount is not smaller than the spatial extent.
TensorF32 reflect_pad(const TensorF32& x, int amount);
TensorF32 reflect_pad(const TensorF32& x, int top, int bottom, int left, int right);

/// Copies the spatial window [y0, y0 + h) x [x0, x0 + w).
TensorF32 crop(const TensorF32& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

/// Output extent of a convolution along one axis; throws on an empty result.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, int stride, int pad);

}  // namespace microast
