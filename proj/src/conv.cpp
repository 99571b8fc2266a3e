#include "microast/error.hpp"
#include "microast/ops.hpp"
#include "microast/parallel.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace microast {

namespace {

// Output channels computed together by the dense kernel, and output columns
// per vector tile.
constexpr std::size_t kOcBlock = 8;
constexpr std::size_t kTile = 16;

using vec16 = float __attribute__((vector_size(kTile * sizeof(float))));

inline vec16 load16(const float* p) {
    vec16 v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline void store16(float* p, vec16 v) {
    std::memcpy(p, &v, sizeof(v));
}

void validate_kernel(const ConvParams& p, const char* what) {
    if (p.weight.empty()) throw ShapeError(std::string(what) + ": empty weight");
    if (p.kernel_h() % 2 == 0 || p.kernel_w() % 2 == 0) {
        throw ShapeError(std::string(what) + ": kernel extents must be odd");
    }
    if (p.stride < 1) throw ShapeError(std::string(what) + ": stride must be positive");
    if (p.pad < 0) throw ShapeError(std::string(what) + ": negative padding");
    if (p.groups < 1 || p.out_channels() % static_cast<std::size_t>(p.groups) != 0) {
        throw ShapeError(std::string(what) + ": output channels not divisible by groups");
    }
    if (p.bias.size() != p.out_channels()) {
        throw ShapeError(std::string(what) + ": bias length " + std::to_string(p.bias.size()) +
                         " != out channels " + std::to_string(p.out_channels()));
    }
}

void validate_input(const TensorF32& x, const ConvParams& p, const char* what) {
    validate_kernel(p, what);
    if (x.c() != p.in_channels()) {
        throw ShapeError(std::string(what) + ": input has " + std::to_string(x.c()) + " channels, layer expects " +
                         std::to_string(p.in_channels()));
    }
}

PadMode effective_mode(PadMode mode, int pad, std::size_t h, std::size_t w) {
    if (mode == PadMode::Reflect && (static_cast<std::size_t>(pad) >= h || static_cast<std::size_t>(pad) >= w)) {
        return PadMode::Zero;
    }
    return mode;
}

// Maps a padded coordinate to a source coordinate, or -1 for zero padding.
// `factor` > 1 addresses a nearest-upsampled view of the source.
std::vector<std::ptrdiff_t> index_map(std::size_t extent, int factor, int pad, PadMode mode) {
    const auto virt = static_cast<std::ptrdiff_t>(extent) * factor;
    std::vector<std::ptrdiff_t> map(static_cast<std::size_t>(virt + 2 * pad));
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(map.size()); ++i) {
        std::ptrdiff_t v = i - pad;
        if (v < 0 || v >= virt) {
            if (mode == PadMode::Zero) {
                map[static_cast<std::size_t>(i)] = -1;
                continue;
            }
            v = v < 0 ? -v : 2 * (virt - 1) - v;
        }
        map[static_cast<std::size_t>(i)] = v / factor;
    }
    return map;
}

TensorF32 pad_input(const TensorF32& x, int pad, PadMode mode) {
    const std::size_t hp = x.h() + 2 * static_cast<std::size_t>(pad);
    const std::size_t wp = x.w() + 2 * static_cast<std::size_t>(pad);
    TensorF32 out(Shape{x.n(), x.c(), hp, wp});
    const auto rows = index_map(x.h(), 1, pad, mode);
    const auto cols = index_map(x.w(), 1, pad, mode);
    parallel_for(static_cast<std::int64_t>(x.n() * x.c()), [&](std::int64_t nc) {
        const float* src = x.data().data() + static_cast<std::size_t>(nc) * x.shape().plane();
        float* dst = out.data().data() + static_cast<std::size_t>(nc) * hp * wp;
        for (std::size_t y = 0; y < hp; ++y) {
            float* drow = dst + y * wp;
            if (rows[y] < 0) {
                std::fill(drow, drow + wp, 0.0f);
                continue;
            }
            const float* srow = src + static_cast<std::size_t>(rows[y]) * x.w();
            for (std::size_t i = 0; i < static_cast<std::size_t>(pad); ++i) {
                drow[i] = cols[i] < 0 ? 0.0f : srow[cols[i]];
                const std::size_t j = wp - 1 - i;
                drow[j] = cols[j] < 0 ? 0.0f : srow[cols[j]];
            }
            std::copy(srow, srow + x.w(), drow + pad);
        }
    });
    return out;
}

// Dense (groups == 1) convolution on an already padded input.
class DenseConv {
public:
    DenseConv(const ConvParams& p, std::size_t in_c)
        : p_(p), in_c_(in_c), out_c_(p.out_channels()), kh_(p.kernel_h()), kw_(p.kernel_w()) {
        // Packed as [block][ic][kh][kw][lane], zero-filled past out_c_.
        blocks_ = (out_c_ + kOcBlock - 1) / kOcBlock;
        packed_.assign(blocks_ * in_c_ * kh_ * kw_ * kOcBlock, 0.0f);
        for (std::size_t o = 0; o < out_c_; ++o) {
            const std::size_t b = o / kOcBlock;
            const std::size_t lane = o % kOcBlock;
            for (std::size_t ic = 0; ic < in_c_; ++ic) {
                for (std::size_t ky = 0; ky < kh_; ++ky) {
                    for (std::size_t kx = 0; kx < kw_; ++kx) {
                        packed_[(((b * in_c_ + ic) * kh_ + ky) * kw_ + kx) * kOcBlock + lane] =
                            p.weight.at(o, ic, ky, kx);
                    }
                }
            }
        }
    }

    std::size_t blocks() const { return blocks_; }

    void row(const TensorF32& padded, std::size_t n, std::size_t block, std::size_t y, TensorF32& out) const {
        const std::size_t wo = out.w();
        const std::size_t stride = static_cast<std::size_t>(p_.stride);
        std::size_t x0 = 0;
        if (stride == 1) {
            if (kh_ == 3 && kw_ == 3) {
                for (; x0 + kTile <= wo; x0 += kTile) tile<3, 3>(padded, n, block, y, x0, out);
            } else if (kh_ == 1 && kw_ == 1) {
                for (; x0 + kTile <= wo; x0 += kTile) tile<1, 1>(padded, n, block, y, x0, out);
            }
        }
        if (x0 < wo) tail(padded, n, block, y, x0, out);
    }

private:
    template <std::size_t KH, std::size_t KW>
    void tile(const TensorF32& padded, std::size_t n, std::size_t block, std::size_t y, std::size_t x0,
              TensorF32& out) const {
        const std::size_t wp = padded.w();
        vec16 acc[kOcBlock] = {};
        const float* wptr = packed_.data() + block * in_c_ * KH * KW * kOcBlock;
        for (std::size_t ic = 0; ic < in_c_; ++ic) {
            const float* base = padded.plane(n, ic) + y * wp + x0;
            for (std::size_t ky = 0; ky < KH; ++ky) {
                const float* row = base + ky * wp;
                for (std::size_t kx = 0; kx < KW; ++kx) {
                    const vec16 v = load16(row + kx);
                    for (std::size_t o = 0; o < kOcBlock; ++o) acc[o] += wptr[o] * v;
                    wptr += kOcBlock;
                }
            }
        }
        const std::size_t o_end = std::min(kOcBlock, out_c_ - block * kOcBlock);
        for (std::size_t o = 0; o < o_end; ++o) {
            const std::size_t oc = block * kOcBlock + o;
            store16(&out.at(n, oc, y, x0), acc[o] + p_.bias[oc]);
        }
    }

    void tail(const TensorF32& padded, std::size_t n, std::size_t block, std::size_t y, std::size_t x_begin,
              TensorF32& out) const {
        const std::size_t wp = padded.w();
        const std::size_t stride = static_cast<std::size_t>(p_.stride);
        const std::size_t o_end = std::min(kOcBlock, out_c_ - block * kOcBlock);
        const float* wblock = packed_.data() + block * in_c_ * kh_ * kw_ * kOcBlock;
        for (std::size_t o = 0; o < o_end; ++o) {
            const std::size_t oc = block * kOcBlock + o;
            for (std::size_t x = x_begin; x < out.w(); ++x) {
                float acc = 0.0f;
                const float* wptr = wblock + o;
                for (std::size_t ic = 0; ic < in_c_; ++ic) {
                    const float* base = padded.plane(n, ic) + (y * stride) * wp + x * stride;
                    for (std::size_t ky = 0; ky < kh_; ++ky) {
                        for (std::size_t kx = 0; kx < kw_; ++kx) {
                            acc += *wptr * base[ky * wp + kx];
                            wptr += kOcBlock;
                        }
                    }
                }
                out.at(n, oc, y, x) = acc + p_.bias[oc];
            }
        }
    }

    const ConvParams& p_;
    std::size_t in_c_;
    std::size_t out_c_;
    std::size_t kh_;
    std::size_t kw_;
    std::size_t blocks_ = 0;
    std::vector<float> packed_;
};

// Generic grouped convolution; used for group counts other than 1 and the
// channel count.
TensorF32 grouped_conv(const TensorF32& padded, const ConvParams& p, Shape out_shape) {
    TensorF32 out(out_shape);
    const std::size_t groups = static_cast<std::size_t>(p.groups);
    const std::size_t in_per_group = p.weight.c();
    const std::size_t out_per_group = p.out_channels() / groups;
    const std::size_t stride = static_cast<std::size_t>(p.stride);
    parallel_for(static_cast<std::int64_t>(out_shape.n * out_shape.c * out_shape.h), [&](std::int64_t task) {
        const std::size_t y = static_cast<std::size_t>(task) % out_shape.h;
        const std::size_t oc = (static_cast<std::size_t>(task) / out_shape.h) % out_shape.c;
        const std::size_t n = static_cast<std::size_t>(task) / (out_shape.h * out_shape.c);
        const std::size_t g = oc / out_per_group;
        for (std::size_t x = 0; x < out_shape.w; ++x) {
            float acc = 0.0f;
            for (std::size_t i = 0; i < in_per_group; ++i) {
                const std::size_t ic = g * in_per_group + i;
                for (std::size_t ky = 0; ky < p.kernel_h(); ++ky) {
                    for (std::size_t kx = 0; kx < p.kernel_w(); ++kx) {
                        acc += p.weight.at(oc, i, ky, kx) * padded.at(n, ic, y * stride + ky, x * stride + kx);
                    }
                }
            }
            out.at(n, oc, y, x) = acc + p.bias[oc];
        }
    });
    return out;
}

// Row-band evaluation of a depthwise convolution over a (possibly
// nearest-upsampled) source. One output row of every channel is produced per
// call into `dst` (channels x out_w).
class DepthwiseRows {
public:
    DepthwiseRows(const TensorF32& x, const ConvParams& dw, int factor)
        : x_(x), dw_(dw), factor_(factor), kh_(dw.kernel_h()), kw_(dw.kernel_w()) {
        const std::size_t vh = x.h() * static_cast<std::size_t>(factor);
        const std::size_t vw = x.w() * static_cast<std::size_t>(factor);
        const PadMode mode = effective_mode(dw.pad_mode, dw.pad, vh, vw);
        rows_ = index_map(x.h(), factor, dw.pad, mode);
        cols_ = index_map(x.w(), factor, dw.pad, mode);
        out_h_ = conv_output_extent(vh, kh_, dw.stride, dw.pad);
        out_w_ = conv_output_extent(vw, kw_, dw.stride, dw.pad);
    }

    std::size_t out_h() const { return out_h_; }
    std::size_t out_w() const { return out_w_; }

    void compute(std::size_t n, std::size_t y, std::size_t c, float* dst, std::vector<float>& scratch) const {
        const std::size_t stride = static_cast<std::size_t>(dw_.stride);
        const std::size_t wp = cols_.size();
        scratch.resize(kh_ * wp);
        const float* src = x_.plane(n, c);
        for (std::size_t ky = 0; ky < kh_; ++ky) {
            float* line = scratch.data() + ky * wp;
            const std::ptrdiff_t sy = rows_[y * stride + ky];
            if (sy < 0) {
                std::fill(line, line + wp, 0.0f);
                continue;
            }
            const float* srow = src + static_cast<std::size_t>(sy) * x_.w();
            for (std::size_t i = 0; i < wp; ++i) line[i] = cols_[i] < 0 ? 0.0f : srow[cols_[i]];
        }
        const float* wc = dw_.weight.plane(c, 0);
        const float bias = dw_.bias[c];
        for (std::size_t xo = 0; xo < out_w_; ++xo) {
            float acc = 0.0f;
            for (std::size_t ky = 0; ky < kh_; ++ky) {
                const float* line = scratch.data() + ky * wp + xo * stride;
                for (std::size_t kx = 0; kx < kw_; ++kx) acc += wc[ky * kw_ + kx] * line[kx];
            }
            dst[xo] = acc + bias;
        }
    }

private:
    const TensorF32& x_;
    const ConvParams& dw_;
    int factor_;
    std::size_t kh_;
    std::size_t kw_;
    std::vector<std::ptrdiff_t> rows_;
    std::vector<std::ptrdiff_t> cols_;
    std::size_t out_h_ = 0;
    std::size_t out_w_ = 0;
};

void validate_depthwise(const TensorF32& x, const ConvParams& dw, const char* what) {
    validate_kernel(dw, what);
    if (dw.groups != static_cast<int>(x.c()) || dw.weight.c() != 1 || dw.out_channels() != x.c()) {
        throw ShapeError(std::string(what) + ": depthwise stage must have groups == channels == " +
                         std::to_string(x.c()));
    }
}

// Pointwise 1x1 mixing of a band of `channels` rows (channel-major, width w).
void pointwise_row(const float* band, std::size_t in_c, std::size_t w, const ConvParams& pw,
                   const std::vector<float>& packed, std::size_t n, std::size_t y, TensorF32& out) {
    const std::size_t out_c = pw.out_channels();
    const std::size_t blocks = (out_c + kOcBlock - 1) / kOcBlock;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t o_end = std::min(kOcBlock, out_c - b * kOcBlock);
        const float* wblock = packed.data() + b * in_c * kOcBlock;
        std::size_t x0 = 0;
        for (; x0 + kTile <= w; x0 += kTile) {
            vec16 acc[kOcBlock] = {};
            const float* wptr = wblock;
            for (std::size_t ic = 0; ic < in_c; ++ic) {
                const vec16 v = load16(band + ic * w + x0);
                for (std::size_t o = 0; o < kOcBlock; ++o) acc[o] += wptr[o] * v;
                wptr += kOcBlock;
            }
            for (std::size_t o = 0; o < o_end; ++o) {
                const std::size_t oc = b * kOcBlock + o;
                store16(&out.at(n, oc, y, x0), acc[o] + pw.bias[oc]);
            }
        }
        for (std::size_t o = 0; o < o_end; ++o) {
            const std::size_t oc = b * kOcBlock + o;
            for (std::size_t x = x0; x < w; ++x) {
                float acc = 0.0f;
                for (std::size_t ic = 0; ic < in_c; ++ic) acc += wblock[ic * kOcBlock + o] * band[ic * w + x];
                out.at(n, oc, y, x) = acc + pw.bias[oc];
            }
        }
    }
}

std::vector<float> pack_pointwise(const ConvParams& pw) {
    const std::size_t out_c = pw.out_channels();
    const std::size_t in_c = pw.in_channels();
    const std::size_t blocks = (out_c + kOcBlock - 1) / kOcBlock;
    std::vector<float> packed(blocks * in_c * kOcBlock, 0.0f);
    for (std::size_t o = 0; o < out_c; ++o) {
        for (std::size_t ic = 0; ic < in_c; ++ic) {
            packed[((o / kOcBlock) * in_c + ic) * kOcBlock + o % kOcBlock] = pw.weight.at(o, ic, 0, 0);
        }
    }
    return packed;
}

TensorF32 ds_conv_impl(const TensorF32& x, int factor, const ConvParams& dw, const ConvParams& pw) {
    const char* what = factor == 1 ? "depthwise_separable_conv2d" : "upsample_depthwise_separable_conv2d";
    validate_depthwise(x, dw, what);
    validate_kernel(pw, what);
    if (pw.kernel_h() != 1 || pw.kernel_w() != 1 || pw.stride != 1 || pw.groups != 1 || pw.pad != 0) {
        throw ShapeError(std::string(what) + ": pointwise stage must be an unpadded 1x1 stride-1 convolution");
    }
    if (pw.in_channels() != x.c()) {
        throw ShapeError(std::string(what) + ": pointwise input channels " + std::to_string(pw.in_channels()) +
                         " != " + std::to_string(x.c()));
    }
    const DepthwiseRows rows(x, dw, factor);
    const std::vector<float> packed = pack_pointwise(pw);
    const std::size_t in_c = x.c();
    const std::size_t wo = rows.out_w();
    TensorF32 out(Shape{x.n(), pw.out_channels(), rows.out_h(), wo});
    parallel_for(static_cast<std::int64_t>(x.n() * rows.out_h()), [&](std::int64_t task) {
        const std::size_t y = static_cast<std::size_t>(task) % rows.out_h();
        const std::size_t n = static_cast<std::size_t>(task) / rows.out_h();
        thread_local std::vector<float> band;
        thread_local std::vector<float> scratch;
        band.resize(in_c * wo);
        for (std::size_t c = 0; c < in_c; ++c) rows.compute(n, y, c, band.data() + c * wo, scratch);
        pointwise_row(band.data(), in_c, wo, pw, packed, n, y, out);
    });
    return out;
}

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, int stride, int pad) {
    const std::size_t padded = input + 2 * static_cast<std::size_t>(pad);
    if (stride < 1 || padded < kernel) {
        throw ShapeError("convolution input extent " + std::to_string(input) + " with padding " +
                         std::to_string(pad) + " is smaller than kernel extent " + std::to_string(kernel));
    }
    return (padded - kernel) / static_cast<std::size_t>(stride) + 1;
}

TensorF32 conv2d(const TensorF32& x, const ConvParams& p) {
    validate_input(x, p, "conv2d");
    const Shape out_shape{x.n(), p.out_channels(), conv_output_extent(x.h(), p.kernel_h(), p.stride, p.pad),
                          conv_output_extent(x.w(), p.kernel_w(), p.stride, p.pad)};
    if (out_shape.h == 0 || out_shape.w == 0) throw ShapeError("conv2d: empty output");

    if (p.groups > 1 && static_cast<std::size_t>(p.groups) == x.c() && p.out_channels() == x.c()) {
        const DepthwiseRows rows(x, p, 1);
        TensorF32 out(out_shape);
        parallel_for(static_cast<std::int64_t>(x.n() * x.c() * out_shape.h), [&](std::int64_t task) {
            const std::size_t y = static_cast<std::size_t>(task) % out_shape.h;
            const std::size_t c = (static_cast<std::size_t>(task) / out_shape.h) % x.c();
            const std::size_t n = static_cast<std::size_t>(task) / (out_shape.h * x.c());
            thread_local std::vector<float> scratch;
            rows.compute(n, y, c, &out.at(n, c, y, 0), scratch);
        });
        return out;
    }

    const PadMode mode = effective_mode(p.pad_mode, p.pad, x.h(), x.w());
    TensorF32 padded_storage;
    const TensorF32* padded = &x;
    if (p.pad > 0) {
        padded_storage = pad_input(x, p.pad, mode);
        padded = &padded_storage;
    }

    if (p.groups != 1) return grouped_conv(*padded, p, out_shape);

    const DenseConv kernel(p, x.c());
    TensorF32 out(out_shape);
    const std::size_t blocks = kernel.blocks();
    parallel_for(static_cast<std::int64_t>(x.n() * blocks * out_shape.h), [&](std::int64_t task) {
        const std::size_t y = static_cast<std::size_t>(task) % out_shape.h;
        const std::size_t b = (static_cast<std::size_t>(task) / out_shape.h) % blocks;
        const std::size_t n = static_cast<std::size_t>(task) / (out_shape.h * blocks);
        kernel.row(*padded, n, b, y, out);
    });
    return out;
}

TensorF32 depthwise_separable_conv2d(const TensorF32& x, const ConvParams& depthwise, const ConvParams& pointwise) {
    return ds_conv_impl(x, 1, depthwise, pointwise);
}

TensorF32 upsample_depthwise_separable_conv2d(const TensorF32& x, int factor, const ConvParams& depthwise,
                                              const ConvParams& pointwise) {
    if (factor < 1) throw ValueError("upsample factor must be positive");
    return ds_conv_impl(x, factor, depthwise, pointwise);
}

}  // namespace microast
