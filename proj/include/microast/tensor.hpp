#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace microast {

/// Extents of a dense NCHW feature map.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }

    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense 4-D float tensor, row-major NCHW with width fastest.
class TensorF32 {
public:
    TensorF32() = default;
    explicit TensorF32(Shape shape, float fill = 0.0f);
    TensorF32(Shape shape, std::vector<float> data);
    TensorF32(std::size_t n, std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
        : TensorF32(Shape{n, c, h, w}, fill) {}

    const Shape& shape() const { return shape_; }
    std::size_t n() const { return shape_.n; }
    std::size_t c() const { return shape_.c; }
    std::size_t h() const { return shape_.h; }
    std::size_t w() const { return shape_.w; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    const std::vector<float>& storage() const { return data_; }

    float* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const float* plane(std::size_t n, std::size_t c) const {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    /// Same data viewed under different extents; element count must match.
    TensorF32 reshaped(Shape shape) const&;
    TensorF32 reshaped(Shape shape) &&;

private:
    Shape shape_{};
    std::vector<float> data_;
};

/// Per-sample, per-channel instance statistics. Entries are indexed
/// sample-major (`n * C + c`), so a single-sample tensor yields vectors of
/// length C.
struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> std;
};

enum class PadMode { Zero, Reflect };

/// Convolution layer parameters. `weight` is (out, in / groups, kh, kw).
struct ConvParams {
    TensorF32 weight;
    std::vector<float> bias;
    int stride = 1;
    PadMode pad_mode = PadMode::Reflect;
    int pad = 0;
    int groups = 1;

    std::size_t out_channels() const { return weight.n(); }
    std::size_t in_channels() const { return weight.c() * static_cast<std::size_t>(groups); }
    std::size_t kernel_h() const { return weight.h(); }
    std::size_t kernel_w() const { return weight.w(); }
};

}  // namespace microast
