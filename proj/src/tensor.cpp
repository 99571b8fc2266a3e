#include "microast/tensor.hpp"

#include "microast/error.hpp"

#include <utility>

namespace microast {

std::string to_string(const Shape& s) {
    return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

TensorF32::TensorF32(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

TensorF32::TensorF32(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         to_string(shape_));
    }
}

TensorF32 TensorF32::reshaped(Shape shape) const& {
    return TensorF32(shape, data_);
}

TensorF32 TensorF32::reshaped(Shape shape) && {
    return TensorF32(shape, std::move(data_));
}

}  // namespace microast
