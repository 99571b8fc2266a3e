#pragma once

#include "microast/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace microast {

/// 8-bit interleaved RGB image.
struct ImageRGB {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    bool operator==(const ImageRGB&) const = default;
};

/// 1x3xHxW planar tensor with every value v / 255.
TensorF32 to_tensor(const ImageRGB& image);

/// Clamps to [0, 1], scales by 255 and rounds half away from zero. Expects a
/// single-sample 3-channel tensor.
ImageRGB from_tensor(const TensorF32& tensor);

/// Decodes PNG or JPEG (detected from the file signature). Alpha is
/// dropped; grayscale is replicated to three channels.
ImageRGB load_image(const std::filesystem::path& path);
ImageRGB decode_image(const std::vector<std::uint8_t>& bytes);

/// Always writes 8-bit RGB PNG.
void save_image(const ImageRGB& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageRGB& image);

}  // namespace microast
