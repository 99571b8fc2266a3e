#include "microast/image.hpp"

#include "microast/error.hpp"
#include "microast/weights_io.hpp"

#include <png.h>
// jpeglib.h needs size_t and FILE declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

namespace microast {

namespace {

bool is_png(const std::vector<std::uint8_t>& b) {
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(const std::vector<std::uint8_t>& b) {
    return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

ImageRGB decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw ImageFormatError(std::string("PNG decode failed: ") + png.message);
    }
    png.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, rgba.data(), 0, nullptr)) {
        png_image_free(&png);
        throw ImageFormatError(std::string("PNG decode failed: ") + png.message);
    }
    ImageRGB img;
    img.width = png.width;
    img.height = png.height;
    img.pixels.resize(img.width * img.height * 3);
    for (std::size_t i = 0; i < img.width * img.height; ++i) {
        std::copy_n(rgba.data() + 4 * i, 3, img.pixels.data() + 3 * i);
    }
    return img;
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Recoverable warnings (e.g. premature end of data) are not printed.
void jpeg_silent(j_common_ptr) {}

// No C++ objects with non-trivial destructors may live across setjmp here.
bool decode_jpeg_into(const std::vector<std::uint8_t>& bytes, ImageRGB& img, char* message) {
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    err.mgr.output_message = jpeg_silent;
    if (setjmp(err.jump)) {
        std::memcpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img.width = cinfo.output_width;
    img.height = cinfo.output_height;
    img.pixels.resize(img.width * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

}  // namespace

TensorF32 to_tensor(const ImageRGB& image) {
    if (image.pixels.size() != image.width * image.height * 3) {
        throw ShapeError("image pixel buffer does not match its extents");
    }
    TensorF32 t(Shape{1, 3, image.height, image.width});
    const std::size_t plane = image.width * image.height;
    float* dst = t.data().data();
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<float>(image.pixels[3 * i + c]) / 255.0f;
    }
    return t;
}

ImageRGB from_tensor(const TensorF32& tensor) {
    if (tensor.n() != 1 || tensor.c() != 3) {
        throw ShapeError("from_tensor: expected 1x3xHxW, got " + to_string(tensor.shape()));
    }
    ImageRGB img;
    img.width = tensor.w();
    img.height = tensor.h();
    const std::size_t plane = img.width * img.height;
    img.pixels.resize(plane * 3);
    const float* src = tensor.data().data();
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(src[c * plane + i], 0.0f, 1.0f);
            img.pixels[3 * i + c] = static_cast<std::uint8_t>(std::round(v * 255.0f));
        }
    }
    return img;
}

ImageRGB decode_image(const std::vector<std::uint8_t>& bytes) {
    if (is_png(bytes)) return decode_png(bytes);
    if (is_jpeg(bytes)) {
        ImageRGB img;
        char message[JMSG_LENGTH_MAX] = {};
        if (!decode_jpeg_into(bytes, img, message)) throw ImageFormatError(std::string("JPEG decode failed: ") + message);
        return img;
    }
    throw ImageFormatError("unsupported image format (expected PNG or JPEG)");
}

ImageRGB load_image(const std::filesystem::path& path) {
    try {
        return decode_image(read_file(path));
    } catch (const ImageFormatError& e) {
        throw ImageFormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const ImageRGB& image) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
        throw ShapeError("encode_png: invalid image extents");
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encode failed: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw IoError(std::string("PNG encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

void save_image(const ImageRGB& image, const std::filesystem::path& path) {
    write_file_atomic(path, encode_png(image));
}

}  // namespace microast
