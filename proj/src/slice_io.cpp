#include "fgsb/slice_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace fgsb::io {
namespace {

constexpr std::array<char, 4> kMagic{'F', 'G', 'S', 'B'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(sizeof(T) == 4);
    auto bits = std::bit_cast<std::uint32_t>(value);
    std::array<char, 4> bytes{};
    for (int i = 0; i < 4; ++i) {
        bytes[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xFFU);
    }
    out.write(bytes.data(), 4);
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, 4> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), 4);
    if (!in) {
        throw std::runtime_error("truncated raw slice");
    }
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
    }
    return std::bit_cast<T>(bits);
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f != nullptr) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return f;
}

std::uint32_t quantize(float value, float lo, float hi, std::uint32_t max_code) {
    const double unit = std::clamp((static_cast<double>(value) - lo) / (static_cast<double>(hi) - lo), 0.0, 1.0);
    return static_cast<std::uint32_t>(std::lround(unit * max_code));
}

void write_png_rows(const std::filesystem::path& path, std::int64_t height, std::int64_t width, int bit_depth,
                    int color_type, const std::vector<std::uint8_t>& bytes) {
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to write " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t row_bytes = bytes.size() / static_cast<std::size_t>(height);
    for (std::int64_t r = 0; r < height; ++r) {
        png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(r) * row_bytes));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::string lower_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace

void write_raw(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string());
    }
    out.write(kMagic.data(), kMagic.size());
    put_le(out, static_cast<std::uint32_t>(image.height()));
    put_le(out, static_cast<std::uint32_t>(image.width()));
    for (float v : image.pixels()) {
        put_le(out, v);
    }
    if (!out) {
        throw std::runtime_error("failed to write " + path.string());
    }
}

Image read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw std::runtime_error(path.string() + " is not a raw FGSB slice");
    }
    const auto height = get_le<std::uint32_t>(in);
    const auto width = get_le<std::uint32_t>(in);
    std::vector<float> data(static_cast<std::size_t>(height) * width);
    for (auto& v : data) {
        v = get_le<float>(in);
    }
    return Image(height, width, std::move(data));
}

void write_png16(const std::filesystem::path& path, const Image& image, float lo, float hi) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(image.size() * 2);
    for (float v : image.pixels()) {
        const auto code = quantize(v, lo, hi, 65535U);
        bytes.push_back(static_cast<std::uint8_t>(code >> 8));  // PNG is big-endian
        bytes.push_back(static_cast<std::uint8_t>(code & 0xFFU));
    }
    write_png_rows(path, image.height(), image.width(), 16, PNG_COLOR_TYPE_GRAY, bytes);
}

void write_png8(const std::filesystem::path& path, const Image& image, float lo, float hi) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(image.size());
    for (float v : image.pixels()) {
        bytes.push_back(static_cast<std::uint8_t>(quantize(v, lo, hi, 255U)));
    }
    write_png_rows(path, image.height(), image.width(), 8, PNG_COLOR_TYPE_GRAY, bytes);
}

void write_png_rgb(const std::filesystem::path& path, std::int64_t height, std::int64_t width,
                   const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(height * width * 3)) {
        throw std::invalid_argument("rgb buffer does not match its dimensions");
    }
    write_png_rows(path, height, width, 8, PNG_COLOR_TYPE_RGB, rgb);
}

Image read_png(const std::filesystem::path& path, float lo, float hi) {
    auto file = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto width = static_cast<std::int64_t>(png_get_image_width(png, info));
    const auto height = static_cast<std::int64_t>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path.string() + ": only grayscale PNG slices are supported");
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        depth = 8;
    }
    png_read_update_info(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> bytes(row_bytes * static_cast<std::size_t>(height));
    for (std::int64_t r = 0; r < height; ++r) {
        png_read_row(png, bytes.data() + static_cast<std::size_t>(r) * row_bytes, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);

    Image image(height, width);
    const double max_code = depth == 16 ? 65535.0 : 255.0;
    for (std::int64_t r = 0; r < height; ++r) {
        const std::uint8_t* row = bytes.data() + static_cast<std::size_t>(r) * row_bytes;
        for (std::int64_t c = 0; c < width; ++c) {
            const double code = depth == 16 ? (row[2 * c] << 8) | row[2 * c + 1] : row[c];
            image.at(r, c) = static_cast<float>(lo + (hi - lo) * (code / max_code));
        }
    }
    return image;
}

Image read_slice(const std::filesystem::path& path) {
    const auto ext = lower_extension(path);
    if (ext == ".fgsb") {
        return read_raw(path);
    }
    if (ext == ".png") {
        return read_png(path);
    }
    throw std::runtime_error("unsupported slice format: " + path.string());
}

void write_slice(const std::filesystem::path& path, const Image& image) {
    const auto ext = lower_extension(path);
    if (ext == ".fgsb") {
        write_raw(path, image);
    } else if (ext == ".png") {
        write_png16(path, image);
    } else {
        throw std::runtime_error("unsupported slice format: " + path.string());
    }
}

Mask read_mask(const std::filesystem::path& path) {
    if (lower_extension(path) == ".png") {
        return Mask::from_image(read_png(path, 0.0F, 1.0F));
    }
    return Mask::from_image(read_slice(path));
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
    if (lower_extension(path) == ".png") {
        write_png8(path, mask.to_image(), 0.0F, 1.0F);
    } else {
        write_slice(path, mask.to_image());
    }
}

}  // namespace fgsb::io
