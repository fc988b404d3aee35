#pragma once

#include <filesystem>
#include <vector>

#include "fgsb/image.hpp"

namespace fgsb::io {

// Raw slice layout: "FGSB", u32 height, u32 width, then height*width little-endian f32
// values in row-major order.

void write_raw(const std::filesystem::path& path, const Image& image);
[[nodiscard]] Image read_raw(const std::filesystem::path& path);

/// Quantizes [lo, hi] onto 0..65535 and writes a 16-bit grayscale PNG.
void write_png16(const std::filesystem::path& path, const Image& image, float lo = -1.0F, float hi = 1.0F);

/// Writes an 8-bit grayscale PNG, mapping [lo, hi] onto 0..255.
void write_png8(const std::filesystem::path& path, const Image& image, float lo = -1.0F, float hi = 1.0F);

/// Writes an 8-bit RGB PNG from interleaved rgb bytes.
void write_png_rgb(const std::filesystem::path& path, std::int64_t height, std::int64_t width,
                   const std::vector<std::uint8_t>& rgb);

/// Reads an 8- or 16-bit grayscale PNG and maps its full code range onto [lo, hi].
[[nodiscard]] Image read_png(const std::filesystem::path& path, float lo = -1.0F, float hi = 1.0F);

/// Dispatches on extension: ".fgsb" raw, ".png" PNG.
[[nodiscard]] Image read_slice(const std::filesystem::path& path);
void write_slice(const std::filesystem::path& path, const Image& image);

/// Masks are stored as slices holding 0/1 (PNG masks use 0 and the top code).
[[nodiscard]] Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);

}  // namespace fgsb::io
