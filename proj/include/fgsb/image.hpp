#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgsb {

/// Row-major single-channel float image.
class Image {
public:
    Image() = default;
    Image(std::int64_t height, std::int64_t width, float fill = 0.0F)
        : height_(height), width_(width), data_(checked_size(height, width), fill) {}
    Image(std::int64_t height, std::int64_t width, std::vector<float> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != checked_size(height, width)) {
            throw std::invalid_argument("image payload does not match its dimensions");
        }
    }

    [[nodiscard]] std::int64_t height() const noexcept { return height_; }
    [[nodiscard]] std::int64_t width() const noexcept { return width_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] float& at(std::int64_t row, std::int64_t col) {
        return data_[static_cast<std::size_t>(row * width_ + col)];
    }
    [[nodiscard]] float at(std::int64_t row, std::int64_t col) const {
        return data_[static_cast<std::size_t>(row * width_ + col)];
    }

    [[nodiscard]] std::span<float> pixels() noexcept { return data_; }
    [[nodiscard]] std::span<const float> pixels() const noexcept { return data_; }

    [[nodiscard]] bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    static std::size_t checked_size(std::int64_t height, std::int64_t width) {
        if (height < 0 || width < 0) {
            throw std::invalid_argument("image dimensions must be non-negative");
        }
        return static_cast<std::size_t>(height * width);
    }

    std::int64_t height_ = 0;
    std::int64_t width_ = 0;
    std::vector<float> data_;
};

/// Binary mask; every element is exactly 0 or 1.
class Mask {
public:
    Mask() = default;
    Mask(std::int64_t height, std::int64_t width, std::uint8_t fill = 0)
        : height_(height), width_(width), data_(static_cast<std::size_t>(height * width), fill) {
        if (fill > 1) {
            throw std::invalid_argument("mask values must be 0 or 1");
        }
    }

    /// Builds a mask from a float image whose values are exactly 0 or 1.
    static Mask from_image(const Image& image) {
        Mask mask(image.height(), image.width());
        const auto src = image.pixels();
        for (std::size_t i = 0; i < src.size(); ++i) {
            if (src[i] != 0.0F && src[i] != 1.0F) {
                throw std::invalid_argument("mask image holds a non-binary value");
            }
            mask.data_[i] = src[i] == 1.0F ? 1 : 0;
        }
        return mask;
    }

    [[nodiscard]] Image to_image() const {
        Image image(height_, width_);
        auto dst = image.pixels();
        for (std::size_t i = 0; i < data_.size(); ++i) {
            dst[i] = static_cast<float>(data_[i]);
        }
        return image;
    }

    [[nodiscard]] std::int64_t height() const noexcept { return height_; }
    [[nodiscard]] std::int64_t width() const noexcept { return width_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] std::uint8_t at(std::int64_t row, std::int64_t col) const {
        return data_[static_cast<std::size_t>(row * width_ + col)];
    }
    void set(std::int64_t row, std::int64_t col, bool on) {
        data_[static_cast<std::size_t>(row * width_ + col)] = on ? 1 : 0;
    }

    [[nodiscard]] std::span<const std::uint8_t> values() const noexcept { return data_; }

    [[nodiscard]] std::size_t count() const noexcept {
        std::size_t n = 0;
        for (auto v : data_) {
            n += v;
        }
        return n;
    }

    [[nodiscard]] bool same_shape(const Image& image) const noexcept {
        return height_ == image.height() && width_ == image.width();
    }
    [[nodiscard]] bool same_shape(const Mask& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    std::int64_t height_ = 0;
    std::int64_t width_ = 0;
    std::vector<std::uint8_t> data_;
};

}  // namespace fgsb
