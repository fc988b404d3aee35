#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "fgsb/image.hpp"

namespace fgsb::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "fgsb_test";
        if (info != nullptr) {
            name += std::string("_") + info->test_suite_name() + "_" + info->name();
        }
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline Image random_image(std::int64_t h, std::int64_t w, std::uint64_t seed, float lo = -1.0F, float hi = 1.0F) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    Image img(h, w);
    for (auto& v : img.pixels()) {
        v = dist(rng);
    }
    return img;
}

inline Image constant_image(std::int64_t h, std::int64_t w, float v) { return Image(h, w, v); }

}  // namespace fgsb::testing
