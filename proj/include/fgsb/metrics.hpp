#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgsb/image.hpp"

namespace fgsb::metrics {

/// PSNR reported for a zero-error reconstruction.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(range^2 / MSE), capped at kPsnrCap. With a mask, only masked pixels count.
[[nodiscard]] double psnr(const Image& x_hat, const Image& x_ref, double data_range = 1.0,
                          const Mask* region = nullptr);

/// Mean local SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5,
/// K1 0.01, K2 0.03). Throws for images smaller than the window.
[[nodiscard]] double ssim(const Image& x_hat, const Image& x_ref, double data_range = 1.0);

/// ||x_hat - x_ref||_2 / ||x_ref||_2. Throws when the reference norm is zero.
[[nodiscard]] double nrmse(const Image& x_hat, const Image& x_ref, const Mask* region = nullptr);

struct Overlap {
    double dice = 0.0;
    double recall = 0.0;
};

/// dice = 2|A n B| / (|A| + |B|), recall = |A n B| / |B| with A the prediction.
/// Both empty gives (1, 1); an empty reference gives recall 1.
[[nodiscard]] Overlap dice_recall(const Mask& pred, const Mask& truth);

/// Maps [-1, 1] intensities onto [0, 1].
[[nodiscard]] Image to_unit_range(const Image& image);

struct Summary {
    double mean = 0.0;
    double std = 0.0;  ///< population standard deviation
    std::size_t count = 0;
};

[[nodiscard]] Summary summarize(const std::vector<double>& values);

struct SliceMetrics {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    double nrmse = 0.0;
    std::optional<double> dice;
    std::optional<double> recall;
    bool has_lesion = false;  ///< reference lesion mask is non-empty
};

struct EvaluationOptions {
    /// Pixels whose reference exceeds this level (in [-1, 1]) form the PSNR/NRMSE region;
    /// unset evaluates the whole canvas.
    std::optional<float> foreground_level = -0.95F;
    /// Threshold for lesion masks on [-1, 1] images; lesion metrics need it or supplied masks.
    std::optional<float> lesion_threshold;
};

struct MetricReport {
    std::vector<SliceMetrics> slices;
    Summary psnr;
    Summary ssim;
    Summary nrmse;
    std::optional<Summary> dice;    ///< over slices whose reference holds a lesion
    std::optional<Summary> recall;  ///< over slices whose reference holds a lesion

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Per-slice metrics on [0, 1]-rescaled images. `truth_masks`, when given, replace the
/// thresholded reference masks; predictions are always thresholded.
[[nodiscard]] SliceMetrics evaluate_slice(const std::string& name, const Image& pred, const Image& ref,
                                          const Mask* truth_mask, const EvaluationOptions& options);

[[nodiscard]] MetricReport aggregate(std::vector<SliceMetrics> slices);

}  // namespace fgsb::metrics
