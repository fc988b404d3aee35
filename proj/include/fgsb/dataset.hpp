#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fgsb/image.hpp"

namespace fgsb {

struct Canvas {
    std::int64_t height = 256;
    std::int64_t width = 256;

    friend bool operator==(const Canvas&, const Canvas&) = default;
};

/// One aligned source/target slice with an optional lesion prior.
struct SlicePair {
    Image source;
    Image target;
    std::optional<Mask> prior_mask;
    std::string subject_id;
    std::int64_t slice_index = 0;
};

enum class Split { train, test };

[[nodiscard]] std::string to_string(Split split);
[[nodiscard]] Split split_from_string(const std::string& name);

/// Raw intensity window used to map a subject's modality into [-1, 1].
struct NormalizationRecord {
    float lo = -1.0F;
    float hi = 1.0F;

    friend bool operator==(const NormalizationRecord&, const NormalizationRecord&) = default;
};

struct SubjectNormalization {
    NormalizationRecord source;
    NormalizationRecord target;

    friend bool operator==(const SubjectNormalization&, const SubjectNormalization&) = default;
};

struct ManifestEntry {
    SlicePair pair;
    Split split = Split::train;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    Canvas canvas;
    std::map<std::string, SubjectNormalization> normalization;

    [[nodiscard]] std::vector<const SlicePair*> pairs(Split split) const;
    [[nodiscard]] std::size_t count(Split split) const;
};

/// Throws std::invalid_argument when a pair breaks the SlicePair invariants.
void validate_pair(const SlicePair& pair);

/// Throws when train and test share a subject or shapes disagree with the canvas.
void validate_manifest(const DatasetManifest& manifest);

struct Normalized {
    Image image;
    std::size_t clipped = 0;  ///< raw values that fell outside [lo, hi]
};

/// Affine map lo -> -1, hi -> +1. Values outside [lo, hi] are clipped and counted.
[[nodiscard]] Normalized normalize_intensity(const Image& raw, float lo, float hi);

/// Inverse of normalize_intensity for the same window.
[[nodiscard]] Image denormalize_intensity(const Image& normalized, float lo, float hi);

/// Centers img on the canvas; the border takes the image minimum.
[[nodiscard]] Image pad_to_canvas(const Image& img, Canvas canvas);
[[nodiscard]] Mask pad_to_canvas(const Mask& mask, Canvas canvas);

/// mask = 1 where target >= threshold.
[[nodiscard]] Mask extract_prior_mask(const Image& target, float threshold);

[[nodiscard]] Image hflip(const Image& img);
[[nodiscard]] Mask hflip(const Mask& mask);

/// With probability p mirrors source, target and prior mask together.
[[nodiscard]] SlicePair augment_hflip(const SlicePair& pair, double p, std::mt19937_64& rng);

/// Fraction of pixels above the background level.
[[nodiscard]] double foreground_fraction(const Image& normalized, float background_level = -0.95F);

struct IngestOptions {
    Canvas canvas;
    float background_level = -0.95F;
    double min_foreground_fraction = 0.05;
    std::optional<float> prior_threshold;  ///< derive prior masks from the target when set
};

/// Normalizes one subject's raw slices with a per-subject window, pads them to the
/// canvas and drops background-dominated slices. Slice indices keep their raw position.
[[nodiscard]] std::vector<SlicePair> prepare_subject(const std::string& subject_id,
                                                     const std::vector<Image>& raw_sources,
                                                     const std::vector<Image>& raw_targets,
                                                     const IngestOptions& options,
                                                     SubjectNormalization* normalization = nullptr);

struct PhantomOptions {
    std::uint64_t seed = 0;
    std::int64_t n_subjects = 3;
    std::int64_t slices_per_subject = 100;
    Canvas canvas{64, 64};
    double lesion_rate = 0.5;
    std::int64_t n_test_subjects = 1;  ///< the last subjects go to the test split
};

/// Fixed monotone intensity remap relating phantom source and target tissue.
[[nodiscard]] float phantom_remap(float source);

/// Lesion intensity peak in the phantom target.
inline constexpr float kPhantomLesionPeak = 0.9F;

/// Synthesizes a paired-modality phantom. Lesions are bright only in the target; the
/// source carries a faint hypointense cue inside the same support. Prior masks hold the
/// exact lesion support. Deterministic for a given seed.
[[nodiscard]] DatasetManifest generate_phantom_dataset(const PhantomOptions& options);

/// Writes slices under dir/slices and a JSON-lines manifest at dir/manifest.jsonl.
std::filesystem::path write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir);

/// Loads a JSON-lines manifest; file paths resolve relative to the manifest location.
[[nodiscard]] DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

}  // namespace fgsb
