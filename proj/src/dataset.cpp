#include "fgsb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fgsb/slice_io.hpp"

namespace fgsb {

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& name) {
    if (name == "train") {
        return Split::train;
    }
    if (name == "test") {
        return Split::test;
    }
    throw std::invalid_argument("unknown split '" + name + "'");
}

std::vector<const SlicePair*> DatasetManifest::pairs(Split split) const {
    std::vector<const SlicePair*> out;
    for (const auto& entry : entries) {
        if (entry.split == split) {
            out.push_back(&entry.pair);
        }
    }
    return out;
}

std::size_t DatasetManifest::count(Split split) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [split](const ManifestEntry& e) { return e.split == split; }));
}

void validate_pair(const SlicePair& pair) {
    if (!pair.source.same_shape(pair.target)) {
        throw std::invalid_argument("source and target shapes differ for " + pair.subject_id);
    }
    if (pair.prior_mask && !pair.prior_mask->same_shape(pair.source)) {
        throw std::invalid_argument("prior mask shape differs from the slice for " + pair.subject_id);
    }
    if (pair.slice_index < 0) {
        throw std::invalid_argument("negative slice index");
    }
    auto in_range = [](float v) { return v >= -1.0F && v <= 1.0F; };
    if (!std::ranges::all_of(pair.source.pixels(), in_range) || !std::ranges::all_of(pair.target.pixels(), in_range)) {
        throw std::invalid_argument("slice intensities outside [-1, 1] for " + pair.subject_id);
    }
}

void validate_manifest(const DatasetManifest& manifest) {
    std::set<std::string> train_subjects;
    std::set<std::string> test_subjects;
    for (const auto& entry : manifest.entries) {
        validate_pair(entry.pair);
        if (entry.pair.source.height() != manifest.canvas.height || entry.pair.source.width() != manifest.canvas.width) {
            throw std::invalid_argument("slice of " + entry.pair.subject_id + " does not match the canvas");
        }
        (entry.split == Split::train ? train_subjects : test_subjects).insert(entry.pair.subject_id);
    }
    for (const auto& id : train_subjects) {
        if (test_subjects.contains(id)) {
            throw std::invalid_argument("subject " + id + " appears in both train and test splits");
        }
    }
}

Normalized normalize_intensity(const Image& raw, float lo, float hi) {
    if (!(hi > lo)) {
        throw std::invalid_argument("normalize_intensity: hi must exceed lo");
    }
    Normalized out{Image(raw.height(), raw.width()), 0};
    const double scale = 2.0 / (static_cast<double>(hi) - lo);
    auto dst = out.image.pixels();
    const auto src = raw.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        float v = src[i];
        if (v < lo || v > hi) {
            ++out.clipped;
            v = std::clamp(v, lo, hi);
        }
        dst[i] = static_cast<float>(std::clamp((v - static_cast<double>(lo)) * scale - 1.0, -1.0, 1.0));
    }
    return out;
}

Image denormalize_intensity(const Image& normalized, float lo, float hi) {
    if (!(hi > lo)) {
        throw std::invalid_argument("denormalize_intensity: hi must exceed lo");
    }
    Image out(normalized.height(), normalized.width());
    const double half_span = (static_cast<double>(hi) - lo) / 2.0;
    auto dst = out.pixels();
    const auto src = normalized.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<float>((static_cast<double>(src[i]) + 1.0) * half_span + lo);
    }
    return out;
}

namespace {

template <typename Grid, typename Fill>
Grid pad_grid(const Grid& src, Canvas canvas, Fill fill) {
    if (src.height() > canvas.height || src.width() > canvas.width) {
        std::ostringstream msg;
        msg << "slice " << src.height() << "x" << src.width() << " exceeds canvas " << canvas.height << "x"
            << canvas.width;
        throw std::invalid_argument(msg.str());
    }
    Grid out(canvas.height, canvas.width, fill);
    const auto top = (canvas.height - src.height()) / 2;
    const auto left = (canvas.width - src.width()) / 2;
    for (std::int64_t r = 0; r < src.height(); ++r) {
        for (std::int64_t c = 0; c < src.width(); ++c) {
            if constexpr (std::is_same_v<Grid, Mask>) {
                out.set(top + r, left + c, src.at(r, c) != 0);
            } else {
                out.at(top + r, left + c) = src.at(r, c);
            }
        }
    }
    return out;
}

}  // namespace

Image pad_to_canvas(const Image& img, Canvas canvas) {
    const float fill = img.empty() ? -1.0F : *std::ranges::min_element(img.pixels());
    return pad_grid(img, canvas, fill);
}

Mask pad_to_canvas(const Mask& mask, Canvas canvas) { return pad_grid(mask, canvas, std::uint8_t{0}); }

Mask extract_prior_mask(const Image& target, float threshold) {
    Mask mask(target.height(), target.width());
    for (std::int64_t r = 0; r < target.height(); ++r) {
        for (std::int64_t c = 0; c < target.width(); ++c) {
            mask.set(r, c, target.at(r, c) >= threshold);
        }
    }
    return mask;
}

Image hflip(const Image& img) {
    Image out(img.height(), img.width());
    for (std::int64_t r = 0; r < img.height(); ++r) {
        for (std::int64_t c = 0; c < img.width(); ++c) {
            out.at(r, img.width() - 1 - c) = img.at(r, c);
        }
    }
    return out;
}

Mask hflip(const Mask& mask) {
    Mask out(mask.height(), mask.width());
    for (std::int64_t r = 0; r < mask.height(); ++r) {
        for (std::int64_t c = 0; c < mask.width(); ++c) {
            out.set(r, mask.width() - 1 - c, mask.at(r, c) != 0);
        }
    }
    return out;
}

SlicePair augment_hflip(const SlicePair& pair, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p > 1.0) {
        throw std::invalid_argument("flip probability must lie in [0, 1]");
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (!(coin(rng) < p)) {
        return pair;
    }
    SlicePair out = pair;
    out.source = hflip(pair.source);
    out.target = hflip(pair.target);
    if (pair.prior_mask) {
        out.prior_mask = hflip(*pair.prior_mask);
    }
    return out;
}

double foreground_fraction(const Image& normalized, float background_level) {
    if (normalized.empty()) {
        return 0.0;
    }
    const auto n = std::ranges::count_if(normalized.pixels(), [&](float v) { return v > background_level; });
    return static_cast<double>(n) / static_cast<double>(normalized.size());
}

std::vector<SlicePair> prepare_subject(const std::string& subject_id, const std::vector<Image>& raw_sources,
                                       const std::vector<Image>& raw_targets, const IngestOptions& options,
                                       SubjectNormalization* normalization) {
    if (raw_sources.size() != raw_targets.size()) {
        throw std::invalid_argument("subject " + subject_id + ": source and target slice counts differ");
    }
    if (raw_sources.empty()) {
        return {};
    }
    auto window = [](const std::vector<Image>& slices) {
        NormalizationRecord rec{std::numeric_limits<float>::max(), std::numeric_limits<float>::lowest()};
        for (const auto& s : slices) {
            for (float v : s.pixels()) {
                rec.lo = std::min(rec.lo, v);
                rec.hi = std::max(rec.hi, v);
            }
        }
        return rec;
    };
    const SubjectNormalization norm{window(raw_sources), window(raw_targets)};
    if (normalization != nullptr) {
        *normalization = norm;
    }

    std::vector<SlicePair> out;
    for (std::size_t k = 0; k < raw_sources.size(); ++k) {
        if (!raw_sources[k].same_shape(raw_targets[k])) {
            throw std::invalid_argument("subject " + subject_id + ": slice " + std::to_string(k) + " shapes differ");
        }
        auto source = normalize_intensity(raw_sources[k], norm.source.lo, norm.source.hi).image;
        if (foreground_fraction(source, options.background_level) < options.min_foreground_fraction) {
            continue;
        }
        auto target = normalize_intensity(raw_targets[k], norm.target.lo, norm.target.hi).image;
        SlicePair pair;
        pair.source = pad_to_canvas(source, options.canvas);
        pair.target = pad_to_canvas(target, options.canvas);
        if (options.prior_threshold) {
            pair.prior_mask = extract_prior_mask(pair.target, *options.prior_threshold);
        }
        pair.subject_id = subject_id;
        pair.slice_index = static_cast<std::int64_t>(k);
        out.push_back(std::move(pair));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Phantom generator
// ---------------------------------------------------------------------------

float phantom_remap(float source) {
    const double unit = (static_cast<double>(source) + 1.0) / 2.0;
    return static_cast<float>(2.0 * std::pow(unit, 0.6) - 1.0);
}

namespace {

constexpr float kBackground = -1.0F;
constexpr float kScalp = 0.05F;
constexpr float kWhiteMatter = 0.3F;
constexpr float kGrayMatter = -0.05F;
constexpr float kCsf = -0.7F;
constexpr float kSourceCeiling = 0.3F;
constexpr float kLesionSourceCue = 0.25F;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

struct Ellipse {
    double cx = 0, cy = 0, ax = 1, ay = 1, theta = 0;

    // < 1 inside
    [[nodiscard]] double level(double u, double v) const {
        const double du = u - cx;
        const double dv = v - cy;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const double x = c * du + s * dv;
        const double y = -s * du + c * dv;
        return (x * x) / (ax * ax) + (y * y) / (ay * ay);
    }
    [[nodiscard]] Ellipse scaled(double f) const { return {cx, cy, ax * f, ay * f, theta}; }
};

struct Blob {
    double cx, cy, radius, phase;
};

struct SubjectAnatomy {
    Ellipse head;
    double brain_fraction = 0.86;
    double cortex_fraction = 0.8;
    Ellipse ventricle_left;
    Ellipse ventricle_right;
    std::vector<Blob> gray_blobs;
};

SubjectAnatomy draw_anatomy(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
    SubjectAnatomy a;
    a.head = {uni(-0.03, 0.03), uni(-0.03, 0.03), uni(0.74, 0.84), uni(0.84, 0.93), uni(-0.15, 0.15)};
    a.brain_fraction = uni(0.83, 0.88);
    a.cortex_fraction = uni(0.76, 0.82);
    const double vx = uni(0.08, 0.12);
    a.ventricle_left = {a.head.cx - vx, a.head.cy + uni(-0.05, 0.05), uni(0.05, 0.08), uni(0.18, 0.26), uni(-0.3, 0.0)};
    a.ventricle_right = {a.head.cx + vx, a.head.cy + uni(-0.05, 0.05), uni(0.05, 0.08), uni(0.18, 0.26), uni(0.0, 0.3)};
    const int n_blobs = 6;
    for (int i = 0; i < n_blobs; ++i) {
        a.gray_blobs.push_back({uni(-0.45, 0.45), uni(-0.5, 0.5), uni(0.06, 0.12), uni(0.0, 2.0 * std::numbers::pi)});
    }
    return a;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (auto& w : k) {
        w /= sum;
    }
    return k;
}

// Separable blur with edge replication.
void blur(std::vector<double>& img, std::int64_t h, std::int64_t w, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const auto radius = static_cast<std::int64_t>(k.size() / 2);
    std::vector<double> tmp(img.size());
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::int64_t d = -radius; d <= radius; ++d) {
                const auto cc = std::clamp(c + d, std::int64_t{0}, w - 1);
                acc += k[static_cast<std::size_t>(d + radius)] * img[static_cast<std::size_t>(r * w + cc)];
            }
            tmp[static_cast<std::size_t>(r * w + c)] = acc;
        }
    }
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::int64_t d = -radius; d <= radius; ++d) {
                const auto rr = std::clamp(r + d, std::int64_t{0}, h - 1);
                acc += k[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(rr * w + c)];
            }
            img[static_cast<std::size_t>(r * w + c)] = acc;
        }
    }
}

SlicePair render_slice(const SubjectAnatomy& anatomy, const std::string& subject_id, std::int64_t slice_index,
                       std::int64_t n_slices, Canvas canvas, double lesion_rate, std::mt19937_64& rng) {
    const auto h = canvas.height;
    const auto w = canvas.width;
    const double scale_px = static_cast<double>(std::min(h, w)) / 64.0;
    const double z = (static_cast<double>(slice_index) + 0.5) / static_cast<double>(n_slices) - 0.5;
    const double extent = std::sqrt(std::max(0.2, 1.0 - (z / 0.62) * (z / 0.62)));
    const Ellipse head = anatomy.head.scaled(extent);
    const Ellipse brain = head.scaled(anatomy.brain_fraction);
    const Ellipse deep = head.scaled(anatomy.brain_fraction * anatomy.cortex_fraction);
    const double ventricle_size = std::max(0.0, 1.0 - 1.8 * std::abs(z));

    std::normal_distribution<double> noise(0.0, 0.04);
    std::vector<double> src(static_cast<std::size_t>(h * w), kBackground);
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            const double u = (static_cast<double>(c) + 0.5) / static_cast<double>(w) * 2.0 - 1.0;
            const double v = (static_cast<double>(r) + 0.5) / static_cast<double>(h) * 2.0 - 1.0;
            double value = kBackground;
            if (head.level(u, v) < 1.0) {
                value = kScalp;
                if (brain.level(u, v) < 1.0) {
                    value = deep.level(u, v) < 1.0 ? kWhiteMatter : kGrayMatter;
                    for (const auto& b : anatomy.gray_blobs) {
                        const double bx = b.cx * extent + 0.05 * std::sin(b.phase + 6.0 * z);
                        const double by = b.cy * extent + 0.05 * std::cos(b.phase + 6.0 * z);
                        if ((u - bx) * (u - bx) + (v - by) * (v - by) < b.radius * b.radius) {
                            value = kGrayMatter;
                        }
                    }
                    if (ventricle_size > 0.0 && (anatomy.ventricle_left.scaled(ventricle_size).level(u, v) < 1.0 ||
                                                 anatomy.ventricle_right.scaled(ventricle_size).level(u, v) < 1.0)) {
                        value = kCsf;
                    }
                }
                value += noise(rng);
            }
            src[static_cast<std::size_t>(r * w + c)] = value;
        }
    }
    blur(src, h, w, 0.8 * scale_px);
    for (auto& v : src) {
        v = std::clamp(v, static_cast<double>(kBackground), static_cast<double>(kSourceCeiling));
    }

    // Lesions: truncated Gaussian bumps inside the deep white matter.
    struct Lesion {
        double row, col, radius;
    };
    std::vector<Lesion> lesions;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    if (U(rng) < lesion_rate) {
        const int count = 1 + static_cast<int>(std::min(3.0, std::floor(U(rng) * 4.0)));
        for (int i = 0; i < count; ++i) {
            for (int attempt = 0; attempt < 64; ++attempt) {
                const double u = -1.0 + 2.0 * U(rng);
                const double v = -1.0 + 2.0 * U(rng);
                if (deep.scaled(0.85).level(u, v) >= 1.0) {
                    continue;
                }
                const double col = (u + 1.0) / 2.0 * static_cast<double>(w) - 0.5;
                const double row = (v + 1.0) / 2.0 * static_cast<double>(h) - 0.5;
                lesions.push_back({row, col, (2.0 + 2.0 * U(rng)) * scale_px});
                break;
            }
        }
    }

    Mask mask(h, w);
    std::vector<double> profile(src.size(), 0.0);
    std::vector<std::vector<double>> bumps;
    for (const auto& lesion : lesions) {
        std::vector<double> g(src.size(), 0.0);
        for (std::int64_t r = 0; r < h; ++r) {
            for (std::int64_t c = 0; c < w; ++c) {
                const double d2 = (r - lesion.row) * (r - lesion.row) + (c - lesion.col) * (c - lesion.col);
                if (d2 <= lesion.radius * lesion.radius) {
                    const auto idx = static_cast<std::size_t>(r * w + c);
                    g[idx] = std::exp(-2.0 * d2 / (lesion.radius * lesion.radius));
                    mask.set(r, c, true);
                    src[idx] = std::max(static_cast<double>(kBackground), src[idx] - kLesionSourceCue * g[idx]);
                }
            }
        }
        bumps.push_back(std::move(g));
    }

    Image source(h, w);
    Image target(h, w);
    for (std::size_t i = 0; i < src.size(); ++i) {
        source.pixels()[i] = static_cast<float>(src[i]);
        target.pixels()[i] = phantom_remap(source.pixels()[i]);
    }
    for (const auto& g : bumps) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (g[i] > 0.0) {
                const double t = target.pixels()[i];
                target.pixels()[i] = static_cast<float>(std::min(1.0, t + (kPhantomLesionPeak - t) * g[i]));
            }
        }
    }

    SlicePair pair;
    pair.source = std::move(source);
    pair.target = std::move(target);
    pair.prior_mask = std::move(mask);
    pair.subject_id = subject_id;
    pair.slice_index = slice_index;
    return pair;
}

std::string subject_name(std::int64_t index) {
    std::ostringstream name;
    name << "phantom_" << std::setw(3) << std::setfill('0') << index;
    return name.str();
}

}  // namespace

DatasetManifest generate_phantom_dataset(const PhantomOptions& options) {
    if (options.n_subjects < 1 || options.slices_per_subject < 1) {
        throw std::invalid_argument("phantom needs at least one subject and one slice");
    }
    if (options.canvas.height < 8 || options.canvas.width < 8) {
        throw std::invalid_argument("phantom canvas must be at least 8x8");
    }
    if (options.lesion_rate < 0.0 || options.lesion_rate > 1.0) {
        throw std::invalid_argument("lesion_rate must lie in [0, 1]");
    }
    if (options.n_test_subjects < 0 || options.n_test_subjects >= options.n_subjects) {
        throw std::invalid_argument("n_test_subjects must leave at least one training subject");
    }
    DatasetManifest manifest;
    manifest.canvas = options.canvas;
    for (std::int64_t s = 0; s < options.n_subjects; ++s) {
        std::mt19937_64 rng(splitmix(options.seed ^ splitmix(static_cast<std::uint64_t>(s) + 1)));
        const auto anatomy = draw_anatomy(rng);
        const auto id = subject_name(s);
        const Split split = s >= options.n_subjects - options.n_test_subjects ? Split::test : Split::train;
        manifest.normalization[id] = SubjectNormalization{};
        for (std::int64_t k = 0; k < options.slices_per_subject; ++k) {
            manifest.entries.push_back(
                {render_slice(anatomy, id, k, options.slices_per_subject, options.canvas, options.lesion_rate, rng),
                 split});
        }
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Manifest persistence
// ---------------------------------------------------------------------------

std::filesystem::path write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir) {
    validate_manifest(manifest);
    namespace fs = std::filesystem;
    fs::create_directories(dir / "slices");
    const auto manifest_path = dir / "manifest.jsonl";
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + manifest_path.string());
    }
    for (const auto& entry : manifest.entries) {
        const auto& pair = entry.pair;
        std::ostringstream stem;
        stem << pair.subject_id << "_" << std::setw(4) << std::setfill('0') << pair.slice_index;
        const fs::path source_rel = fs::path("slices") / (stem.str() + "_source.fgsb");
        const fs::path target_rel = fs::path("slices") / (stem.str() + "_target.fgsb");
        io::write_raw(dir / source_rel, pair.source);
        io::write_raw(dir / target_rel, pair.target);

        nlohmann::ordered_json rec;
        rec["subject_id"] = pair.subject_id;
        rec["slice_index"] = pair.slice_index;
        rec["split"] = to_string(entry.split);
        rec["height"] = pair.source.height();
        rec["width"] = pair.source.width();
        rec["source"] = source_rel.generic_string();
        rec["target"] = target_rel.generic_string();
        if (pair.prior_mask) {
            const fs::path mask_rel = fs::path("slices") / (stem.str() + "_prior.fgsb");
            io::write_mask(dir / mask_rel, *pair.prior_mask);
            rec["prior_mask"] = mask_rel.generic_string();
        } else {
            rec["prior_mask"] = nullptr;
        }
        const auto norm_it = manifest.normalization.find(pair.subject_id);
        const SubjectNormalization norm = norm_it != manifest.normalization.end() ? norm_it->second : SubjectNormalization{};
        rec["normalization"] = {{"source", {{"lo", norm.source.lo}, {"hi", norm.source.hi}}},
                                {"target", {{"lo", norm.target.lo}, {"hi", norm.target.hi}}}};
        out << rec.dump() << '\n';
    }
    return manifest_path;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw std::runtime_error("cannot open manifest " + manifest_path.string());
    }
    const auto root = manifest_path.parent_path();
    DatasetManifest manifest;
    bool have_canvas = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto where = manifest_path.string() + ":" + std::to_string(line_no);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        try {
            ManifestEntry entry;
            entry.split = split_from_string(rec.at("split").get<std::string>());
            auto& pair = entry.pair;
            pair.subject_id = rec.at("subject_id").get<std::string>();
            pair.slice_index = rec.at("slice_index").get<std::int64_t>();
            const Canvas shape{rec.at("height").get<std::int64_t>(), rec.at("width").get<std::int64_t>()};
            pair.source = io::read_slice(root / rec.at("source").get<std::string>());
            pair.target = io::read_slice(root / rec.at("target").get<std::string>());
            if (rec.contains("prior_mask") && !rec["prior_mask"].is_null()) {
                pair.prior_mask = io::read_mask(root / rec["prior_mask"].get<std::string>());
            }
            if (pair.source.height() != shape.height || pair.source.width() != shape.width) {
                throw std::runtime_error("decoded source does not match the declared shape");
            }
            if (!have_canvas) {
                manifest.canvas = shape;
                have_canvas = true;
            } else if (!(shape == manifest.canvas)) {
                throw std::runtime_error("slice shape differs from the rest of the manifest");
            }
            if (rec.contains("normalization")) {
                const auto& n = rec["normalization"];
                manifest.normalization[pair.subject_id] = SubjectNormalization{
                    {n.at("source").at("lo").get<float>(), n.at("source").at("hi").get<float>()},
                    {n.at("target").at("lo").get<float>(), n.at("target").at("hi").get<float>()}};
            }
            manifest.entries.push_back(std::move(entry));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    validate_manifest(manifest);
    return manifest;
}

}  // namespace fgsb
