#include "fgsb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fgsb/dataset.hpp"

namespace fgsb::metrics {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(who) + ": image shapes differ");
    }
}

bool selected(const Mask* region, std::size_t i) { return region == nullptr || region->values()[i] != 0; }

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> ssim_kernel() {
    std::vector<double> k(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        k[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) {
        v /= sum;
    }
    return k;
}

// Valid-mode separable filtering: output is (h - 10) x (w - 10).
std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h, std::int64_t w,
                                 const std::vector<double>& k) {
    const std::int64_t oh = h - kWindow + 1;
    const std::int64_t ow = w - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * ow));
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < ow; ++c) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) {
                acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(r * w + c + i)];
            }
            rows[static_cast<std::size_t>(r * ow + c)] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t c = 0; c < ow; ++c) {
            double acc = 0.0;
            for (int i = 0; i < kWindow; ++i) {
                acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((r + i) * ow + c)];
            }
            out[static_cast<std::size_t>(r * ow + c)] = acc;
        }
    }
    return out;
}

}  // namespace

double psnr(const Image& x_hat, const Image& x_ref, double data_range, const Mask* region) {
    require_same_shape(x_hat, x_ref, "psnr");
    if (!(data_range > 0.0)) {
        throw std::invalid_argument("psnr: data_range must be positive");
    }
    double sse = 0.0;
    std::size_t n = 0;
    const auto a = x_hat.pixels();
    const auto b = x_ref.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (selected(region, i)) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            sse += d * d;
            ++n;
        }
    }
    if (n == 0) {
        throw std::invalid_argument("psnr: empty evaluation region");
    }
    const double mse = sse / static_cast<double>(n);
    if (mse == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

double ssim(const Image& x_hat, const Image& x_ref, double data_range) {
    require_same_shape(x_hat, x_ref, "ssim");
    const auto h = x_hat.height();
    const auto w = x_hat.width();
    if (h < kWindow || w < kWindow) {
        throw std::invalid_argument("ssim: images must be at least 11x11");
    }
    const auto k = ssim_kernel();
    const auto n = static_cast<std::size_t>(h * w);
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = x_hat.pixels()[i];
        y[i] = x_ref.pixels()[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto mxx = filter_valid(xx, h, w, k);
    const auto myy = filter_valid(yy, h, w, k);
    const auto mxy = filter_valid(xy, h, w, k);
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = mxx[i] - mx[i] * mx[i];
        const double vy = myy[i] - my[i] * my[i];
        const double cov = mxy[i] - mx[i] * my[i];
        sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return sum / static_cast<double>(mx.size());
}

double nrmse(const Image& x_hat, const Image& x_ref, const Mask* region) {
    require_same_shape(x_hat, x_ref, "nrmse");
    double err = 0.0;
    double ref = 0.0;
    const auto a = x_hat.pixels();
    const auto b = x_ref.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (selected(region, i)) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            err += d * d;
            ref += static_cast<double>(b[i]) * static_cast<double>(b[i]);
        }
    }
    if (ref == 0.0) {
        throw std::invalid_argument("nrmse: reference norm is zero");
    }
    return std::sqrt(err) / std::sqrt(ref);
}

Overlap dice_recall(const Mask& pred, const Mask& truth) {
    if (!pred.same_shape(truth)) {
        throw std::invalid_argument("dice_recall: mask shapes differ");
    }
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t both = 0;
    const auto p = pred.values();
    const auto t = truth.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 1 || t[i] > 1) {
            throw std::invalid_argument("dice_recall: masks must be binary");
        }
        a += p[i];
        b += t[i];
        both += static_cast<std::size_t>(p[i] & t[i]);
    }
    Overlap out;
    out.dice = a + b == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
    out.recall = b == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(b);
    return out;
}

Image to_unit_range(const Image& image) {
    Image out(image.height(), image.width());
    for (std::size_t i = 0; i < image.size(); ++i) {
        out.pixels()[i] = static_cast<float>((static_cast<double>(image.pixels()[i]) + 1.0) / 2.0);
    }
    return out;
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) {
        return s;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

SliceMetrics evaluate_slice(const std::string& name, const Image& pred, const Image& ref, const Mask* truth_mask,
                            const EvaluationOptions& options) {
    require_same_shape(pred, ref, "evaluate_slice");
    SliceMetrics m;
    m.name = name;
    const auto pred01 = to_unit_range(pred);
    const auto ref01 = to_unit_range(ref);
    std::optional<Mask> region;
    if (options.foreground_level) {
        region = Mask(ref.height(), ref.width());
        for (std::int64_t r = 0; r < ref.height(); ++r) {
            for (std::int64_t c = 0; c < ref.width(); ++c) {
                region->set(r, c, ref.at(r, c) > *options.foreground_level);
            }
        }
        if (region->count() == 0) {
            region.reset();
        }
    }
    const Mask* roi = region ? &*region : nullptr;
    m.psnr = psnr(pred01, ref01, 1.0, roi);
    m.ssim = ssim(pred01, ref01, 1.0);
    m.nrmse = nrmse(pred01, ref01, roi);

    if (options.lesion_threshold || truth_mask != nullptr) {
        const float threshold = options.lesion_threshold.value_or(0.7F);
        const Mask truth = truth_mask != nullptr ? *truth_mask : extract_prior_mask(ref, threshold);
        const Mask predicted = extract_prior_mask(pred, threshold);
        const auto overlap = dice_recall(predicted, truth);
        m.dice = overlap.dice;
        m.recall = overlap.recall;
        m.has_lesion = truth.count() > 0;
    }
    return m;
}

MetricReport aggregate(std::vector<SliceMetrics> slices) {
    MetricReport report;
    std::vector<double> p, s, n, d, r;
    for (const auto& m : slices) {
        p.push_back(m.psnr);
        s.push_back(m.ssim);
        n.push_back(m.nrmse);
        if (m.dice && m.has_lesion) {
            d.push_back(*m.dice);
            r.push_back(*m.recall);
        }
    }
    report.psnr = summarize(p);
    report.ssim = summarize(s);
    report.nrmse = summarize(n);
    const bool any_lesion_metrics = std::ranges::any_of(slices, [](const SliceMetrics& m) { return m.dice.has_value(); });
    if (any_lesion_metrics) {
        report.dice = summarize(d);
        report.recall = summarize(r);
    }
    report.slices = std::move(slices);
    return report;
}

nlohmann::ordered_json MetricReport::to_json() const {
    auto summary = [](const Summary& s) {
        return nlohmann::ordered_json{{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
    };
    nlohmann::ordered_json out;
    out["aggregate"]["psnr"] = summary(psnr);
    out["aggregate"]["ssim"] = summary(ssim);
    out["aggregate"]["nrmse"] = summary(nrmse);
    if (dice) {
        out["aggregate"]["dice"] = summary(*dice);
        out["aggregate"]["recall"] = summary(*recall);
    }
    out["slices"] = nlohmann::ordered_json::array();
    for (const auto& m : slices) {
        nlohmann::ordered_json row{{"name", m.name}, {"psnr", m.psnr}, {"ssim", m.ssim}, {"nrmse", m.nrmse}};
        if (m.dice) {
            row["dice"] = *m.dice;
            row["recall"] = *m.recall;
            row["has_lesion"] = m.has_lesion;
        }
        out["slices"].push_back(row);
    }
    return out;
}

}  // namespace fgsb::metrics
