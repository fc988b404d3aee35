#include "fgsb/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fgsb/slice_io.hpp"

namespace fgsb::plots {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    void widen() {
        if (!(hi > lo)) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

void open_svg(std::ostringstream& svg, const std::string& title) {
    svg << std::fixed << std::setprecision(2);
    svg << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kWidth << R"(" height=")" << kHeight
        << R"(" font-family="sans-serif" font-size="12">)" << '\n';
    svg << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    svg << R"(<text x=")" << kWidth / 2 << R"(" y="22" text-anchor="middle" font-size="15">)" << escape(title)
        << "</text>\n";
}

void axes(std::ostringstream& svg, const Range& y, const std::string& y_label) {
    const double x0 = kLeft;
    const double y0 = kHeight - kBottom;
    svg << R"(<line x1=")" << x0 << R"(" y1=")" << kTop << R"(" x2=")" << x0 << R"(" y2=")" << y0
        << R"(" stroke="black"/>)" << '\n';
    svg << R"(<line x1=")" << x0 << R"(" y1=")" << y0 << R"(" x2=")" << kWidth - kRight << R"(" y2=")" << y0
        << R"(" stroke="black"/>)" << '\n';
    for (int k = 0; k <= 4; ++k) {
        const double v = y.lo + (y.hi - y.lo) * k / 4.0;
        const double py = y0 - (y0 - kTop) * k / 4.0;
        svg << R"(<text x=")" << x0 - 6 << R"(" y=")" << py + 4 << R"(" text-anchor="end">)" << num(v) << "</text>\n";
        svg << R"(<line x1=")" << x0 << R"(" y1=")" << py << R"(" x2=")" << kWidth - kRight << R"(" y2=")" << py
            << R"(" stroke="#dddddd"/>)" << '\n';
    }
    svg << R"svg(<text transform="translate(16,)svg" << (kTop + y0) / 2 << R"svg() rotate(-90)" text-anchor="middle">)svg"
        << escape(y_label) << "</text>\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                      const std::vector<Series>& series) {
    Range x{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
    Range y = x;
    for (const auto& s : series) {
        for (const auto& [px, py] : s.points) {
            if (!std::isfinite(px) || !std::isfinite(py)) {
                continue;
            }
            x.lo = std::min(x.lo, px);
            x.hi = std::max(x.hi, px);
            y.lo = std::min(y.lo, py);
            y.hi = std::max(y.hi, py);
        }
    }
    if (x.lo > x.hi) {
        x = {0.0, 1.0};
        y = {0.0, 1.0};
    }
    x.widen();
    y.widen();
    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, y, "");
    const double x0 = kLeft;
    const double y0 = kHeight - kBottom;
    const double pw = kWidth - kRight - kLeft;
    const double ph = y0 - kTop;
    for (int k = 0; k <= 4; ++k) {
        const double v = x.lo + (x.hi - x.lo) * k / 4.0;
        svg << R"(<text x=")" << x0 + pw * k / 4.0 << R"(" y=")" << y0 + 16 << R"(" text-anchor="middle">)" << num(v)
            << "</text>\n";
    }
    svg << R"(<text x=")" << x0 + pw / 2 << R"(" y=")" << kHeight - 12 << R"(" text-anchor="middle">)"
        << escape(x_label) << "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* colour = kPalette[i % std::size(kPalette)];
        svg << R"(<polyline fill="none" stroke=")" << colour << R"(" stroke-width="1.5" points=")";
        for (const auto& [px, py] : series[i].points) {
            if (std::isfinite(px) && std::isfinite(py)) {
                svg << x0 + pw * (px - x.lo) / (x.hi - x.lo) << ',' << y0 - ph * (py - y.lo) / (y.hi - y.lo) << ' ';
            }
        }
        svg << "\"/>\n";
        const double ly = kTop + 16.0 * static_cast<double>(i);
        svg << R"(<rect x=")" << kWidth - kRight + 12 << R"(" y=")" << ly << R"(" width="12" height="3" fill=")"
            << colour << "\"/>\n";
        svg << R"(<text x=")" << kWidth - kRight + 30 << R"(" y=")" << ly + 5 << "\">" << escape(series[i].name)
            << "</text>\n";
    }
    svg << "</svg>\n";
    write_file(path, svg.str());
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                     const std::vector<Bar>& bars) {
    Range y{0.0, 0.0};
    for (const auto& b : bars) {
        y.lo = std::min(y.lo, b.value - b.error);
        y.hi = std::max(y.hi, b.value + b.error);
    }
    y.widen();
    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, y, y_label);
    const double y0 = kHeight - kBottom;
    const double pw = kWidth - kRight - kLeft;
    const double ph = y0 - kTop;
    const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
    auto to_py = [&](double v) { return y0 - ph * (v - y.lo) / (y.hi - y.lo); };
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
        const double top = to_py(std::max(b.value, 0.0));
        const double bottom = to_py(std::min(b.value, 0.0));
        svg << R"(<rect x=")" << cx - slot * 0.3 << R"(" y=")" << top << R"(" width=")" << slot * 0.6
            << R"(" height=")" << bottom - top << R"(" fill=")" << kPalette[i % std::size(kPalette)] << "\"/>\n";
        if (b.error > 0.0) {
            svg << R"(<line x1=")" << cx << R"(" y1=")" << to_py(b.value - b.error) << R"(" x2=")" << cx
                << R"(" y2=")" << to_py(b.value + b.error) << R"(" stroke="black"/>)" << '\n';
        }
        svg << R"(<text x=")" << cx << R"(" y=")" << top - 4 << R"(" text-anchor="middle">)" << num(b.value)
            << "</text>\n";
        svg << R"(<text x=")" << cx << R"(" y=")" << y0 + 16 << R"(" text-anchor="middle">)" << escape(b.label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    write_file(path, svg.str());
}

void write_image_grid(const std::filesystem::path& path, const std::vector<std::vector<Image>>& rows) {
    constexpr std::int64_t border = 2;
    if (rows.empty() || rows.front().empty()) {
        throw std::invalid_argument("write_image_grid: nothing to draw");
    }
    const auto h = rows.front().front().height();
    const auto w = rows.front().front().width();
    std::size_t cols = 0;
    for (const auto& row : rows) {
        cols = std::max(cols, row.size());
        for (const auto& img : row) {
            if (img.height() != h || img.width() != w) {
                throw std::invalid_argument("write_image_grid: tiles differ in shape");
            }
        }
    }
    const auto n_rows = static_cast<std::int64_t>(rows.size());
    const auto n_cols = static_cast<std::int64_t>(cols);
    Image canvas(n_rows * (h + border) + border, n_cols * (w + border) + border, 1.0F);
    for (std::int64_t r = 0; r < n_rows; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(row.size()); ++c) {
            const auto& img = row[static_cast<std::size_t>(c)];
            const auto top = border + r * (h + border);
            const auto left = border + c * (w + border);
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    canvas.at(top + y, left + x) = std::clamp(img.at(y, x), -1.0F, 1.0F);
                }
            }
        }
    }
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    io::write_png8(path, canvas);
}

}  // namespace fgsb::plots
