#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qi/image.hpp"
#include "qi/stats.hpp"

namespace qi {

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;
};

/// Region definition for CNR: explicit roi/background rectangles, or an
/// automatic Otsu split (foreground = roi, complement = background).
struct RegionSpec {
    enum class Mode { Auto, Explicit };
    Mode mode = Mode::Auto;
    Rect roi;
    Rect background;
};

namespace detail {

inline void histogram_range(const Image& img, double& lo, double& hi) {
    switch (img.range) {
        case ValueRange::Normalized: lo = 0.0; hi = 1.0; return;
        case ValueRange::Bits8: lo = 0.0; hi = 255.0; return;
        case ValueRange::Bits16: lo = 0.0; hi = 65535.0; return;
        case ValueRange::Real: {
            const auto [a, b] = std::minmax_element(img.pixels.begin(), img.pixels.end());
            lo = *a;
            hi = *b;
            if (hi - lo <= 0.0) {
                lo -= 0.5;
                hi += 0.5;
            }
            return;
        }
    }
}

inline std::vector<long> histogram(const Image& img, int bins, double lo, double hi) {
    std::vector<long> counts(bins, 0);
    const double scale = bins / (hi - lo);
    for (double v : img.pixels) {
        int b = static_cast<int>((v - lo) * scale);
        b = std::clamp(b, 0, bins - 1);
        ++counts[b];
    }
    return counts;
}

inline void check_rect(const Rect& r, const Image& img, const char* name) {
    if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > img.width ||
        r.y + r.h > img.height)
        throw std::invalid_argument(std::string(name) + " rectangle outside image bounds");
}

inline bool rects_overlap(const Rect& a, const Rect& b) {
    return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

}  // namespace detail

/// Otsu threshold over a histogram of the declared value range; returns the
/// value separating background (<) from foreground (>=).
inline double otsu_threshold(const Image& img, int bins = 256) {
    double lo, hi;
    detail::histogram_range(img, lo, hi);
    const std::vector<long> counts = detail::histogram(img, bins, lo, hi);
    const double total = static_cast<double>(img.pixels.size());

    double sum_all = 0.0;
    for (int b = 0; b < bins; ++b) sum_all += b * static_cast<double>(counts[b]);

    double best_between = -1.0;
    int best_bin = bins / 2;
    double w0 = 0.0, sum0 = 0.0;
    for (int b = 0; b < bins - 1; ++b) {
        w0 += static_cast<double>(counts[b]);
        if (w0 == 0.0) continue;
        const double w1 = total - w0;
        if (w1 == 0.0) break;
        sum0 += b * static_cast<double>(counts[b]);
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_between) {
            best_between = between;
            best_bin = b;
        }
    }
    return lo + (hi - lo) * (best_bin + 1) / bins;
}

/// Contrast-to-noise ratio |mean(roi) - mean(bg)| / std(bg), population std.
/// Throws std::domain_error when the background is constant (undefined CNR).
inline double cnr(const Image& img, const RegionSpec& regions = {}) {
    std::vector<double> roi, bg;
    if (regions.mode == RegionSpec::Mode::Explicit) {
        detail::check_rect(regions.roi, img, "roi");
        detail::check_rect(regions.background, img, "background");
        if (detail::rects_overlap(regions.roi, regions.background))
            throw std::invalid_argument("roi and background rectangles must be disjoint");
        for (int r = regions.roi.y; r < regions.roi.y + regions.roi.h; ++r)
            for (int c = regions.roi.x; c < regions.roi.x + regions.roi.w; ++c)
                roi.push_back(img.at(r, c));
        for (int r = regions.background.y; r < regions.background.y + regions.background.h; ++r)
            for (int c = regions.background.x; c < regions.background.x + regions.background.w; ++c)
                bg.push_back(img.at(r, c));
    } else {
        const double thresh = otsu_threshold(img);
        for (double v : img.pixels) (v >= thresh ? roi : bg).push_back(v);
        if (roi.empty() || bg.empty())
            throw std::domain_error("otsu split produced an empty region");
    }
    if (bg.size() < 2) throw std::invalid_argument("background region needs at least 2 pixels");
    if (roi.empty()) throw std::invalid_argument("roi region is empty");
    const double sd = stddev_pop(bg);
    if (sd == 0.0) throw std::domain_error("undefined CNR: constant background");
    return std::fabs(mean(roi) - mean(bg)) / sd;
}

/// Tenengrad sharpness: mean Sobel gradient magnitude over interior pixels.
inline double tenengrad(const Image& img) {
    if (img.width < 3 || img.height < 3)
        throw std::invalid_argument("tenengrad needs an image of at least 3x3");
    static constexpr int gx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static constexpr int gy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    double acc = 0.0;
    long count = 0;
    for (int r = 1; r + 1 < img.height; ++r) {
        for (int c = 1; c + 1 < img.width; ++c) {
            double sx = 0.0, sy = 0.0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const double v = img.at(r + dr, c + dc);
                    sx += gx[dr + 1][dc + 1] * v;
                    sy += gy[dr + 1][dc + 1] * v;
                }
            acc += std::sqrt(sx * sx + sy * sy);
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

/// Shannon entropy in bits of the binned histogram over the declared value
/// range; 0 log 0 := 0.
inline double entropy(const Image& img, int bins = 256) {
    if (img.pixels.empty()) throw std::invalid_argument("entropy of empty image");
    double lo, hi;
    detail::histogram_range(img, lo, hi);
    const std::vector<long> counts = detail::histogram(img, bins, lo, hi);
    const double n = static_cast<double>(img.pixels.size());
    double h = 0.0;
    for (long c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

enum class MetricOrientation { HigherBetter, LowerBetter };

struct MetricDiff {
    std::string name;
    MetricOrientation orientation = MetricOrientation::HigherBetter;
    std::vector<double> per_frame_diffs;  // z(post) - z(pre), sign-adjusted
    double median = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    bool skipped = false;  // pooled std was zero
};

struct MetricDiffReport {
    std::vector<MetricDiff> metrics;
};

/// Normalized post-minus-pre protocol: each metric's values are z-scored
/// against the pooled pre+post population, frame diffs are z(post) - z(pre),
/// and lower-is-better metrics are negated so improvement is always positive.
inline MetricDiff metric_diff(const std::string& name, MetricOrientation orientation,
                              std::span<const double> pre, std::span<const double> post) {
    if (pre.size() != post.size() || pre.empty())
        throw std::invalid_argument("metric_diff needs equal-length nonempty pre/post");
    MetricDiff out;
    out.name = name;
    out.orientation = orientation;

    std::vector<double> pooled(pre.begin(), pre.end());
    pooled.insert(pooled.end(), post.begin(), post.end());
    const double m = mean(pooled);
    const double sd = stddev_pop(pooled);
    if (sd == 0.0) {
        out.skipped = true;
        return out;
    }
    const double sign = orientation == MetricOrientation::LowerBetter ? -1.0 : 1.0;
    out.per_frame_diffs.reserve(pre.size());
    for (size_t i = 0; i < pre.size(); ++i)
        out.per_frame_diffs.push_back(sign * ((post[i] - m) / sd - (pre[i] - m) / sd));
    out.median = median(out.per_frame_diffs);
    out.mean = mean(out.per_frame_diffs);
    out.stddev = stddev_pop(out.per_frame_diffs);
    return out;
}

}  // namespace qi
