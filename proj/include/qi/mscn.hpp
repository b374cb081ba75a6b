#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "qi/image.hpp"
#include "qi/preprocess.hpp"

namespace qi {

/// Circularly symmetric Gaussian weighting window, normalized to unit volume.
struct GaussianWindow {
    int half_k = 3;  // rows extend -K..K
    int half_l = 3;  // cols extend -L..L
    std::vector<double> weights;  // (2K+1) x (2L+1), row-major

    double at(int k, int l) const {
        return weights[static_cast<size_t>(k + half_k) * (2 * half_l + 1) + (l + half_l)];
    }
};

/// Weights proportional to exp(-(k^2+l^2) / (2 sigma_w^2)), sum 1.
/// Defaults: 7x7 window (K = L = 3) spanning +-3 sigma_w with sigma_w = 7/6.
inline GaussianWindow gaussian_window(int half_k = 3, int half_l = 3, double sigma_w = 7.0 / 6.0) {
    if (half_k < 0 || half_l < 0) throw std::invalid_argument("window half-extents must be >= 0");
    if (sigma_w <= 0.0) throw std::invalid_argument("window sigma must be positive");
    GaussianWindow win;
    win.half_k = half_k;
    win.half_l = half_l;
    win.weights.resize(static_cast<size_t>(2 * half_k + 1) * (2 * half_l + 1));
    double sum = 0.0;
    for (int k = -half_k; k <= half_k; ++k) {
        for (int l = -half_l; l <= half_l; ++l) {
            const double w = std::exp(-(static_cast<double>(k) * k + static_cast<double>(l) * l) /
                                      (2.0 * sigma_w * sigma_w));
            win.weights[static_cast<size_t>(k + half_k) * (2 * half_l + 1) + (l + half_l)] = w;
            sum += w;
        }
    }
    for (double& w : win.weights) w /= sum;
    return win;
}

struct LocalStats {
    std::vector<double> mu;     // weighted local mean
    std::vector<double> sigma;  // weighted local std, >= 0
};

/// Windowed local mean and standard deviation with symmetric-reflection
/// borders. Sigma uses the definition form (deviations about the local mean);
/// tiny negative variances from rounding clamp to zero.
inline LocalStats local_stats(const Image& img, const GaussianWindow& win) {
    const int w = img.width, h = img.height;
    LocalStats out;
    out.mu.resize(img.size());
    out.sigma.resize(img.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double mu = 0.0;
            for (int k = -win.half_k; k <= win.half_k; ++k) {
                const int rr = reflect_index(r + k, h);
                for (int l = -win.half_l; l <= win.half_l; ++l)
                    mu += win.at(k, l) * img.at(rr, reflect_index(c + l, w));
            }
            double var = 0.0;
            for (int k = -win.half_k; k <= win.half_k; ++k) {
                const int rr = reflect_index(r + k, h);
                for (int l = -win.half_l; l <= win.half_l; ++l) {
                    const double d = img.at(rr, reflect_index(c + l, w)) - mu;
                    var += win.at(k, l) * d * d;
                }
            }
            const size_t idx = static_cast<size_t>(r) * w + c;
            out.mu[idx] = mu;
            out.sigma[idx] = std::sqrt(std::max(var, 0.0));
        }
    }
    return out;
}

/// Per-pixel MSCN coefficients with the local-statistics fields that
/// produced them.
struct MscnField {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    std::vector<double> mu;
    std::vector<double> sigma;
    double c_constant = 1.0;

    double at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
    size_t size() const { return values.size(); }
};

inline MscnField mscn(const Image& img, const GaussianWindow& win, double c = 1.0) {
    LocalStats st = local_stats(img, win);
    MscnField field;
    field.width = img.width;
    field.height = img.height;
    field.c_constant = c;
    field.values.resize(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        field.values[i] = (img.pixels[i] - st.mu[i]) / (st.sigma[i] + c);
    field.mu = std::move(st.mu);
    field.sigma = std::move(st.sigma);
    return field;
}

inline MscnField mscn(const Image& img, double c = 1.0) { return mscn(img, gaussian_window(), c); }

/// Empirical probability density of MSCN coefficients.
struct Pdfmc {
    std::vector<double> bin_edges;  // bins+1 monotone edges
    std::vector<double> densities;  // density per bin, integrates to 1
    long sample_count = 0;
};

inline Pdfmc pdfmc_from_values(std::span<const double> values, int bins) {
    if (bins < 2) throw std::invalid_argument("pdfmc needs at least 2 bins");
    if (values.empty()) throw std::invalid_argument("pdfmc of empty field");
    auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    double lo = *mn_it, hi = *mx_it;
    if (hi - lo <= 0.0) {
        // degenerate support: center a unit-wide range on the single value
        lo -= 0.5;
        hi += 0.5;
    }
    Pdfmc out;
    out.sample_count = static_cast<long>(values.size());
    out.bin_edges.resize(bins + 1);
    const double width = (hi - lo) / bins;
    for (int b = 0; b <= bins; ++b) out.bin_edges[b] = lo + width * b;
    std::vector<long> counts(bins, 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        ++counts[b];
    }
    out.densities.resize(bins);
    for (int b = 0; b < bins; ++b)
        out.densities[b] = static_cast<double>(counts[b]) / (static_cast<double>(values.size()) * width);
    return out;
}

inline Pdfmc pdfmc_histogram(const MscnField& field, int bins) {
    return pdfmc_from_values(field.values, bins);
}

}  // namespace qi
