#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qi/image.hpp"

namespace qi {

/// Enhancement pipeline settings. Steps always run in the fixed order
/// normalize -> gamma -> gaussian; each can be disabled.
struct PreprocessConfig {
    bool normalize = true;
    double gamma = 0.8;           // <= 0 disables the step
    double gaussian_sigma = 1.0;  // <= 0 disables the step
};

/// Mirror index for out-of-range access: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
/// (symmetric reflection, edge sample included).
inline int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

/// Affine map of pixel values onto [0,1]. A constant input maps to zeros and
/// sets the degenerate flag instead of failing, so batch runs can proceed.
inline Image normalize_gray(const Image& img) {
    if (img.pixels.empty()) throw std::invalid_argument("normalize_gray on empty image");
    const auto [mn_it, mx_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const double mn = *mn_it, mx = *mx_it;
    Image out = img;
    out.range = ValueRange::Normalized;
    if (mx - mn <= 0.0) {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0);
        out.degenerate = true;
        return out;
    }
    const double scale = 1.0 / (mx - mn);
    for (double& v : out.pixels) v = (v - mn) * scale;
    return out;
}

/// out = in^gamma pixelwise; requires values in [0,1].
inline Image gamma_correct(const Image& img, double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
    for (double v : img.pixels)
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("gamma_correct input outside [0,1]");
    Image out = img;
    if (gamma == 1.0) return out;
    for (double& v : out.pixels) v = std::pow(v, gamma);
    return out;
}

/// Sampled normalized 1D Gaussian kernel of radius ceil(3*sigma).
inline std::vector<double> gaussian_kernel_1d(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

/// Isotropic Gaussian blur, computed as two 1D passes (the normalized 2D
/// kernel is exactly the outer product of the normalized 1D kernels).
/// Borders use symmetric reflection.
inline Image gaussian_filter(const Image& img, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_filter sigma must be positive");
    const std::vector<double> k = gaussian_kernel_1d(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int w = img.width, h = img.height;

    std::vector<double> tmp(img.pixels.size());
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += k[d + radius] * img.at(r, reflect_index(c + d, w));
            tmp[static_cast<size_t>(r) * w + c] = acc;
        }
    }
    Image out = img;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += k[d + radius] * tmp[static_cast<size_t>(reflect_index(r + d, h)) * w + c];
            out.at(r, c) = acc;
        }
    }
    return out;
}

/// normalize -> gamma -> gaussian, honoring the enabled flags.
inline Image preprocess_pipeline(const Image& img, const PreprocessConfig& cfg) {
    Image out = img;
    if (cfg.normalize) out = normalize_gray(out);
    if (cfg.gamma > 0.0 && cfg.gamma != 1.0) out = gamma_correct(out, cfg.gamma);
    if (cfg.gaussian_sigma > 0.0) out = gaussian_filter(out, cfg.gaussian_sigma);
    return out;
}

}  // namespace qi
