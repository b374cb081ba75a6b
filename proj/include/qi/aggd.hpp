#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qi/directional.hpp"
#include "qi/rng.hpp"

namespace qi {

/// rho(alpha) = Gamma(2/a)^2 / (Gamma(1/a) * Gamma(3/a)); strictly increasing
/// on the solver range, which makes the inverse a bracketed root find.
inline double ggd_moment_ratio(double alpha) {
    return std::exp(2.0 * std::lgamma(2.0 / alpha) - std::lgamma(1.0 / alpha) -
                    std::lgamma(3.0 / alpha));
}

inline constexpr double kShapeMin = 0.2;
inline constexpr double kShapeMax = 10.0;
inline constexpr int kShapeGridSize = 10001;

namespace detail {

struct ShapeGrid {
    std::array<double, kShapeGridSize> alpha;
    std::array<double, kShapeGridSize> rho;

    ShapeGrid() {
        const double ratio = kShapeMax / kShapeMin;
        for (int i = 0; i < kShapeGridSize; ++i) {
            alpha[i] = kShapeMin * std::pow(ratio, static_cast<double>(i) / (kShapeGridSize - 1));
            rho[i] = ggd_moment_ratio(alpha[i]);
        }
        alpha.back() = kShapeMax;
    }
};

inline const ShapeGrid& shape_grid() {
    static const ShapeGrid grid;
    return grid;
}

}  // namespace detail

struct ShapeSolution {
    double alpha = 0.0;
    bool clamped = false;  // requested ratio fell outside the attainable range
};

/// Inverse of ggd_moment_ratio: grid bracket followed by bisection on the
/// continuous function until |rho(alpha) - r| < 1e-9. Out-of-range ratios
/// clamp to the nearest endpoint and set the flag.
inline ShapeSolution ggd_ratio_inverse(double r) {
    const auto& grid = detail::shape_grid();
    if (r <= grid.rho.front()) return {kShapeMin, r < grid.rho.front()};
    if (r >= grid.rho.back()) return {kShapeMax, r > grid.rho.back()};

    // binary search for the bracketing grid cell (rho is increasing)
    size_t lo = 0, hi = grid.rho.size() - 1;
    while (hi - lo > 1) {
        const size_t mid = (lo + hi) / 2;
        if (grid.rho[mid] <= r)
            lo = mid;
        else
            hi = mid;
    }
    double a = grid.alpha[lo], b = grid.alpha[hi];
    for (int iter = 0; iter < 200 && b - a > 1e-14 * b; ++iter) {
        const double m = 0.5 * (a + b);
        if (ggd_moment_ratio(m) <= r)
            a = m;
        else
            b = m;
    }
    return {0.5 * (a + b), false};
}

class FitError : public std::runtime_error {
public:
    enum class Kind { TooFewSamples, OneSided, AllZero };

    FitError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Zero-mean AGGD parameters: shape (gamma in the density), left/right scales,
/// and the derived asymmetry eta.
struct AggdParams {
    double gamma_shape = 0.0;
    double beta_left = 0.0;
    double beta_right = 0.0;
    double eta = 0.0;
    long sample_count = 0;
    bool shape_clamped = false;
};

inline double eta(const AggdParams& p) {
    return (p.beta_right - p.beta_left) *
           std::exp(std::lgamma(2.0 / p.gamma_shape) - std::lgamma(1.0 / p.gamma_shape));
}

inline constexpr long kMinFitSamples = 64;

/// Moment-matching AGGD estimate:
///   sigma_l = rms of strictly negative samples, sigma_r = rms of the rest;
///   R-hat generalizes the GGD moment ratio by the sigma_r/sigma_l skew;
///   alpha solves rho(alpha) = R-hat; beta_side = sigma_side *
///   sqrt(Gamma(1/alpha)/Gamma(3/alpha)).
inline AggdParams fit_aggd(std::span<const double> samples, long min_samples = kMinFitSamples) {
    const long n = static_cast<long>(samples.size());
    if (n < min_samples)
        throw FitError(FitError::Kind::TooFewSamples,
                       "AGGD fit needs >= " + std::to_string(min_samples) + " samples, got " +
                           std::to_string(n));
    long n_neg = 0, n_pos = 0, n_zero = 0;
    double ss_neg = 0.0, ss_pos = 0.0, sum_abs = 0.0, sum_sq = 0.0;
    for (double x : samples) {
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite sample in AGGD fit");
        if (x < 0.0) {
            ss_neg += x * x;
            ++n_neg;
        } else {
            ss_pos += x * x;
            ++n_pos;
            if (x == 0.0) ++n_zero;
        }
        sum_abs += std::fabs(x);
        sum_sq += x * x;
    }
    if (n_zero == n) throw FitError(FitError::Kind::AllZero, "all samples are zero");
    if (n_neg == 0 || n_pos == n_zero)
        throw FitError(FitError::Kind::OneSided, "samples must include both signs");

    const double sigma_l = std::sqrt(ss_neg / static_cast<double>(n_neg));
    const double sigma_r = std::sqrt(ss_pos / static_cast<double>(n_pos));
    const double skew_ratio = sigma_r / sigma_l;
    const double r_hat = (sum_abs / n) * (sum_abs / n) / (sum_sq / n);
    const double big_r = r_hat * (skew_ratio * skew_ratio * skew_ratio + 1.0) * (skew_ratio + 1.0) /
                         ((skew_ratio * skew_ratio + 1.0) * (skew_ratio * skew_ratio + 1.0));

    const ShapeSolution sol = ggd_ratio_inverse(big_r);
    const double conv =
        std::sqrt(std::exp(std::lgamma(1.0 / sol.alpha) - std::lgamma(3.0 / sol.alpha)));

    AggdParams p;
    p.gamma_shape = sol.alpha;
    p.beta_left = sigma_l * conv;
    p.beta_right = sigma_r * conv;
    p.sample_count = n;
    p.shape_clamped = sol.clamped;
    p.eta = eta(p);
    return p;
}

/// Seed-deterministic draws from the zero-mean AGGD density: side chosen with
/// probability beta_l/(beta_l+beta_r) (the left lobe's mass), magnitude
/// beta_side * G^(1/gamma) with G ~ Gamma(1/gamma, 1).
inline std::vector<double> sample_aggd(const AggdParams& p, long n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample count must be >= 1");
    Rng rng(seed);
    const double p_left = p.beta_left / (p.beta_left + p.beta_right);
    const double inv_shape = 1.0 / p.gamma_shape;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        const bool left = rng.uniform01() < p_left;
        const double mag = std::pow(rng.gamma(inv_shape), inv_shape);
        out.push_back(left ? -p.beta_left * mag : p.beta_right * mag);
    }
    return out;
}

/// 12 AGGD features of one frame in fixed order
/// [H, V, D_left, D_right] x [gamma, beta_l, beta_r], plus per-direction eta
/// as a diagnostic (eta is reported but is not part of the quality score).
struct FrameFeatureVector {
    std::array<double, 12> features{};
    std::array<double, 4> etas{};
    std::string frame_id;
    bool any_shape_clamped = false;

    double gamma_of(int dir) const { return features[3 * dir]; }
    double beta_left_of(int dir) const { return features[3 * dir + 1]; }
    double beta_right_of(int dir) const { return features[3 * dir + 2]; }
};

/// Fits all four directional product planes. A degenerate fit rethrows with
/// the failing direction named so sequence scoring can report it.
inline FrameFeatureVector frame_features(const MscnField& field, std::string frame_id = {},
                                         long min_samples = kMinFitSamples) {
    const DirectionalProducts prods = directional_products(field);
    FrameFeatureVector out;
    out.frame_id = std::move(frame_id);
    for (int d = 0; d < 4; ++d) {
        const Direction dir = kDirectionOrder[d];
        try {
            const AggdParams p = fit_aggd(prods.plane(dir), min_samples);
            out.features[3 * d] = p.gamma_shape;
            out.features[3 * d + 1] = p.beta_left;
            out.features[3 * d + 2] = p.beta_right;
            out.etas[d] = p.eta;
            out.any_shape_clamped |= p.shape_clamped;
        } catch (const FitError& e) {
            throw FitError(e.kind(), std::string("direction ") + to_string(dir) +
                                         (out.frame_id.empty() ? "" : " of frame " + out.frame_id) +
                                         ": " + e.what());
        }
    }
    return out;
}

}  // namespace qi
