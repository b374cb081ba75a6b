#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "qi/aggd.hpp"
#include "qi/rng.hpp"

namespace qi {

using FeatureRow = std::array<double, 12>;

/// Per-frame feature rows with the per-column standardization record.
/// Clustering runs in standardized space; Eq-10 style scoring uses the raw
/// parameters.
struct FeatureMatrix {
    std::vector<FrameFeatureVector> rows;
    std::vector<FeatureRow> standardized;
    FeatureRow column_means{};
    FeatureRow column_stds{};
};

/// Column z-scoring. Zero-variance columns record std 1 so they pass through
/// mean-centered (and therefore zeroed) without blowing up.
inline FeatureMatrix standardize(std::vector<FrameFeatureVector> rows) {
    if (rows.empty()) throw std::invalid_argument("standardize needs at least one row");
    FeatureMatrix mat;
    mat.rows = std::move(rows);
    const size_t n = mat.rows.size();
    for (int c = 0; c < 12; ++c) {
        double m = 0.0;
        for (const auto& r : mat.rows) m += r.features[c];
        m /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& r : mat.rows) {
            const double d = r.features[c] - m;
            var += d * d;
        }
        var /= static_cast<double>(n);
        mat.column_means[c] = m;
        mat.column_stds[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    mat.standardized.resize(n);
    for (size_t i = 0; i < n; ++i)
        for (int c = 0; c < 12; ++c)
            mat.standardized[i][c] = (mat.rows[i].features[c] - mat.column_means[c]) / mat.column_stds[c];
    return mat;
}

inline FeatureRow destandardize(const FeatureMatrix& mat, const FeatureRow& z) {
    FeatureRow out;
    for (int c = 0; c < 12; ++c) out[c] = z[c] * mat.column_stds[c] + mat.column_means[c];
    return out;
}

struct ClusterModel {
    int k = 0;
    std::vector<FeatureRow> centers;  // standardized space
    std::vector<int> assignments;     // one per row
    std::uint64_t seed = 0;
    int iterations_used = 0;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

namespace detail {

inline double dist2(const FeatureRow& a, const FeatureRow& b) {
    double acc = 0.0;
    for (int c = 0; c < 12; ++c) {
        const double d = a[c] - b[c];
        acc += d * d;
    }
    return acc;
}

/// Lloyd iterations with k-means++ seeding over an explicit point list.
/// Points are consumed in the order given; callers wanting row-permutation
/// invariance canonicalize the order first.
inline ClusterModel kmeans_points(const std::vector<FeatureRow>& pts, int k, std::uint64_t seed,
                                  int max_iter, double tol) {
    const size_t n = pts.size();
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (n < static_cast<size_t>(k))
        throw std::invalid_argument("need at least k rows for clustering");

    Rng rng(seed);
    ClusterModel model;
    model.k = k;
    model.seed = seed;
    model.centers.resize(k);

    // k-means++ seeding
    model.centers[0] = pts[rng.uniform_index(n)];
    std::vector<double> d2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = dist2(pts[i], model.centers[0]);
            for (int j = 1; j < c; ++j) best = std::min(best, dist2(pts[i], model.centers[j]));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            model.centers[c] = pts[rng.uniform_index(n)];
            continue;
        }
        const double u = rng.uniform01() * total;
        double cum = 0.0;
        size_t pick = n - 1;
        for (size_t i = 0; i < n; ++i) {
            cum += d2[i];
            if (u < cum) {
                pick = i;
                break;
            }
        }
        model.centers[c] = pts[pick];
    }

    model.assignments.assign(n, 0);
    std::vector<size_t> sizes(k, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        // assignment (ties -> lowest center index)
        double inertia = 0.0;
        std::fill(sizes.begin(), sizes.end(), size_t{0});
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = dist2(pts[i], model.centers[0]);
            for (int j = 1; j < k; ++j) {
                const double d = dist2(pts[i], model.centers[j]);
                if (d < bd) {
                    bd = d;
                    best = j;
                }
            }
            model.assignments[i] = best;
            sizes[best] += 1;
            inertia += bd;
        }

        // re-seed empty clusters with the point farthest from its center
        for (int j = 0; j < k; ++j) {
            if (sizes[j] > 0) continue;
            double worst = -1.0;
            size_t pick = n;
            for (size_t i = 0; i < n; ++i) {
                if (sizes[model.assignments[i]] <= 1) continue;
                const double d = dist2(pts[i], model.centers[model.assignments[i]]);
                if (d > worst) {
                    worst = d;
                    pick = i;
                }
            }
            if (pick == n) continue;  // all donors are singletons; leave as is
            inertia -= worst;
            sizes[model.assignments[pick]] -= 1;
            model.centers[j] = pts[pick];
            model.assignments[pick] = j;
            sizes[j] = 1;
        }

        model.inertia = inertia;
        model.inertia_history.push_back(inertia);
        model.iterations_used = iter + 1;

        // update step
        std::vector<FeatureRow> next(k, FeatureRow{});
        for (size_t i = 0; i < n; ++i)
            for (int c = 0; c < 12; ++c) next[model.assignments[i]][c] += pts[i][c];
        double movement = 0.0;
        for (int j = 0; j < k; ++j) {
            if (sizes[j] == 0) continue;
            for (int c = 0; c < 12; ++c) next[j][c] /= static_cast<double>(sizes[j]);
            movement = std::max(movement, std::sqrt(dist2(next[j], model.centers[j])));
            model.centers[j] = next[j];
        }
        if (movement < tol) break;
    }

    // final assignment against the converged centers
    double inertia = 0.0;
    std::fill(sizes.begin(), sizes.end(), size_t{0});
    for (size_t i = 0; i < n; ++i) {
        int best = 0;
        double bd = dist2(pts[i], model.centers[0]);
        for (int j = 1; j < k; ++j) {
            const double d = dist2(pts[i], model.centers[j]);
            if (d < bd) {
                bd = d;
                best = j;
            }
        }
        model.assignments[i] = best;
        sizes[best] += 1;
        inertia += bd;
    }
    for (int j = 0; j < k; ++j) {
        if (sizes[j] > 0) continue;
        double worst = -1.0;
        size_t pick = n;
        for (size_t i = 0; i < n; ++i) {
            if (sizes[model.assignments[i]] <= 1) continue;
            const double d = dist2(pts[i], model.centers[model.assignments[i]]);
            if (d > worst) {
                worst = d;
                pick = i;
            }
        }
        if (pick == n) continue;
        inertia -= worst;
        sizes[model.assignments[pick]] -= 1;
        model.centers[j] = pts[pick];
        model.assignments[pick] = j;
        sizes[j] = 1;
    }
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);
    return model;
}

}  // namespace detail

/// Seeded k-means++ over the standardized rows. Rows are canonicalized
/// (sorted lexicographically) before clustering so the result is invariant
/// to row permutation; assignments are mapped back to the caller's order.
inline ClusterModel kmeans(const FeatureMatrix& mat, int k = 3, std::uint64_t seed = 42,
                           int max_iter = 100, double tol = 1e-6) {
    const size_t n = mat.standardized.size();
    if (n < static_cast<size_t>(k))
        throw std::invalid_argument("need at least k rows for clustering");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return mat.standardized[a] < mat.standardized[b];
    });
    std::vector<FeatureRow> sorted(n);
    for (size_t i = 0; i < n; ++i) sorted[i] = mat.standardized[order[i]];

    ClusterModel model = detail::kmeans_points(sorted, k, seed, max_iter, tol);

    std::vector<int> remapped(n);
    for (size_t i = 0; i < n; ++i) remapped[order[i]] = model.assignments[i];
    model.assignments = std::move(remapped);
    return model;
}

enum class Category { Structure, Brightness, Noise };

inline const char* to_string(Category c) {
    switch (c) {
        case Category::Structure: return "structure";
        case Category::Brightness: return "brightness";
        case Category::Noise: return "noise";
    }
    return "?";
}

/// Mean standardized magnitude of a center's gamma / beta_l / beta_r slots
/// across the four directions. Index 0 = gamma, 1 = beta_l, 2 = beta_r.
inline std::array<double, 3> dominance_scores(const FeatureRow& center) {
    std::array<double, 3> dom{};
    for (int d = 0; d < 4; ++d)
        for (int p = 0; p < 3; ++p) dom[p] += std::fabs(center[3 * d + p]) / 4.0;
    return dom;
}

struct CategoryLabels {
    std::array<Category, 3> category_of_cluster{};  // indexed by cluster id
    std::array<std::array<double, 3>, 3> dominance{};  // per cluster: gamma/beta_l/beta_r
};

/// Assigns the three categories to the three clusters by maximizing total
/// dominance over the fixed pairing structure<->gamma, brightness<->beta_l,
/// noise<->beta_r. Ties prefer clusters in (size desc, index asc) order.
inline CategoryLabels label_clusters(const ClusterModel& model, const FeatureMatrix& mat) {
    if (model.k != 3) throw std::invalid_argument("category labeling requires k == 3");

    CategoryLabels labels;
    for (int c = 0; c < 3; ++c) labels.dominance[c] = dominance_scores(model.centers[c]);

    std::array<size_t, 3> sizes{};
    for (int a : model.assignments) sizes[a] += 1;
    std::array<int, 3> cluster_order = {0, 1, 2};
    std::sort(cluster_order.begin(), cluster_order.end(), [&](int a, int b) {
        if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
        return a < b;
    });

    // categories by parameter index: 0 structure(gamma), 1 brightness(beta_l), 2 noise(beta_r)
    static constexpr std::array<std::array<int, 3>, 6> kPerms = {
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    double best = -1.0;
    std::array<int, 3> best_perm{};
    for (const auto& perm : kPerms) {
        double total = 0.0;
        for (int pos = 0; pos < 3; ++pos) total += labels.dominance[cluster_order[pos]][perm[pos]];
        if (total > best + 1e-12) {
            best = total;
            best_perm = perm;
        }
    }
    static constexpr std::array<Category, 3> kCategoryOf = {Category::Structure, Category::Brightness,
                                                            Category::Noise};
    for (int pos = 0; pos < 3; ++pos)
        labels.category_of_cluster[cluster_order[pos]] = kCategoryOf[best_perm[pos]];
    return labels;
}

/// Signed per-parameter weights: positive on gamma, negative on both scales,
/// magnitudes summing to 1.
struct WeightVector {
    double w1 = 1.0 / 3.0;   // gamma weight, > 0
    double w2 = -1.0 / 3.0;  // beta_l weight, < 0
    double w3 = -1.0 / 3.0;  // beta_r weight, < 0
    bool fallback = false;   // set when unresolved mixing forced uniform magnitudes
    std::uint64_t seed = 0;
};

inline void validate(const WeightVector& w) {
    if (!(w.w1 > 0.0) || !(w.w2 < 0.0) || !(w.w3 < 0.0))
        throw std::invalid_argument("weight signs must be (+,-,-)");
    const double total = std::fabs(w.w1) + std::fabs(w.w2) + std::fabs(w.w3);
    if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("weight magnitudes must sum to 1");
}

inline constexpr double kWeightFloor = 0.05;
inline constexpr double kMixedDominanceRatio = 1.5;

namespace detail {

inline bool is_mixed(const std::array<double, 3>& dom) {
    std::array<double, 3> s = dom;
    std::sort(s.begin(), s.end(), std::greater<>());
    return s[0] < kMixedDominanceRatio * s[1];
}

inline int top_category(const std::array<double, 3>& dom) {
    int best = 0;
    for (int p = 1; p < 3; ++p)
        if (dom[p] > dom[best]) best = p;
    return best;
}

/// Distributes the rows of one (sub)cluster onto category masses, splitting
/// mixed clusters with k=2 re-clustering up to the given depth. Returns false
/// when mixing remains at the depth limit.
inline bool accumulate_mass(const std::vector<FeatureRow>& pts, const std::array<double, 3>& dom,
                            int depth, std::uint64_t seed, std::array<double, 3>& masses) {
    if (!is_mixed(dom) || pts.size() < 2 || depth <= 0) {
        if (is_mixed(dom) && depth <= 0) return false;
        masses[top_category(dom)] += static_cast<double>(pts.size());
        return true;
    }
    const ClusterModel sub = kmeans_points(pts, 2, seed, 100, 1e-6);
    for (int j = 0; j < 2; ++j) {
        std::vector<FeatureRow> members;
        for (size_t i = 0; i < pts.size(); ++i)
            if (sub.assignments[i] == j) members.push_back(pts[i]);
        if (members.empty()) continue;
        if (!accumulate_mass(members, dominance_scores(sub.centers[j]), depth - 1,
                             mix_seed(seed, j + 1), masses))
            return false;
    }
    return true;
}

}  // namespace detail

/// Frame-mass weight derivation per category, with two-step refinement of
/// mixed clusters (top dominance < 1.5x the runner-up). Unresolved mixing
/// after max_refine rounds falls back to uniform magnitudes, flagged. The
/// 0.05 floor pins small magnitudes and redistributes the remainder.
/// Pins magnitudes below the floor to exactly the floor and redistributes the
/// remaining mass proportionally among the rest. Input magnitudes must sum
/// to 1; the result does too.
inline std::array<double, 3> apply_weight_floor(std::array<double, 3> mags,
                                                double floor = kWeightFloor) {
    std::array<bool, 3> pinned{};
    for (int round = 0; round < 3; ++round) {
        double pinned_sum = 0.0, free_sum = 0.0;
        for (int p = 0; p < 3; ++p) (pinned[p] ? pinned_sum : free_sum) += pinned[p] ? floor : mags[p];
        bool changed = false;
        for (int p = 0; p < 3; ++p) {
            if (pinned[p]) continue;
            if (mags[p] / free_sum * (1.0 - pinned_sum) < floor) {
                pinned[p] = true;
                changed = true;
            }
        }
        if (!changed) {
            for (int p = 0; p < 3; ++p)
                mags[p] = pinned[p] ? floor : mags[p] / free_sum * (1.0 - pinned_sum);
            break;
        }
    }
    return mags;
}

inline WeightVector derive_weights(const ClusterModel& model, const CategoryLabels& labels,
                                   const FeatureMatrix& mat, int max_refine = 3) {
    if (model.k != 3) throw std::invalid_argument("weight derivation requires k == 3");
    const size_t n = mat.standardized.size();
    if (model.assignments.size() != n)
        throw std::invalid_argument("model/matrix row count mismatch");

    std::array<double, 3> masses{};  // structure, brightness, noise
    bool resolved = true;
    for (int c = 0; c < 3 && resolved; ++c) {
        std::vector<FeatureRow> members;
        for (size_t i = 0; i < n; ++i)
            if (model.assignments[i] == c) members.push_back(mat.standardized[i]);
        if (members.empty()) continue;
        if (!detail::is_mixed(labels.dominance[c])) {
            // pure cluster: all mass goes to its bijection category
            masses[static_cast<int>(labels.category_of_cluster[c])] +=
                static_cast<double>(members.size());
        } else {
            resolved = detail::accumulate_mass(members, labels.dominance[c], max_refine,
                                               mix_seed(model.seed, 7919 + c), masses);
        }
    }

    WeightVector w;
    w.seed = model.seed;
    std::array<double, 3> mags{};
    if (!resolved) {
        mags = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        w.fallback = true;
    } else {
        const double total = masses[0] + masses[1] + masses[2];
        for (int p = 0; p < 3; ++p) mags[p] = masses[p] / total;
    }

    mags = apply_weight_floor(mags);

    w.w1 = mags[0];
    w.w2 = -mags[1];
    w.w3 = -mags[2];
    validate(w);
    return w;
}

}  // namespace qi
