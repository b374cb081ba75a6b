#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "qi/clustering.hpp"
#include "qi/rng.hpp"

using Catch::Approx;

namespace {

qi::FrameFeatureVector row_of(const std::array<double, 12>& values, const std::string& id = "r") {
    qi::FrameFeatureVector f;
    f.features = values;
    f.frame_id = id;
    return f;
}

// Rows whose gamma / beta_l / beta_r blocks are boosted per group, giving
// one-hot dominance after standardization.
std::vector<qi::FrameFeatureVector> block_rows(const std::vector<std::pair<int, int>>& group_counts,
                                               double jitter_amp = 0.0, std::uint64_t seed = 1) {
    std::vector<qi::FrameFeatureVector> rows;
    qi::Rng rng(seed);
    int idx = 0;
    for (const auto& [param, count] : group_counts) {
        for (int i = 0; i < count; ++i) {
            std::array<double, 12> v{};
            for (int d = 0; d < 4; ++d)
                for (int p = 0; p < 3; ++p)
                    v[3 * d + p] = (p == param ? 3.0 : 1.0) +
                                   (jitter_amp > 0 ? rng.uniform(-jitter_amp, jitter_amp) : 0.0);
            rows.push_back(row_of(v, "g" + std::to_string(param) + "_" + std::to_string(idx++)));
        }
    }
    return rows;
}

}  // namespace

TEST_CASE("standardize: single row becomes zeros") {
    auto mat = qi::standardize({row_of({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12})});
    for (double v : mat.standardized[0]) CHECK(v == 0.0);
    for (double s : mat.column_stds) CHECK(s == 1.0);
}

TEST_CASE("standardize: symmetric rows map to +-1") {
    auto mat = qi::standardize({row_of({+1, +2, +1, +2, +1, +2, +1, +2, +1, +2, +1, +2}),
                                row_of({-1, -2, -1, -2, -1, -2, -1, -2, -1, -2, -1, -2})});
    for (int c = 0; c < 12; ++c) {
        CHECK(std::fabs(mat.standardized[0][c]) == Approx(1.0).margin(1e-12));
        CHECK(mat.standardized[0][c] == Approx(-mat.standardized[1][c]).margin(1e-12));
    }
}

TEST_CASE("standardized columns have mean 0 and std 1") {
    std::vector<qi::FrameFeatureVector> rows;
    qi::Rng rng(9);
    for (int i = 0; i < 40; ++i) {
        std::array<double, 12> v;
        for (double& x : v) x = rng.uniform(0.1, 5.0);
        rows.push_back(row_of(v));
    }
    const auto mat = qi::standardize(rows);
    for (int c = 0; c < 12; ++c) {
        double m = 0.0, var = 0.0;
        for (const auto& r : mat.standardized) m += r[c];
        m /= mat.standardized.size();
        for (const auto& r : mat.standardized) var += (r[c] - m) * (r[c] - m);
        var /= mat.standardized.size();
        CHECK(std::fabs(m) < 1e-9);
        CHECK(std::sqrt(var) == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("destandardize round-trips") {
    std::vector<qi::FrameFeatureVector> rows;
    qi::Rng rng(10);
    for (int i = 0; i < 10; ++i) {
        std::array<double, 12> v;
        for (double& x : v) x = rng.uniform(0.1, 5.0);
        rows.push_back(row_of(v));
    }
    const auto mat = qi::standardize(rows);
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto back = qi::destandardize(mat, mat.standardized[i]);
        for (int c = 0; c < 12; ++c) CHECK(back[c] == Approx(mat.rows[i].features[c]).margin(1e-10));
    }
}

TEST_CASE("kmeans with k=1 returns the column mean") {
    const auto mat = qi::standardize(block_rows({{0, 3}, {1, 3}}, 0.3, 4));
    const qi::ClusterModel model = qi::kmeans(mat, 1, 42);
    for (int c = 0; c < 12; ++c) {
        double m = 0.0;
        for (const auto& r : mat.standardized) m += r[c];
        m /= mat.standardized.size();
        CHECK(model.centers[0][c] == Approx(m).margin(1e-9));
    }
}

TEST_CASE("kmeans separates well-separated blobs (ARI 1)") {
    // three 12-dim blobs, sigma 0.1, centers 10 apart
    std::vector<qi::FrameFeatureVector> rows;
    std::vector<int> truth;
    qi::Rng rng(2000);
    for (int g = 0; g < 3; ++g) {
        for (int i = 0; i < 30; ++i) {
            std::array<double, 12> v;
            for (double& x : v) x = 10.0 * g + 0.1 * rng.normal();
            rows.push_back(row_of(v));
            truth.push_back(g);
        }
    }
    const auto mat = qi::standardize(rows);
    const qi::ClusterModel model = qi::kmeans(mat, 3, 42);
    CHECK(oracle::adjusted_rand_index(truth, model.assignments) == Approx(1.0).margin(1e-12));
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
    const auto mat = qi::standardize(block_rows({{0, 12}, {1, 9}, {2, 7}}, 0.4, 77));
    const qi::ClusterModel a = qi::kmeans(mat, 3, 13);
    const qi::ClusterModel b = qi::kmeans(mat, 3, 13);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centers == b.centers);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans inertia is non-increasing across iterations") {
    const auto mat = qi::standardize(block_rows({{0, 20}, {1, 20}, {2, 20}}, 1.5, 5));
    const qi::ClusterModel model = qi::kmeans(mat, 3, 99);
    REQUIRE(model.inertia_history.size() >= 2);
    for (size_t i = 1; i < model.inertia_history.size(); ++i)
        CHECK(model.inertia_history[i] <= model.inertia_history[i - 1] + 1e-9);
}

TEST_CASE("kmeans returns no empty clusters even for duplicate rows") {
    std::vector<qi::FrameFeatureVector> rows(5, row_of({1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}));
    const auto mat = qi::standardize(rows);
    const qi::ClusterModel model = qi::kmeans(mat, 3, 7);
    std::array<int, 3> counts{};
    for (int a : model.assignments) counts[a]++;
    for (int c : counts) CHECK(c > 0);
}

TEST_CASE("kmeans rejects fewer rows than clusters") {
    const auto mat = qi::standardize(block_rows({{0, 2}}));
    CHECK_THROWS_AS(qi::kmeans(mat, 3, 1), std::invalid_argument);
}

TEST_CASE("one-hot dominance labels clusters exactly") {
    const auto mat = qi::standardize(block_rows({{0, 10}, {1, 10}, {2, 10}}, 0.1, 3));
    const qi::ClusterModel model = qi::kmeans(mat, 3, 42);
    const qi::CategoryLabels labels = qi::label_clusters(model, mat);

    // the cluster holding g0 rows (gamma-boosted) must be labeled structure, etc.
    for (size_t i = 0; i < mat.rows.size(); ++i) {
        const std::string& id = mat.rows[i].frame_id;
        const qi::Category cat = labels.category_of_cluster[model.assignments[i]];
        if (id.rfind("g0", 0) == 0) CHECK(cat == qi::Category::Structure);
        if (id.rfind("g1", 0) == 0) CHECK(cat == qi::Category::Brightness);
        if (id.rfind("g2", 0) == 0) CHECK(cat == qi::Category::Noise);
    }
    // bijection
    std::array<int, 3> seen{};
    for (auto c : labels.category_of_cluster) seen[static_cast<int>(c)]++;
    CHECK(seen == std::array<int, 3>{1, 1, 1});
}

TEST_CASE("labeling is invariant to row permutation") {
    auto rows = block_rows({{0, 8}, {1, 8}, {2, 8}}, 0.2, 21);
    const auto mat = qi::standardize(rows);
    const qi::ClusterModel model = qi::kmeans(mat, 3, 11);
    const qi::CategoryLabels labels = qi::label_clusters(model, mat);

    std::vector<qi::FrameFeatureVector> shuffled = rows;
    qi::Rng rng(5);
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
    const auto mat2 = qi::standardize(shuffled);
    const qi::ClusterModel model2 = qi::kmeans(mat2, 3, 11);
    const qi::CategoryLabels labels2 = qi::label_clusters(model2, mat2);

    // per-frame category must be identical however the rows were ordered
    std::map<std::string, qi::Category> by_id;
    for (size_t i = 0; i < mat.rows.size(); ++i)
        by_id[mat.rows[i].frame_id] = labels.category_of_cluster[model.assignments[i]];
    for (size_t i = 0; i < mat2.rows.size(); ++i)
        CHECK(by_id.at(mat2.rows[i].frame_id) ==
              labels2.category_of_cluster[model2.assignments[i]]);
}

TEST_CASE("identical centers break ties deterministically") {
    std::vector<qi::FrameFeatureVector> rows;
    for (int i = 0; i < 6; ++i) rows.push_back(row_of({2, 1, 1, 2, 1, 1, 2, 1, 1, 2, 1, 1}, "a"));
    for (int i = 0; i < 4; ++i) rows.push_back(row_of({1, 2, 2, 1, 2, 2, 1, 2, 2, 1, 2, 2}, "b"));
    for (int i = 0; i < 2; ++i) rows.push_back(row_of({1, 2, 2, 1, 2, 2, 1, 2, 2, 1, 2, 2}, "c"));
    const auto mat = qi::standardize(rows);
    const qi::ClusterModel model = qi::kmeans(mat, 3, 3);
    const qi::CategoryLabels a = qi::label_clusters(model, mat);
    const qi::CategoryLabels b = qi::label_clusters(model, mat);
    CHECK(a.category_of_cluster == b.category_of_cluster);
}

TEST_CASE("pure equal clusters give uniform signed weights") {
    const auto mat = qi::standardize(block_rows({{0, 10}, {1, 10}, {2, 10}}, 0.05, 6));
    const qi::ClusterModel model = qi::kmeans(mat, 3, 42);
    const qi::CategoryLabels labels = qi::label_clusters(model, mat);
    const qi::WeightVector w = qi::derive_weights(model, labels, mat);
    CHECK(w.w1 == Approx(1.0 / 3.0).margin(1e-9));
    CHECK(w.w2 == Approx(-1.0 / 3.0).margin(1e-9));
    CHECK(w.w3 == Approx(-1.0 / 3.0).margin(1e-9));
    CHECK_FALSE(w.fallback);
}

TEST_CASE("pure clusters weight by frame mass") {
    // exact 10/6/4 blobs: every cluster's dominance ratio stays above 1.5
    const auto mat = qi::standardize(block_rows({{0, 10}, {1, 6}, {2, 4}}, 0.0, 7));
    const qi::ClusterModel model = qi::kmeans(mat, 3, 42);
    const qi::CategoryLabels labels = qi::label_clusters(model, mat);
    const qi::WeightVector w = qi::derive_weights(model, labels, mat);
    CHECK(w.w1 == Approx(0.5).margin(1e-9));
    CHECK(w.w2 == Approx(-0.3).margin(1e-9));
    CHECK(w.w3 == Approx(-0.2).margin(1e-9));
}

TEST_CASE("weight floor pins small magnitudes and redistributes exactly") {
    const auto a = qi::apply_weight_floor({0.98, 0.01, 0.01});
    CHECK(a[0] == Approx(0.9).margin(1e-12));
    CHECK(a[1] == Approx(0.05).margin(1e-12));
    CHECK(a[2] == Approx(0.05).margin(1e-12));

    const auto b = qi::apply_weight_floor({0.6, 0.38, 0.02});
    CHECK(b[2] == Approx(0.05).margin(1e-12));
    CHECK(b[0] + b[1] + b[2] == Approx(1.0).margin(1e-12));
    CHECK(b[0] / b[1] == Approx(0.6 / 0.38).margin(1e-12));  // proportions preserved

    const auto c = qi::apply_weight_floor({1.0, 0.0, 0.0});
    CHECK(c[0] == Approx(0.9).margin(1e-12));
    CHECK(c[1] == Approx(0.05).margin(1e-12));
    CHECK(c[2] == Approx(0.05).margin(1e-12));

    const auto d = qi::apply_weight_floor({1.0 / 3, 1.0 / 3, 1.0 / 3});
    for (double m : d) CHECK(m == Approx(1.0 / 3).margin(1e-12));
}

TEST_CASE("unresolvable mixing falls back to flagged uniform weights") {
    // gamma and beta_l dominance stay exactly tied at every split depth
    std::vector<qi::FrameFeatureVector> rows;
    for (int i = 0; i < 30; ++i) {
        const double s = i % 2 == 0 ? 3.0 : -3.0;
        std::array<double, 12> v{};
        for (int d = 0; d < 4; ++d) {
            v[3 * d + 0] = s;
            v[3 * d + 1] = s;
            v[3 * d + 2] = 0.0;
        }
        rows.push_back(row_of(v, "m" + std::to_string(i)));
    }
    const auto mat = qi::standardize(rows);
    const qi::ClusterModel model = qi::kmeans(mat, 3, 42);
    const qi::CategoryLabels labels = qi::label_clusters(model, mat);
    const qi::WeightVector w = qi::derive_weights(model, labels, mat);
    CHECK(w.fallback);
    CHECK(w.w1 == Approx(1.0 / 3.0).margin(1e-9));
    CHECK(w.w2 == Approx(-1.0 / 3.0).margin(1e-9));
    CHECK(w.w3 == Approx(-1.0 / 3.0).margin(1e-9));
}

TEST_CASE("derive_weights is invariant to row permutation") {
    auto rows = block_rows({{0, 9}, {1, 14}, {2, 5}}, 0.6, 31);
    const auto mat = qi::standardize(rows);
    const qi::ClusterModel model = qi::kmeans(mat, 3, 17);
    const qi::WeightVector w = qi::derive_weights(model, qi::label_clusters(model, mat), mat);

    std::vector<qi::FrameFeatureVector> shuffled = rows;
    qi::Rng rng(77);
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
    const auto mat2 = qi::standardize(shuffled);
    const qi::ClusterModel model2 = qi::kmeans(mat2, 3, 17);
    const qi::WeightVector w2 = qi::derive_weights(model2, qi::label_clusters(model2, mat2), mat2);

    CHECK(w.w1 == Approx(w2.w1).margin(1e-12));
    CHECK(w.w2 == Approx(w2.w2).margin(1e-12));
    CHECK(w.w3 == Approx(w2.w3).margin(1e-12));
}

TEST_CASE("randomized matrices always yield valid weight vectors") {
    qi::Rng rng(4242);
    for (int trial = 0; trial < 12; ++trial) {
        std::vector<qi::FrameFeatureVector> rows;
        const int n = 3 + static_cast<int>(rng.uniform_index(40));
        for (int i = 0; i < n; ++i) {
            std::array<double, 12> v;
            for (double& x : v) x = rng.uniform(-2.0, 2.0);
            rows.push_back(row_of(v, "t" + std::to_string(trial) + "_" + std::to_string(i)));
        }
        const auto mat = qi::standardize(rows);
        const qi::ClusterModel model = qi::kmeans(mat, 3, rng.next_u64());
        const qi::WeightVector w = qi::derive_weights(model, qi::label_clusters(model, mat), mat);
        CHECK_NOTHROW(qi::validate(w));
        CHECK(w.w1 >= qi::kWeightFloor - 1e-12);
        CHECK(-w.w2 >= qi::kWeightFloor - 1e-12);
        CHECK(-w.w3 >= qi::kWeightFloor - 1e-12);
    }
}
