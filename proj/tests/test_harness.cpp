#include <catch2/catch_amalgamated.hpp>

#include "qi/harness.hpp"
#include "qi/rng.hpp"
#include "qi/stats.hpp"

using Catch::Approx;

TEST_CASE("level zero is the identity for every distortion kind") {
    const qi::Image img = qi::probe_base_image(1, 48, 48);
    for (auto kind : {qi::DistortionKind::GaussianNoise, qi::DistortionKind::GaussianBlur,
                      qi::DistortionKind::BiasField, qi::DistortionKind::GammaShift}) {
        const qi::Image out = qi::simulate_distortion(img, {kind, 0.0, 55});
        CHECK(out.pixels == img.pixels);
    }
}

TEST_CASE("gaussian noise is seed-reproducible with the stated level") {
    qi::Image mid = qi::make_image(100, 100);
    std::fill(mid.pixels.begin(), mid.pixels.end(), 0.5);  // headroom: no clamping at 0.1
    const qi::DistortionSpec spec{qi::DistortionKind::GaussianNoise, 0.1, 99};
    const qi::Image a = qi::simulate_distortion(mid, spec);
    const qi::Image b = qi::simulate_distortion(mid, spec);
    CHECK(a.pixels == b.pixels);

    std::vector<double> added;
    for (size_t i = 0; i < a.size(); ++i) added.push_back(a.pixels[i] - mid.pixels[i]);
    CHECK(qi::stddev_pop(added) == Approx(0.1).epsilon(0.10));
    CHECK(std::fabs(qi::mean(added)) < 0.01);
}

TEST_CASE("bias field preserves the mean to within 2 percent") {
    const qi::Image img = qi::probe_base_image(7, 64, 64);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const qi::Image out =
            qi::simulate_distortion(img, {qi::DistortionKind::BiasField, 0.4, seed});
        CHECK(qi::mean(out.pixels) == Approx(qi::mean(img.pixels)).epsilon(0.02));
    }
}

TEST_CASE("blur and gamma shift kinds match their primitives") {
    const qi::Image img = qi::probe_base_image(9, 32, 32);
    const qi::Image blurred = qi::simulate_distortion(img, {qi::DistortionKind::GaussianBlur, 1.5, 0});
    CHECK(blurred.pixels == qi::gaussian_filter(img, 1.5).pixels);

    const qi::Image shifted = qi::simulate_distortion(img, {qi::DistortionKind::GammaShift, 0.7, 0});
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(shifted.pixels[i] == Approx(std::pow(img.pixels[i], 1.7)).margin(1e-15));
}

TEST_CASE("distortion rejects negative levels") {
    const qi::Image img = qi::probe_base_image(2, 16, 16);
    CHECK_THROWS_AS(qi::simulate_distortion(img, {qi::DistortionKind::GaussianNoise, -0.1, 0}),
                    std::invalid_argument);
}

TEST_CASE("probe validates its level grid") {
    const qi::Image img = qi::probe_base_image(3, 48, 48);
    qi::WeightVector w;
    const std::vector<double> two{0.0, 0.1};
    CHECK_THROWS_AS(qi::monotonicity_probe(img, qi::DistortionKind::GaussianNoise, two, w),
                    std::invalid_argument);
    const std::vector<double> no_zero{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(qi::monotonicity_probe(img, qi::DistortionKind::GaussianNoise, no_zero, w),
                    std::invalid_argument);
    const std::vector<double> flat{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(qi::monotonicity_probe(img, qi::DistortionKind::GaussianNoise, flat, w),
                    std::invalid_argument);
}

TEST_CASE("probe returns one qi per level and tracks noise degradation") {
    const qi::Image img = qi::probe_base_image(4);
    qi::WeightVector w{0.05, -0.475, -0.475};
    const std::vector<double> levels{0.0, 0.02, 0.05, 0.1, 0.2, 0.4};
    const qi::ProbeResult probe =
        qi::monotonicity_probe(img, qi::DistortionKind::GaussianNoise, levels, w, 11);
    CHECK(probe.qi.size() == levels.size());
    for (const auto& err : probe.level_errors) CHECK(err.empty());
    CHECK(probe.spearman_level_qi <= -0.9);
}

TEST_CASE("corpus generation is deterministic and shaped as requested") {
    qi::CorpusSpec spec;
    spec.patients = 2;
    spec.sequences_per_patient = 2;
    spec.frames_per_sequence = 3;
    spec.width = 40;
    spec.height = 40;
    spec.base_seed = 777;
    const auto a = qi::generate_corpus(spec);
    const auto b = qi::generate_corpus(spec);
    REQUIRE(a.size() == 2);
    CHECK(a[0].sequences.size() == 2);
    CHECK(a[0].sequences[0].pre.frames.size() == 3);
    CHECK(a[0].sequences[0].post.frames.size() == 3);
    for (size_t p = 0; p < a.size(); ++p)
        for (size_t s = 0; s < a[p].sequences.size(); ++s)
            for (size_t f = 0; f < 3; ++f) {
                CHECK(a[p].sequences[s].pre.frames[f].pixels ==
                      b[p].sequences[s].pre.frames[f].pixels);
                CHECK(a[p].sequences[s].post.frames[f].pixels ==
                      b[p].sequences[s].post.frames[f].pixels);
            }

    // frame ids are unique across the corpus
    std::set<std::string> ids;
    for (const auto& patient : a)
        for (const auto& pair : patient.sequences) {
            for (const auto& f : pair.pre.frames) CHECK(ids.insert(f.source_id).second);
            for (const auto& f : pair.post.frames) CHECK(ids.insert(f.source_id).second);
        }
}

TEST_CASE("loocv on two identical patients yields identical folds") {
    qi::CorpusSpec spec;
    spec.patients = 1;
    spec.sequences_per_patient = 1;
    spec.frames_per_sequence = 5;
    spec.width = 64;
    spec.height = 64;
    spec.base_seed = 31;
    const auto one = qi::generate_corpus(spec);

    std::vector<qi::PatientData> twins;
    for (int copy = 0; copy < 2; ++copy) {
        qi::PatientData p = one[0];
        p.patient_id = "twin_" + std::to_string(copy);
        // distinct frame ids per copy; identical pixel content
        for (auto& pair : p.sequences) {
            for (size_t f = 0; f < pair.pre.frames.size(); ++f)
                pair.pre.frames[f].source_id = p.patient_id + "_pre_" + std::to_string(f);
            for (size_t f = 0; f < pair.post.frames.size(); ++f)
                pair.post.frames[f].source_id = p.patient_id + "_post_" + std::to_string(f);
        }
        twins.push_back(std::move(p));
    }

    const qi::LoocvResult result = qi::loocv_fit(twins);
    REQUIRE(result.folds.size() == 2);
    CHECK(result.folds[0].weights.w1 == Approx(result.folds[1].weights.w1).margin(1e-12));
    CHECK(result.folds[0].weights.w2 == Approx(result.folds[1].weights.w2).margin(1e-12));
    CHECK(result.folds[0].weights.w3 == Approx(result.folds[1].weights.w3).margin(1e-12));
    CHECK(result.global_weights.w1 == Approx(result.folds[0].weights.w1).margin(1e-12));
    CHECK_NOTHROW(qi::validate(result.global_weights));
}

TEST_CASE("loocv global weights are invariant to patient order") {
    qi::CorpusSpec spec;
    spec.patients = 3;
    spec.sequences_per_patient = 1;
    spec.frames_per_sequence = 4;
    spec.width = 64;
    spec.height = 64;
    spec.base_seed = 99;
    auto corpus = qi::generate_corpus(spec);

    const qi::LoocvResult a = qi::loocv_fit(corpus);
    std::reverse(corpus.begin(), corpus.end());
    const qi::LoocvResult b = qi::loocv_fit(corpus);
    CHECK(a.global_weights.w1 == Approx(b.global_weights.w1).margin(1e-12));
    CHECK(a.global_weights.w2 == Approx(b.global_weights.w2).margin(1e-12));
    CHECK(a.global_weights.w3 == Approx(b.global_weights.w3).margin(1e-12));
}

TEST_CASE("loocv rejects single-patient input and is parallel-stable") {
    qi::CorpusSpec spec;
    spec.patients = 2;
    spec.sequences_per_patient = 1;
    spec.frames_per_sequence = 4;
    spec.width = 48;
    spec.height = 48;
    spec.base_seed = 17;
    const auto corpus = qi::generate_corpus(spec);

    std::vector<qi::PatientData> one(corpus.begin(), corpus.begin() + 1);
    CHECK_THROWS_AS(qi::loocv_fit(one), std::invalid_argument);

    qi::LoocvOptions serial, parallel;
    parallel.score.jobs = 4;
    const qi::LoocvResult x = qi::loocv_fit(corpus, serial);
    const qi::LoocvResult y = qi::loocv_fit(corpus, parallel);
    CHECK(x.global_weights.w1 == y.global_weights.w1);
    CHECK(x.global_weights.w2 == y.global_weights.w2);
    CHECK(x.global_weights.w3 == y.global_weights.w3);
    for (size_t f = 0; f < x.folds.size(); ++f)
        CHECK(x.folds[f].effect_size == y.folds[f].effect_size);
}
