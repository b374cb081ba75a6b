#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "qi/clustering.hpp"
#include "qi/image.hpp"
#include "qi/preprocess.hpp"
#include "qi/quality.hpp"
#include "qi/rng.hpp"
#include "qi/stats.hpp"

namespace qi {

enum class DistortionKind { GaussianNoise, GaussianBlur, BiasField, GammaShift };

inline const char* to_string(DistortionKind k) {
    switch (k) {
        case DistortionKind::GaussianNoise: return "gaussian_noise";
        case DistortionKind::GaussianBlur: return "gaussian_blur";
        case DistortionKind::BiasField: return "bias_field";
        case DistortionKind::GammaShift: return "gamma_shift";
    }
    return "?";
}

struct DistortionSpec {
    DistortionKind kind = DistortionKind::GaussianNoise;
    double level = 0.0;  // 0 is the identity for every kind
    std::uint64_t seed = 0;
};

/// Applies one synthetic degradation to a normalized image, deterministically
/// for the given seed.
///   gaussian_noise: adds iid N(0, level), clamped to [0,1]
///   gaussian_blur:  gaussian_filter with sigma = level
///   bias_field:     multiplies by 1 + level * P(x,y) with P a seeded low-order
///                   polynomial surface scaled to max |P| = 1, then rescales to
///                   the input mean and clamps
///   gamma_shift:    applies exponent 1 + level
inline Image simulate_distortion(const Image& img, const DistortionSpec& spec) {
    if (spec.level < 0.0) throw std::invalid_argument("distortion level must be >= 0");
    if (spec.level == 0.0) return img;
    switch (spec.kind) {
        case DistortionKind::GaussianNoise: {
            Rng rng(spec.seed);
            Image out = img;
            for (double& v : out.pixels) v = std::clamp(v + spec.level * rng.normal(), 0.0, 1.0);
            return out;
        }
        case DistortionKind::GaussianBlur:
            return gaussian_filter(img, spec.level);
        case DistortionKind::BiasField: {
            Rng rng(spec.seed);
            double c[5];
            for (double& v : c) v = rng.uniform(-1.0, 1.0);
            Image out = img;
            std::vector<double> surface(img.size());
            double max_abs = 0.0;
            for (int r = 0; r < img.height; ++r) {
                const double y = img.height > 1 ? 2.0 * r / (img.height - 1) - 1.0 : 0.0;
                for (int col = 0; col < img.width; ++col) {
                    const double x = img.width > 1 ? 2.0 * col / (img.width - 1) - 1.0 : 0.0;
                    const double p = c[0] * x + c[1] * y + c[2] * x * y + c[3] * x * x + c[4] * y * y;
                    surface[static_cast<size_t>(r) * img.width + col] = p;
                    max_abs = std::max(max_abs, std::fabs(p));
                }
            }
            if (max_abs > 0.0)
                for (double& p : surface) p /= max_abs;
            double in_mean = 0.0, out_mean = 0.0;
            for (size_t i = 0; i < img.size(); ++i) {
                out.pixels[i] = img.pixels[i] * (1.0 + spec.level * surface[i]);
                in_mean += img.pixels[i];
                out_mean += out.pixels[i];
            }
            if (out_mean > 0.0) {
                const double rescale = in_mean / out_mean;
                for (double& v : out.pixels) v = std::clamp(v * rescale, 0.0, 1.0);
            } else {
                for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
            }
            return out;
        }
        case DistortionKind::GammaShift: {
            Image out = img;
            for (double& v : out.pixels) v = std::pow(v, 1.0 + spec.level);
            return out;
        }
    }
    throw std::logic_error("bad distortion kind");
}

// ---------------------------------------------------------------------------
// Seeded synthetic textures
// ---------------------------------------------------------------------------

namespace detail {

inline Image noise_image(Rng& rng, int w, int h, double lo, double hi) {
    Image img = make_image(w, h, ValueRange::Real);
    for (double& v : img.pixels) v = rng.uniform(lo, hi);
    return img;
}

/// Smooth background in [0.5 - amp, 0.5 + amp]: heavily blurred uniform noise.
inline Image smooth_background(Rng& rng, int w, int h, double amp) {
    Image bg = gaussian_filter(noise_image(rng, w, h, 0.0, 1.0), 8.0);
    bg = normalize_gray(bg);
    for (double& v : bg.pixels) v = 0.5 + amp * (2.0 * v - 1.0);
    bg.range = ValueRange::Normalized;
    return bg;
}

}  // namespace detail

/// Base image for degradation probes: smooth background plus a lightly
/// smoothed, diluted bimodal grain. The grain keeps the products of adjacent
/// MSCN coefficients strongly sub-Gaussian, so both added noise and blur pull
/// the fitted shape parameter down monotonically.
inline Image probe_base_image(std::uint64_t seed, int width = 192, int height = 192,
                              double amp = 0.08, double grain_sigma = 0.35,
                              double dilution = 0.9, double bg_amp = 0.16) {
    Rng rng(seed);
    Image img = detail::smooth_background(rng, width, height, bg_amp);

    Image grain = make_image(width, height, ValueRange::Real);
    for (double& v : grain.pixels) v = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    for (double& v : grain.pixels) v = (v + dilution * rng.uniform(-1.0, 1.0)) / (1.0 + dilution);
    if (grain_sigma > 0.0) grain = gaussian_filter(grain, grain_sigma);

    double g_mean = 0.0;
    for (double v : grain.pixels) g_mean += v;
    g_mean /= static_cast<double>(grain.size());
    double g_var = 0.0;
    for (double v : grain.pixels) g_var += (v - g_mean) * (v - g_mean);
    const double g_std = std::sqrt(g_var / static_cast<double>(grain.size()));
    const double scale = g_std > 0.0 ? 1.0 / (3.0 * g_std) : 1.0;

    for (size_t i = 0; i < img.size(); ++i)
        img.pixels[i] = std::clamp(img.pixels[i] + amp * grain.pixels[i] * scale, 0.0, 1.0);
    img.source_id = "probe_base_" + std::to_string(seed);
    return img;
}

/// Base image for synthetic patient corpora: smooth background plus blocky
/// mid-frequency bimodal texture (cell x cell blocks). The block scale
/// survives the denoising blur of the preprocessing stage, which is what a
/// quality index should reward.
inline Image patient_base_image(std::uint64_t seed, int width = 128, int height = 128,
                                int cell = 3, double amp = 0.26, double dilution = 0.35,
                                double bg_amp = 0.18) {
    Rng rng(seed);
    Image img = detail::smooth_background(rng, width, height, bg_amp);

    const int bw = (width + cell - 1) / cell, bh = (height + cell - 1) / cell;
    std::vector<double> blocks(static_cast<size_t>(bw) * bh);
    for (double& v : blocks) v = rng.uniform01() < 0.5 ? -1.0 : 1.0;

    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double block = blocks[static_cast<size_t>(r / cell) * bw + (c / cell)];
            const double grain = (block + dilution * rng.uniform(-1.0, 1.0)) / (1.0 + dilution);
            const size_t idx = static_cast<size_t>(r) * width + c;
            img.pixels[idx] = std::clamp(img.pixels[idx] + amp * grain, 0.0, 1.0);
        }
    }
    img.source_id = "patient_base_" + std::to_string(seed);
    return img;
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

/// Generation parameters for seeded pre/post corpora. The post frames are the
/// pre frames run through the stated preprocessing config; degradation levels
/// are drawn per patient and jittered per frame.
struct CorpusSpec {
    int schema_version = 1;
    int patients = 10;
    int sequences_per_patient = 2;
    int frames_per_sequence = 8;
    int width = 128;
    int height = 128;
    std::uint64_t base_seed = 1234;
    double noise_min = 0.08, noise_max = 0.20;
    double bias_min = 0.00, bias_max = 0.15;
    double gamma_min = 0.00, gamma_max = 0.30;
    double frame_jitter = 0.15;
    PreprocessConfig post{true, 0.9, 0.9};
};

struct SequencePair {
    FrameSequence pre;
    FrameSequence post;
};

struct PatientData {
    std::string patient_id;
    std::vector<SequencePair> sequences;
};

inline std::vector<PatientData> generate_corpus(const CorpusSpec& spec) {
    if (spec.patients < 1 || spec.sequences_per_patient < 1 || spec.frames_per_sequence < 1)
        throw std::invalid_argument("corpus spec must request at least one patient/sequence/frame");
    std::vector<PatientData> corpus;
    corpus.reserve(spec.patients);
    for (int p = 0; p < spec.patients; ++p) {
        Rng prng(mix_seed(spec.base_seed, static_cast<std::uint64_t>(p)));
        const double noise_lv = prng.uniform(spec.noise_min, spec.noise_max);
        const double bias_lv = prng.uniform(spec.bias_min, spec.bias_max);
        const double gamma_lv = prng.uniform(spec.gamma_min, spec.gamma_max);

        PatientData patient;
        patient.patient_id = "patient_" + std::to_string(p);
        for (int s = 0; s < spec.sequences_per_patient; ++s) {
            SequencePair pair;
            const std::string seq_id = patient.patient_id + "_seq" + std::to_string(s);
            pair.pre.sequence_id = seq_id + "_pre";
            pair.post.sequence_id = seq_id + "_post";
            pair.pre.patient_id = pair.post.patient_id = patient.patient_id;
            for (int f = 0; f < spec.frames_per_sequence; ++f) {
                const std::uint64_t fs = mix_seed(mix_seed(spec.base_seed, p),
                                                  static_cast<std::uint64_t>(s) * 100003 + f);
                Rng frng(fs);
                Image clean = patient_base_image(frng.next_u64(), spec.width, spec.height);
                const double j0 = frng.uniform(1.0 - spec.frame_jitter, 1.0 + spec.frame_jitter);
                const double j1 = frng.uniform(1.0 - spec.frame_jitter, 1.0 + spec.frame_jitter);
                const double j2 = frng.uniform(1.0 - spec.frame_jitter, 1.0 + spec.frame_jitter);

                Image pre = simulate_distortion(
                    clean, {DistortionKind::GammaShift, gamma_lv * j0, frng.next_u64()});
                pre = simulate_distortion(pre, {DistortionKind::BiasField, bias_lv * j1, frng.next_u64()});
                pre = simulate_distortion(pre,
                                          {DistortionKind::GaussianNoise, noise_lv * j2, frng.next_u64()});
                pre.source_id = seq_id + "_f" + std::to_string(f) + "_pre";

                Image post = preprocess_pipeline(pre, spec.post);
                post.source_id = seq_id + "_f" + std::to_string(f) + "_post";

                pair.pre.frames.push_back(std::move(pre));
                pair.post.frames.push_back(std::move(post));
            }
            patient.sequences.push_back(std::move(pair));
        }
        corpus.push_back(std::move(patient));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Monotonicity probe
// ---------------------------------------------------------------------------

struct ProbeResult {
    std::vector<double> qi;  // one per level; NaN for degenerate levels
    double spearman_level_qi = 0.0;
    std::vector<std::string> level_errors;  // "" when the level scored cleanly
};

/// Scores distorted copies of one clean image (single-frame sequences, so the
/// fusion falls back to uniform direction weights) and reports the Spearman
/// correlation between distortion level and qi.
inline ProbeResult monotonicity_probe(const Image& clean, DistortionKind kind,
                                      std::span<const double> levels, const WeightVector& w,
                                      std::uint64_t seed = 0, const ScoreOptions& opt = {}) {
    if (levels.size() < 3) throw std::invalid_argument("probe needs at least 3 levels");
    if (levels[0] != 0.0) throw std::invalid_argument("probe levels must start at 0");
    for (size_t i = 1; i < levels.size(); ++i)
        if (levels[i] <= levels[i - 1])
            throw std::invalid_argument("probe levels must be strictly ascending");

    ProbeResult out;
    out.level_errors.assign(levels.size(), "");
    std::vector<double> ok_levels, ok_qis;
    for (size_t i = 0; i < levels.size(); ++i) {
        const Image distorted = simulate_distortion(clean, {kind, levels[i], mix_seed(seed, i)});
        FrameSequence seq;
        seq.sequence_id = "probe_level_" + std::to_string(levels[i]);
        seq.frames.push_back(distorted);
        try {
            const SequenceQualityReport rep = score_sequence(seq, w, std::nullopt, opt);
            out.qi.push_back(rep.per_frame.front().qi);
            ok_levels.push_back(levels[i]);
            ok_qis.push_back(out.qi.back());
        } catch (const std::exception& e) {
            out.qi.push_back(std::numeric_limits<double>::quiet_NaN());
            out.level_errors[i] = e.what();
        }
    }
    if (ok_levels.size() >= 2) out.spearman_level_qi = spearman(ok_levels, ok_qis);
    return out;
}

// ---------------------------------------------------------------------------
// Leave-one-out cross-validated weight fitting
// ---------------------------------------------------------------------------

struct FoldReport {
    std::string held_out_patient;
    WeightVector weights;
    double effect_size = 0.0;  // held-out mean qi(post) - mean qi(pre), pooled-std units
    bool degenerate_effect = false;  // pooled std vanished
};

struct LoocvResult {
    WeightVector global_weights;
    std::vector<FoldReport> folds;
    size_t selected_fold = 0;
    std::vector<std::string> skipped_frames;  // frames whose fit degenerated
};

struct LoocvOptions {
    std::uint64_t cluster_seed = 42;
    int kmeans_max_iter = 100;
    double kmeans_tol = 1e-6;
    ScoreOptions score;
};

namespace detail {

struct CachedSequencePair {
    std::vector<FrameFeatureVector> pre;
    std::vector<FrameFeatureVector> post;
};

inline double effect_size(const std::vector<CachedSequencePair>& seqs, const WeightVector& w,
                          bool* degenerate = nullptr) {
    std::vector<double> pre_qi, post_qi;
    for (const auto& pair : seqs) {
        for (int side = 0; side < 2; ++side) {
            const auto& feats = side == 0 ? pair.pre : pair.post;
            if (feats.empty()) continue;
            std::vector<DirectionalScores> scores;
            scores.reserve(feats.size());
            for (const auto& f : feats) scores.push_back(directional_qi(f, w));
            const FusionResult fusion = fuse_qi(scores);
            auto& sink = side == 0 ? pre_qi : post_qi;
            sink.insert(sink.end(), fusion.per_frame_qi.begin(), fusion.per_frame_qi.end());
        }
    }
    if (pre_qi.empty() || post_qi.empty()) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    std::vector<double> pooled = pre_qi;
    pooled.insert(pooled.end(), post_qi.begin(), post_qi.end());
    const double sd = stddev_pop(pooled);
    if (sd < 1e-12) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return (mean(post_qi) - mean(pre_qi)) / sd;
}

}  // namespace detail

/// Per fold: pool the features of every patient except the held-out one,
/// cluster, derive weights; evaluate the pre-to-post effect size on the
/// held-out patient. Global weights are the fold weights with the best mean
/// effect size across all folds (ties: smallest fold index).
inline LoocvResult loocv_fit(std::span<const PatientData> patients, const LoocvOptions& opt = {}) {
    if (patients.size() < 2) throw std::invalid_argument("LOO-CV needs at least 2 patients");

    const GaussianWindow win =
        gaussian_window(opt.score.window_half_k, opt.score.window_half_l, opt.score.window_sigma);
    LoocvResult result;

    // flat job list over every frame of every pre/post sequence
    struct FrameJob {
        const Image* img;
        std::string frame_id;
        size_t patient, seq;
        int side;  // 0 = pre, 1 = post
    };
    std::vector<FrameJob> jobs_list;
    for (size_t p = 0; p < patients.size(); ++p) {
        for (size_t s = 0; s < patients[p].sequences.size(); ++s) {
            const auto& pair = patients[p].sequences[s];
            for (int side = 0; side < 2; ++side) {
                const FrameSequence& seq = side == 0 ? pair.pre : pair.post;
                for (size_t i = 0; i < seq.frames.size(); ++i) {
                    const std::string fid = seq.frames[i].source_id.empty()
                                                ? seq.sequence_id + "#" + std::to_string(i)
                                                : seq.frames[i].source_id;
                    jobs_list.push_back({&seq.frames[i], fid, p, s, side});
                }
            }
        }
    }

    std::vector<std::variant<FrameFeatureVector, std::string>> computed(
        jobs_list.size(), std::string("not computed"));
    auto worker = [&](size_t begin, size_t end) {
        for (size_t j = begin; j < end; ++j) {
            try {
                computed[j] = frame_features(mscn(*jobs_list[j].img, win, opt.score.mscn_c),
                                             jobs_list[j].frame_id, opt.score.min_fit_samples);
            } catch (const FitError& e) {
                computed[j] = std::string(e.what());
            }
        }
    };
    const int njobs = std::max(1, opt.score.jobs);
    if (njobs == 1 || jobs_list.size() < 2) {
        worker(0, jobs_list.size());
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (jobs_list.size() + njobs - 1) / njobs;
        for (int t = 0; t < njobs; ++t) {
            const size_t b = t * chunk;
            if (b >= jobs_list.size()) break;
            pool.emplace_back(worker, b, std::min(jobs_list.size(), b + chunk));
        }
        for (auto& th : pool) th.join();
    }

    // assemble the per-patient cache in job order (deterministic)
    std::vector<std::vector<detail::CachedSequencePair>> cache(patients.size());
    std::vector<std::set<std::string>> frame_ids(patients.size());
    for (size_t p = 0; p < patients.size(); ++p)
        cache[p].resize(patients[p].sequences.size());
    for (size_t j = 0; j < jobs_list.size(); ++j) {
        const FrameJob& job = jobs_list[j];
        if (std::holds_alternative<FrameFeatureVector>(computed[j])) {
            auto& pair = cache[job.patient][job.seq];
            (job.side == 0 ? pair.pre : pair.post)
                .push_back(std::get<FrameFeatureVector>(computed[j]));
            frame_ids[job.patient].insert(job.frame_id);
        } else {
            result.skipped_frames.push_back(std::get<std::string>(computed[j]));
        }
    }

    // folds: training pool excludes the held-out patient's frames entirely
    for (size_t held = 0; held < patients.size(); ++held) {
        std::vector<FrameFeatureVector> training;
        for (size_t p = 0; p < patients.size(); ++p) {
            if (p == held) continue;
            for (const auto& pair : cache[p]) {
                training.insert(training.end(), pair.pre.begin(), pair.pre.end());
                training.insert(training.end(), pair.post.begin(), pair.post.end());
            }
        }
        for (const auto& f : training)
            if (frame_ids[held].count(f.frame_id))
                throw std::logic_error("fold leakage: " + f.frame_id);
        if (training.size() < 3)
            throw std::invalid_argument("too few training frames for clustering");

        const FeatureMatrix mat = standardize(std::move(training));
        const ClusterModel model =
            kmeans(mat, 3, opt.cluster_seed, opt.kmeans_max_iter, opt.kmeans_tol);
        const CategoryLabels labels = label_clusters(model, mat);
        const WeightVector w = derive_weights(model, labels, mat);

        FoldReport fold;
        fold.held_out_patient = patients[held].patient_id;
        fold.weights = w;
        fold.effect_size = detail::effect_size(cache[held], w, &fold.degenerate_effect);
        result.folds.push_back(std::move(fold));
    }

    // selection: mean effect size of each fold's weights across all patients
    double best_mean = -std::numeric_limits<double>::infinity();
    for (size_t f = 0; f < result.folds.size(); ++f) {
        double acc = 0.0;
        for (size_t g = 0; g < patients.size(); ++g)
            acc += detail::effect_size(cache[g], result.folds[f].weights);
        const double mean_effect = acc / static_cast<double>(patients.size());
        if (mean_effect > best_mean + 1e-15) {
            best_mean = mean_effect;
            result.selected_fold = f;
        }
    }
    result.global_weights = result.folds[result.selected_fold].weights;
    return result;
}

}  // namespace qi
