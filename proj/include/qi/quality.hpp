#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "qi/aggd.hpp"
#include "qi/clustering.hpp"
#include "qi/image.hpp"
#include "qi/preprocess.hpp"
#include "qi/stats.hpp"

namespace qi {

/// One quality score per product direction (weighted raw AGGD parameters).
struct DirectionalScores {
    double qi_h = 0.0;
    double qi_v = 0.0;
    double qi_dl = 0.0;
    double qi_dr = 0.0;
    std::string frame_id;

    std::array<double, 4> as_array() const { return {qi_h, qi_v, qi_dl, qi_dr}; }
};

/// qi_d = w1*gamma_d + w2*beta_l,d + w3*beta_r,d on raw parameters.
inline DirectionalScores directional_qi(const FrameFeatureVector& f, const WeightVector& w) {
    std::array<double, 4> s{};
    for (int d = 0; d < 4; ++d)
        s[d] = w.w1 * f.gamma_of(d) + w.w2 * f.beta_left_of(d) + w.w3 * f.beta_right_of(d);
    return {s[0], s[1], s[2], s[3], f.frame_id};
}

struct FusionResult {
    std::vector<double> per_frame_qi;
    std::array<double, 4> mads{};
    double mad_total = 0.0;
    std::array<double, 4> direction_weights{};
    bool uniform_fallback = false;  // MAD_total ~ 0 forced uniform 0.25 weights
};

inline constexpr double kMadTotalEpsilon = 1e-12;

/// Per-direction MAD over the frame scores, then each frame's fused score
/// qi = sum_d (MAD_d / MAD_total) * qi_d. A vanishing MAD_total switches to
/// uniform direction weights and flags the result.
inline FusionResult fuse_qi(std::span<const DirectionalScores> frames) {
    if (frames.empty()) throw std::invalid_argument("fuse_qi needs at least one frame");
    FusionResult out;
    std::array<std::vector<double>, 4> per_dir;
    for (auto& v : per_dir) v.reserve(frames.size());
    for (const auto& f : frames) {
        const auto s = f.as_array();
        for (int d = 0; d < 4; ++d) per_dir[d].push_back(s[d]);
    }
    out.mad_total = 0.0;
    for (int d = 0; d < 4; ++d) {
        out.mads[d] = mad(per_dir[d]);
        out.mad_total += out.mads[d];
    }
    if (out.mad_total < kMadTotalEpsilon) {
        out.direction_weights = {0.25, 0.25, 0.25, 0.25};
        out.uniform_fallback = true;
    } else {
        for (int d = 0; d < 4; ++d) out.direction_weights[d] = out.mads[d] / out.mad_total;
    }
    out.per_frame_qi.reserve(frames.size());
    for (const auto& f : frames) {
        const auto s = f.as_array();
        double qi = 0.0;
        for (int d = 0; d < 4; ++d) qi += out.direction_weights[d] * s[d];
        out.per_frame_qi.push_back(qi);
    }
    return out;
}

struct FrameScore {
    std::string frame_id;
    DirectionalScores scores;
    double qi = 0.0;
};

struct InvalidFrame {
    std::string frame_id;
    std::string reason;
};

struct SequenceSummary {
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
};

struct SequenceQualityReport {
    std::string sequence_id;
    std::string patient_id;
    std::vector<FrameScore> per_frame;  // valid frames, in sequence order
    std::vector<InvalidFrame> invalid;  // degenerate frames with reasons
    std::array<double, 4> mads{};
    double mad_total = 0.0;
    std::array<double, 4> direction_weights{};
    bool uniform_fallback = false;
    WeightVector weights_used;
    int skip_frames = 0;
    SequenceSummary summary;
};

struct ScoreOptions {
    int skip_frames = 0;   // leading frames excluded from MAD fitting, still scored
    int jobs = 1;          // frame-level parallelism; output independent of value
    double mscn_c = 1.0;
    int window_half_k = 3;
    int window_half_l = 3;
    double window_sigma = 7.0 / 6.0;
    long min_fit_samples = kMinFitSamples;
};

/// Extracts features for every frame of a sequence; failed frames carry their
/// error message instead. Work is split across `jobs` threads; results are
/// stored by frame index so the output does not depend on scheduling.
inline std::vector<std::variant<FrameFeatureVector, std::string>> sequence_features(
    const FrameSequence& seq, const std::optional<PreprocessConfig>& pp, const ScoreOptions& opt) {
    const GaussianWindow win = gaussian_window(opt.window_half_k, opt.window_half_l, opt.window_sigma);
    std::vector<std::variant<FrameFeatureVector, std::string>> out(seq.frames.size(),
                                                                   std::string("not computed"));
    auto worker = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const Image& raw = seq.frames[i];
            std::string frame_id = raw.source_id.empty()
                                       ? seq.sequence_id + "#" + std::to_string(i)
                                       : raw.source_id;
            try {
                const Image frame = pp ? preprocess_pipeline(raw, *pp) : raw;
                const MscnField field = mscn(frame, win, opt.mscn_c);
                out[i] = frame_features(field, std::move(frame_id), opt.min_fit_samples);
            } catch (const std::exception& e) {
                out[i] = std::string(e.what());
            }
        }
    };
    const int jobs = std::max(1, opt.jobs);
    if (jobs == 1 || seq.frames.size() < 2) {
        worker(0, seq.frames.size());
    } else {
        std::vector<std::thread> pool;
        const size_t chunk = (seq.frames.size() + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t) {
            const size_t b = t * chunk;
            if (b >= seq.frames.size()) break;
            pool.emplace_back(worker, b, std::min(seq.frames.size(), b + chunk));
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

/// Full pipeline for one sequence: optional preprocessing, MSCN, directional
/// AGGD features, directional scores, MAD-weighted fusion. Degenerate frames
/// are excluded from fusion and listed with reasons.
inline SequenceQualityReport score_sequence(const FrameSequence& seq, const WeightVector& w,
                                            const std::optional<PreprocessConfig>& pp = std::nullopt,
                                            const ScoreOptions& opt = {}) {
    validate(seq);
    validate(w);
    if (opt.skip_frames < 0) throw std::invalid_argument("skip_frames must be >= 0");

    const auto features = sequence_features(seq, pp, opt);

    SequenceQualityReport report;
    report.sequence_id = seq.sequence_id;
    report.patient_id = seq.patient_id;
    report.weights_used = w;
    report.skip_frames = opt.skip_frames;

    std::vector<DirectionalScores> valid_scores;
    std::vector<size_t> valid_index;
    for (size_t i = 0; i < features.size(); ++i) {
        if (std::holds_alternative<FrameFeatureVector>(features[i])) {
            valid_scores.push_back(directional_qi(std::get<FrameFeatureVector>(features[i]), w));
            valid_index.push_back(i);
        } else {
            const std::string frame_id = seq.frames[i].source_id.empty()
                                             ? seq.sequence_id + "#" + std::to_string(i)
                                             : seq.frames[i].source_id;
            report.invalid.push_back({frame_id, std::get<std::string>(features[i])});
        }
    }
    if (valid_scores.empty())
        throw std::runtime_error("all frames invalid in sequence " + seq.sequence_id);

    std::vector<DirectionalScores> fusion_set;
    for (size_t v = 0; v < valid_scores.size(); ++v)
        if (valid_index[v] >= static_cast<size_t>(opt.skip_frames)) fusion_set.push_back(valid_scores[v]);
    if (fusion_set.empty())
        throw std::invalid_argument("skip_frames leaves no frames for MAD fitting");

    const FusionResult fusion = fuse_qi(fusion_set);
    report.mads = fusion.mads;
    report.mad_total = fusion.mad_total;
    report.direction_weights = fusion.direction_weights;
    report.uniform_fallback = fusion.uniform_fallback;

    std::vector<double> qis;
    qis.reserve(valid_scores.size());
    for (const auto& s : valid_scores) {
        const auto arr = s.as_array();
        double qi = 0.0;
        for (int d = 0; d < 4; ++d) qi += fusion.direction_weights[d] * arr[d];
        report.per_frame.push_back({s.frame_id, s, qi});
        qis.push_back(qi);
    }
    report.summary = {mean(qis), median(qis), stddev_pop(qis)};
    return report;
}

}  // namespace qi
