#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qi/baselines.hpp"
#include "qi/clustering.hpp"
#include "qi/harness.hpp"
#include "qi/mscn.hpp"
#include "qi/quality.hpp"

namespace qi {

/// Round-trip exact float formatting for CSV output.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

inline nlohmann::json weights_to_json(const WeightVector& w,
                                      const std::vector<std::string>& provenance = {},
                                      const std::vector<std::string>& flags = {}) {
    nlohmann::json doc{{"w1", w.w1}, {"w2", w.w2}, {"w3", w.w3}, {"seed", w.seed}};
    doc["provenance"] = provenance;
    nlohmann::json flag_list = nlohmann::json::array();
    for (const auto& f : flags) flag_list.push_back(f);
    if (w.fallback) flag_list.push_back("uniform_fallback");
    doc["flags"] = flag_list;
    return doc;
}

inline WeightVector weights_from_json(const nlohmann::json& doc) {
    WeightVector w;
    w.w1 = doc.at("w1").get<double>();
    w.w2 = doc.at("w2").get<double>();
    w.w3 = doc.at("w3").get<double>();
    w.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("flags"))
        for (const auto& f : doc["flags"])
            if (f.get<std::string>() == "uniform_fallback") w.fallback = true;
    validate(w);
    return w;
}

// ---------------------------------------------------------------------------
// Sequence quality report
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const SequenceQualityReport& rep) {
    nlohmann::json doc;
    doc["sequence_id"] = rep.sequence_id;
    doc["patient_id"] = rep.patient_id;
    doc["weights"] = weights_to_json(rep.weights_used);
    doc["skip_frames"] = rep.skip_frames;
    doc["mads"] = {{"horizontal", rep.mads[0]},
                   {"vertical", rep.mads[1]},
                   {"diag_left", rep.mads[2]},
                   {"diag_right", rep.mads[3]}};
    doc["mad_total"] = rep.mad_total;
    doc["direction_weights"] = {{"horizontal", rep.direction_weights[0]},
                                {"vertical", rep.direction_weights[1]},
                                {"diag_left", rep.direction_weights[2]},
                                {"diag_right", rep.direction_weights[3]}};
    doc["uniform_fallback"] = rep.uniform_fallback;
    doc["per_frame"] = nlohmann::json::array();
    for (const auto& f : rep.per_frame) {
        doc["per_frame"].push_back({{"frame_id", f.frame_id},
                                    {"qi_h", f.scores.qi_h},
                                    {"qi_v", f.scores.qi_v},
                                    {"qi_dl", f.scores.qi_dl},
                                    {"qi_dr", f.scores.qi_dr},
                                    {"qi", f.qi}});
    }
    doc["invalid_frames"] = nlohmann::json::array();
    for (const auto& f : rep.invalid)
        doc["invalid_frames"].push_back({{"frame_id", f.frame_id}, {"reason", f.reason}});
    doc["summary"] = {
        {"mean", rep.summary.mean}, {"median", rep.summary.median}, {"std", rep.summary.stddev}};
    return doc;
}

inline std::string report_to_csv(const SequenceQualityReport& rep) {
    std::ostringstream out;
    out << "frame_id,qi_h,qi_v,qi_dl,qi_dr,qi\n";
    for (const auto& f : rep.per_frame) {
        out << f.frame_id << ',' << format_double(f.scores.qi_h) << ','
            << format_double(f.scores.qi_v) << ',' << format_double(f.scores.qi_dl) << ','
            << format_double(f.scores.qi_dr) << ',' << format_double(f.qi) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Metric diff report
// ---------------------------------------------------------------------------

inline nlohmann::json metric_diff_report_to_json(const MetricDiffReport& rep) {
    nlohmann::json doc;
    doc["metrics"] = nlohmann::json::array();
    for (const auto& m : rep.metrics) {
        doc["metrics"].push_back(
            {{"name", m.name},
             {"orientation",
              m.orientation == MetricOrientation::HigherBetter ? "higher-better" : "lower-better"},
             {"median", m.median},
             {"mean", m.mean},
             {"std", m.stddev},
             {"skipped", m.skipped},
             {"per_frame_diffs", m.per_frame_diffs}});
    }
    // reserved for externally computed pretrained-model metrics
    doc["external_metrics"] = {{"niqe", nullptr}, {"piqe", nullptr}};
    return doc;
}

inline std::string metric_diff_report_to_csv(const MetricDiffReport& rep) {
    std::ostringstream out;
    out << "metric,median,mean,std\n";
    for (const auto& m : rep.metrics) {
        if (m.skipped) continue;
        out << m.name << ',' << format_double(m.median) << ',' << format_double(m.mean) << ','
            << format_double(m.stddev) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// PDFMC + features CSV
// ---------------------------------------------------------------------------

inline std::string pdfmc_to_csv(const Pdfmc& pdf) {
    std::ostringstream out;
    out << "bin_center,density\n";
    for (size_t b = 0; b + 1 < pdf.bin_edges.size(); ++b) {
        const double center = 0.5 * (pdf.bin_edges[b] + pdf.bin_edges[b + 1]);
        out << format_double(center) << ',' << format_double(pdf.densities[b]) << '\n';
    }
    return out.str();
}

inline std::string features_to_csv(std::span<const FrameFeatureVector> rows) {
    std::ostringstream out;
    out << "frame_id";
    for (const char* dir : {"h", "v", "dl", "dr"})
        out << ",gamma_" << dir << ",beta_l_" << dir << ",beta_r_" << dir;
    for (const char* dir : {"h", "v", "dl", "dr"}) out << ",eta_" << dir;
    out << '\n';
    for (const auto& r : rows) {
        out << r.frame_id;
        for (double f : r.features) out << ',' << format_double(f);
        for (double e : r.etas) out << ',' << format_double(e);
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Corpus spec + fold reports
// ---------------------------------------------------------------------------

inline nlohmann::json corpus_spec_to_json(const CorpusSpec& s) {
    return nlohmann::json{{"schema_version", s.schema_version},
                          {"patients", s.patients},
                          {"sequences_per_patient", s.sequences_per_patient},
                          {"frames_per_sequence", s.frames_per_sequence},
                          {"width", s.width},
                          {"height", s.height},
                          {"base_seed", s.base_seed},
                          {"noise_range", {s.noise_min, s.noise_max}},
                          {"bias_range", {s.bias_min, s.bias_max}},
                          {"gamma_range", {s.gamma_min, s.gamma_max}},
                          {"frame_jitter", s.frame_jitter},
                          {"preprocess",
                           {{"normalize", s.post.normalize},
                            {"gamma", s.post.gamma},
                            {"sigma", s.post.gaussian_sigma}}}};
}

inline CorpusSpec corpus_spec_from_json(const nlohmann::json& doc) {
    CorpusSpec s;
    s.schema_version = doc.value("schema_version", 1);
    s.patients = doc.value("patients", s.patients);
    s.sequences_per_patient = doc.value("sequences_per_patient", s.sequences_per_patient);
    s.frames_per_sequence = doc.value("frames_per_sequence", s.frames_per_sequence);
    s.width = doc.value("width", s.width);
    s.height = doc.value("height", s.height);
    s.base_seed = doc.value("base_seed", s.base_seed);
    if (doc.contains("noise_range")) {
        s.noise_min = doc["noise_range"][0].get<double>();
        s.noise_max = doc["noise_range"][1].get<double>();
    }
    if (doc.contains("bias_range")) {
        s.bias_min = doc["bias_range"][0].get<double>();
        s.bias_max = doc["bias_range"][1].get<double>();
    }
    if (doc.contains("gamma_range")) {
        s.gamma_min = doc["gamma_range"][0].get<double>();
        s.gamma_max = doc["gamma_range"][1].get<double>();
    }
    s.frame_jitter = doc.value("frame_jitter", s.frame_jitter);
    if (doc.contains("preprocess")) {
        const auto& pp = doc["preprocess"];
        s.post.normalize = pp.value("normalize", s.post.normalize);
        s.post.gamma = pp.value("gamma", s.post.gamma);
        s.post.gaussian_sigma = pp.value("sigma", s.post.gaussian_sigma);
    }
    return s;
}

inline nlohmann::json folds_to_json(const LoocvResult& result) {
    nlohmann::json doc;
    doc["selected_fold"] = result.selected_fold;
    doc["folds"] = nlohmann::json::array();
    for (const auto& f : result.folds) {
        doc["folds"].push_back({{"held_out_patient", f.held_out_patient},
                                {"weights", weights_to_json(f.weights)},
                                {"effect_size", f.effect_size},
                                {"degenerate_effect", f.degenerate_effect}});
    }
    doc["skipped_frames"] = result.skipped_frames;
    return doc;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

}  // namespace qi
