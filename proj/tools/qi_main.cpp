// qi: batch front end for the no-reference frame quality pipeline.
//
// Subcommands: preprocess, score, fit-weights, compare, simulate, features,
// pdfmc. All randomness flows from explicit seeds (flag, config, or QI_SEED);
// reruns with identical inputs produce byte-identical outputs regardless of
// --jobs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qi/qi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 42;
    int jobs = 1;
    std::string config_path;
};

std::uint64_t env_default_seed() {
    if (const char* env = std::getenv("QI_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            std::cerr << "warning: ignoring unparseable QI_SEED\n";
        }
    }
    return 42;
}

void emit_error_record(const std::string& command, const std::string& message,
                       const std::string& context = {}) {
    std::cerr << "error: " << message << "\n";
    json rec{{"error", {{"command", command}, {"message", message}}}};
    if (!context.empty()) rec["error"]["context"] = context;
    std::cerr << rec.dump() << "\n";
}

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json doc;
    in >> doc;
    return doc;
}

// Config JSON entries override flag values (documented precedence).
template <typename T>
void config_override(const json& cfg, const char* key, T& value) {
    if (cfg.contains(key)) value = cfg[key].get<T>();
}

std::optional<qi::PreprocessConfig> make_pp(bool enabled, bool no_normalize, double gamma,
                                            double sigma) {
    if (!enabled) return std::nullopt;
    qi::PreprocessConfig cfg;
    cfg.normalize = !no_normalize;
    cfg.gamma = gamma;
    cfg.gaussian_sigma = sigma;
    return cfg;
}

std::vector<fs::path> sequence_list(const fs::path& list_path) {
    const json doc = load_json_file(list_path);
    std::vector<fs::path> out;
    if (doc.contains("sequences")) {
        for (const auto& s : doc["sequences"]) {
            fs::path p = s.get<std::string>();
            if (p.is_relative()) p = list_path.parent_path() / p;
            out.push_back(p);
        }
    } else if (doc.contains("frames")) {
        out.push_back(list_path);  // a single sequence manifest is accepted directly
    } else {
        throw std::runtime_error("expected a sequence list or sequence manifest: " +
                                 list_path.string());
    }
    return out;
}

// ---------------------------------------------------------------------------

int cmd_preprocess(const GlobalOpts& g, const std::string& manifest, const std::string& out_dir,
                   double gamma, double sigma, bool no_normalize, bool keep_going) {
    const qi::FrameSequence seq = qi::load_sequence(manifest);
    const qi::PreprocessConfig cfg{!no_normalize, gamma, sigma};
    fs::create_directories(out_dir);

    json provenance;
    provenance["config"] = {{"normalize", cfg.normalize},
                            {"gamma", cfg.gamma},
                            {"sigma", cfg.gaussian_sigma},
                            {"seed", g.seed}};
    provenance["frames"] = json::array();
    std::vector<std::string> frame_paths;
    int failures = 0;

    for (size_t i = 0; i < seq.frames.size(); ++i) {
        const std::string name = "frame_" + std::to_string(i) + ".f32";
        json entry{{"index", i}, {"source", seq.frames[i].source_id}, {"output", name}};
        try {
            const qi::Image out = qi::preprocess_pipeline(seq.frames[i], cfg);
            qi::save_raw_f32(out, fs::path(out_dir) / name);
            entry["degenerate"] = out.degenerate;
            frame_paths.push_back(name);
        } catch (const std::exception& e) {
            ++failures;
            entry["failed"] = true;
            entry["reason"] = e.what();
            emit_error_record("preprocess", e.what(), seq.frames[i].source_id);
            if (!keep_going) return 1;
        }
        provenance["frames"].push_back(entry);
    }
    provenance["partial"] = failures > 0;

    qi::FrameSequence meta;
    meta.sequence_id = seq.sequence_id;
    meta.patient_id = seq.patient_id;
    qi::save_sequence_manifest(meta, frame_paths, fs::path(out_dir) / "sequence.json");
    qi::write_text_file((fs::path(out_dir) / "provenance.json").string(), provenance.dump(2) + "\n");
    return failures > 0 && !keep_going ? 1 : 0;
}

int cmd_score(const GlobalOpts& g, const std::string& manifest, const std::string& weights_path,
              const std::string& out_path, const std::string& csv_path, int skip_frames,
              bool preprocess, bool no_normalize, double gamma, double sigma) {
    const qi::WeightVector w = qi::weights_from_json(load_json_file(weights_path));
    const qi::FrameSequence seq = qi::load_sequence(manifest);
    qi::ScoreOptions opt;
    opt.skip_frames = skip_frames;
    opt.jobs = g.jobs;
    const qi::SequenceQualityReport rep =
        qi::score_sequence(seq, w, make_pp(preprocess, no_normalize, gamma, sigma), opt);
    qi::write_text_file(out_path, qi::report_to_json(rep).dump(2) + "\n");
    if (!csv_path.empty()) qi::write_text_file(csv_path, qi::report_to_csv(rep));
    return 0;
}

std::vector<qi::PatientData> load_corpus_manifest(const fs::path& path) {
    const json doc = load_json_file(path);
    if (!doc.contains("patients") || doc["patients"].empty())
        throw std::runtime_error("corpus manifest lists no patients");
    std::vector<qi::PatientData> corpus;
    for (const auto& p : doc["patients"]) {
        qi::PatientData patient;
        patient.patient_id = p.at("patient_id").get<std::string>();
        for (const auto& s : p.at("sequences")) {
            fs::path pre = s.at("pre").get<std::string>();
            fs::path post = s.at("post").get<std::string>();
            if (pre.is_relative()) pre = path.parent_path() / pre;
            if (post.is_relative()) post = path.parent_path() / post;
            qi::SequencePair pair;
            pair.pre = qi::load_sequence(pre);
            pair.post = qi::load_sequence(post);
            patient.sequences.push_back(std::move(pair));
        }
        corpus.push_back(std::move(patient));
    }
    return corpus;
}

int cmd_fit_weights(const GlobalOpts& g, const std::string& corpus_path, const std::string& out_path,
                    const std::string& folds_path) {
    const auto corpus = load_corpus_manifest(corpus_path);
    if (corpus.size() < 2) throw std::runtime_error("fit-weights needs at least 2 patients");
    qi::LoocvOptions opt;
    opt.cluster_seed = g.seed;
    opt.score.jobs = g.jobs;
    const qi::LoocvResult result = qi::loocv_fit(corpus, opt);

    std::vector<std::string> provenance;
    for (const auto& f : result.folds) provenance.push_back(f.held_out_patient);
    std::vector<std::string> flags;
    if (!result.skipped_frames.empty()) flags.push_back("skipped_frames");
    qi::write_text_file(out_path,
                        qi::weights_to_json(result.global_weights, provenance, flags).dump(2) + "\n");
    if (!folds_path.empty())
        qi::write_text_file(folds_path, qi::folds_to_json(result).dump(2) + "\n");
    return 0;
}

int cmd_compare(const GlobalOpts& g, const std::string& pre_path, const std::string& post_path,
                const std::string& weights_path, const std::string& out_prefix,
                const std::string& regions_path) {
    const qi::WeightVector w = qi::weights_from_json(load_json_file(weights_path));
    const auto pre_list = sequence_list(pre_path);
    const auto post_list = sequence_list(post_path);
    if (pre_list.size() != post_list.size())
        throw std::runtime_error("manifest misalignment: " + std::to_string(pre_list.size()) +
                                 " pre vs " + std::to_string(post_list.size()) + " post sequences");

    qi::RegionSpec regions;
    if (!regions_path.empty()) {
        const json doc = load_json_file(regions_path);
        regions.mode = qi::RegionSpec::Mode::Explicit;
        regions.roi = {doc["roi"]["x"], doc["roi"]["y"], doc["roi"]["w"], doc["roi"]["h"]};
        regions.background = {doc["background"]["x"], doc["background"]["y"],
                              doc["background"]["w"], doc["background"]["h"]};
    }

    std::vector<double> qi_pre, qi_post, cnr_pre, cnr_post, ten_pre, ten_post, ent_pre, ent_post;
    std::ostringstream frames_csv;
    frames_csv << "sequence_index,frame_index,qi_pre,qi_post\n";

    qi::ScoreOptions opt;
    opt.jobs = g.jobs;
    for (size_t s = 0; s < pre_list.size(); ++s) {
        const qi::FrameSequence pre = qi::load_sequence(pre_list[s]);
        const qi::FrameSequence post = qi::load_sequence(post_list[s]);
        if (pre.frames.size() != post.frames.size())
            throw std::runtime_error("manifest misalignment in sequence " + std::to_string(s) +
                                     ": differing frame counts");
        const auto rep_pre = qi::score_sequence(pre, w, std::nullopt, opt);
        const auto rep_post = qi::score_sequence(post, w, std::nullopt, opt);
        if (rep_pre.per_frame.size() != rep_post.per_frame.size())
            throw std::runtime_error("sequence " + std::to_string(s) +
                                     ": differing valid-frame counts");
        for (size_t f = 0; f < rep_pre.per_frame.size(); ++f) {
            qi_pre.push_back(rep_pre.per_frame[f].qi);
            qi_post.push_back(rep_post.per_frame[f].qi);
            frames_csv << s << ',' << f << ',' << qi::format_double(rep_pre.per_frame[f].qi) << ','
                       << qi::format_double(rep_post.per_frame[f].qi) << '\n';
        }
        for (size_t f = 0; f < pre.frames.size(); ++f) {
            cnr_pre.push_back(qi::cnr(pre.frames[f], regions));
            cnr_post.push_back(qi::cnr(post.frames[f], regions));
            ten_pre.push_back(qi::tenengrad(pre.frames[f]));
            ten_post.push_back(qi::tenengrad(post.frames[f]));
            ent_pre.push_back(qi::entropy(pre.frames[f]));
            ent_post.push_back(qi::entropy(post.frames[f]));
        }
    }

    qi::MetricDiffReport report;
    using MO = qi::MetricOrientation;
    report.metrics.push_back(qi::metric_diff("qi", MO::HigherBetter, qi_pre, qi_post));
    report.metrics.push_back(qi::metric_diff("cnr", MO::HigherBetter, cnr_pre, cnr_post));
    report.metrics.push_back(qi::metric_diff("tenengrad", MO::HigherBetter, ten_pre, ten_post));
    report.metrics.push_back(qi::metric_diff("entropy", MO::HigherBetter, ent_pre, ent_post));

    qi::write_text_file(out_prefix + ".json", qi::metric_diff_report_to_json(report).dump(2) + "\n");
    qi::write_text_file(out_prefix + ".csv", qi::metric_diff_report_to_csv(report));
    qi::write_text_file(out_prefix + "_frames.csv", frames_csv.str());
    return 0;
}

int cmd_simulate(const GlobalOpts& g, const std::string& out_dir, const std::string& spec_path,
                 bool seed_given) {
    qi::CorpusSpec spec;
    if (!spec_path.empty()) spec = qi::corpus_spec_from_json(load_json_file(spec_path));
    if (seed_given) spec.base_seed = g.seed;
    const auto corpus = qi::generate_corpus(spec);

    fs::create_directories(out_dir);
    json corpus_doc;
    corpus_doc["patients"] = json::array();
    for (const auto& patient : corpus) {
        json pdoc{{"patient_id", patient.patient_id}, {"sequences", json::array()}};
        const fs::path pdir = fs::path(out_dir) / patient.patient_id;
        fs::create_directories(pdir);
        for (size_t s = 0; s < patient.sequences.size(); ++s) {
            const auto& pair = patient.sequences[s];
            json sdoc;
            for (int side = 0; side < 2; ++side) {
                const qi::FrameSequence& seq = side == 0 ? pair.pre : pair.post;
                const std::string tag = side == 0 ? "pre" : "post";
                const fs::path fdir = pdir / ("seq" + std::to_string(s) + "_" + tag);
                fs::create_directories(fdir);
                std::vector<std::string> frame_paths;
                for (size_t f = 0; f < seq.frames.size(); ++f) {
                    const std::string name = "frame_" + std::to_string(f) + ".f32";
                    qi::save_raw_f32(seq.frames[f], fdir / name);
                    frame_paths.push_back(name);
                }
                const fs::path manifest = fdir / "sequence.json";
                qi::save_sequence_manifest(seq, frame_paths, manifest);
                sdoc[tag] = fs::relative(manifest, out_dir).string();
            }
            pdoc["sequences"].push_back(sdoc);
        }
        corpus_doc["patients"].push_back(pdoc);
    }
    qi::write_text_file((fs::path(out_dir) / "corpus.json").string(), corpus_doc.dump(2) + "\n");
    qi::write_text_file((fs::path(out_dir) / "generation_config.json").string(),
                        qi::corpus_spec_to_json(spec).dump(2) + "\n");
    return 0;
}

int cmd_features(const GlobalOpts& g, const std::string& manifest, const std::string& out_path,
                 bool preprocess, bool no_normalize, double gamma, double sigma) {
    const qi::FrameSequence seq = qi::load_sequence(manifest);
    qi::ScoreOptions opt;
    opt.jobs = g.jobs;
    const auto feats =
        qi::sequence_features(seq, make_pp(preprocess, no_normalize, gamma, sigma), opt);
    std::vector<qi::FrameFeatureVector> rows;
    for (const auto& f : feats)
        if (std::holds_alternative<qi::FrameFeatureVector>(f))
            rows.push_back(std::get<qi::FrameFeatureVector>(f));
    qi::write_text_file(out_path, qi::features_to_csv(rows));
    return 0;
}

int cmd_pdfmc(const GlobalOpts&, const std::string& manifest, const std::string& out_path, int bins,
              int frame_index, const std::string& dump_dir, bool preprocess, bool no_normalize,
              double gamma, double sigma) {
    const qi::FrameSequence seq = qi::load_sequence(manifest);
    const auto pp = make_pp(preprocess, no_normalize, gamma, sigma);
    const qi::GaussianWindow win = qi::gaussian_window();

    std::vector<double> pooled;
    for (size_t i = 0; i < seq.frames.size(); ++i) {
        if (frame_index >= 0 && static_cast<size_t>(frame_index) != i) continue;
        const qi::Image img = pp ? qi::preprocess_pipeline(seq.frames[i], *pp) : seq.frames[i];
        const qi::MscnField field = qi::mscn(img, win);
        pooled.insert(pooled.end(), field.values.begin(), field.values.end());
        if (!dump_dir.empty()) {
            fs::create_directories(dump_dir);
            qi::save_raw_f32(field.values.data(), field.width, field.height,
                             fs::path(dump_dir) / ("mscn_" + std::to_string(i) + ".f32"));
        }
    }
    if (pooled.empty()) throw std::runtime_error("no frames selected");
    qi::write_text_file(out_path, qi::pdfmc_to_csv(qi::pdfmc_from_values(pooled, bins)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"no-reference frame quality toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    g.seed = env_default_seed();
    bool seed_given = false;
    app.add_option("--seed", g.seed, "seed for all randomized stages (default: QI_SEED env or 42)")
        ->each([&](const std::string&) { seed_given = true; });
    app.add_option("--jobs", g.jobs, "frame-level worker threads")->check(CLI::PositiveNumber);
    app.add_option("--config", g.config_path, "JSON config; entries override flags");

    // preprocess
    auto* sp = app.add_subcommand("preprocess", "run the enhancement pipeline over a sequence");
    std::string p_manifest, p_outdir;
    double p_gamma = 0.8, p_sigma = 1.0;
    bool p_nonorm = false, p_continue = false;
    sp->add_option("--manifest", p_manifest)->required();
    sp->add_option("--out-dir", p_outdir)->required();
    sp->add_option("--gamma", p_gamma, "gamma exponent (<=0 disables)");
    sp->add_option("--sigma", p_sigma, "gaussian sigma in pixels (<=0 disables)");
    sp->add_flag("--no-normalize", p_nonorm);
    sp->add_flag("--continue", p_continue, "keep going past frame failures");

    // score
    auto* sc = app.add_subcommand("score", "compute the sequence quality report");
    std::string s_manifest, s_weights, s_out = "report.json", s_csv;
    int s_skip = 0;
    bool s_pp = false, s_nonorm = false;
    double s_gamma = 0.8, s_sigma = 1.0;
    sc->add_option("--manifest", s_manifest)->required();
    sc->add_option("--weights", s_weights)->required();
    sc->add_option("--out", s_out);
    sc->add_option("--csv", s_csv, "also write the per-frame CSV");
    sc->add_option("--skip-frames", s_skip, "leading frames excluded from MAD fitting");
    sc->add_flag("--preprocess", s_pp, "preprocess frames before scoring");
    sc->add_flag("--no-normalize", s_nonorm);
    sc->add_option("--gamma", s_gamma);
    sc->add_option("--sigma", s_sigma);

    // fit-weights
    auto* fw = app.add_subcommand("fit-weights", "LOO-CV weight fitting over a pre/post corpus");
    std::string f_corpus, f_out = "weights.json", f_folds;
    fw->add_option("--corpus", f_corpus)->required();
    fw->add_option("--out", f_out);
    fw->add_option("--folds-out", f_folds, "also write per-fold reports");

    // compare
    auto* cp = app.add_subcommand("compare", "metric diff report between two corpora");
    std::string c_pre, c_post, c_weights, c_prefix = "compare", c_regions;
    cp->add_option("--pre", c_pre)->required();
    cp->add_option("--post", c_post)->required();
    cp->add_option("--weights", c_weights)->required();
    cp->add_option("--out-prefix", c_prefix);
    cp->add_option("--regions", c_regions, "explicit CNR regions JSON");

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a seeded synthetic pre/post corpus");
    std::string m_outdir, m_spec;
    sim->add_option("--out-dir", m_outdir)->required();
    sim->add_option("--spec", m_spec, "generation config JSON (defaults used otherwise)");

    // features
    auto* ft = app.add_subcommand("features", "dump per-frame AGGD feature CSV");
    std::string t_manifest, t_out = "features.csv";
    bool t_pp = false, t_nonorm = false;
    double t_gamma = 0.8, t_sigma = 1.0;
    ft->add_option("--manifest", t_manifest)->required();
    ft->add_option("--out", t_out);
    ft->add_flag("--preprocess", t_pp);
    ft->add_flag("--no-normalize", t_nonorm);
    ft->add_option("--gamma", t_gamma);
    ft->add_option("--sigma", t_sigma);

    // pdfmc
    auto* pd = app.add_subcommand("pdfmc", "dump MSCN coefficient density CSV");
    std::string d_manifest, d_out = "pdfmc.csv", d_dump;
    int d_bins = 101, d_frame = -1;
    bool d_pp = false, d_nonorm = false;
    double d_gamma = 0.8, d_sigma = 1.0;
    pd->add_option("--manifest", d_manifest)->required();
    pd->add_option("--out", d_out);
    pd->add_option("--bins", d_bins)->check(CLI::Range(2, 100000));
    pd->add_option("--frame", d_frame, "restrict to one frame index");
    pd->add_option("--dump-mscn", d_dump, "directory for raw-f32 MSCN fields");
    pd->add_flag("--preprocess", d_pp);
    pd->add_flag("--no-normalize", d_nonorm);
    pd->add_option("--gamma", d_gamma);
    pd->add_option("--sigma", d_sigma);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!g.config_path.empty()) {
            const json cfg = load_json_file(g.config_path);
            config_override(cfg, "seed", g.seed);
            if (cfg.contains("seed")) seed_given = true;
            config_override(cfg, "jobs", g.jobs);
            config_override(cfg, "gamma", p_gamma);
            config_override(cfg, "gamma", s_gamma);
            config_override(cfg, "gamma", t_gamma);
            config_override(cfg, "gamma", d_gamma);
            config_override(cfg, "sigma", p_sigma);
            config_override(cfg, "sigma", s_sigma);
            config_override(cfg, "sigma", t_sigma);
            config_override(cfg, "sigma", d_sigma);
            config_override(cfg, "skip_frames", s_skip);
            config_override(cfg, "bins", d_bins);
        }

        if (sp->parsed())
            return cmd_preprocess(g, p_manifest, p_outdir, p_gamma, p_sigma, p_nonorm, p_continue);
        if (sc->parsed())
            return cmd_score(g, s_manifest, s_weights, s_out, s_csv, s_skip, s_pp, s_nonorm, s_gamma,
                             s_sigma);
        if (fw->parsed()) return cmd_fit_weights(g, f_corpus, f_out, f_folds);
        if (cp->parsed()) return cmd_compare(g, c_pre, c_post, c_weights, c_prefix, c_regions);
        if (sim->parsed()) return cmd_simulate(g, m_outdir, m_spec, seed_given);
        if (ft->parsed())
            return cmd_features(g, t_manifest, t_out, t_pp, t_nonorm, t_gamma, t_sigma);
        if (pd->parsed())
            return cmd_pdfmc(g, d_manifest, d_out, d_bins, d_frame, d_dump, d_pp, d_nonorm, d_gamma,
                             d_sigma);
    } catch (const std::exception& e) {
        emit_error_record(app.get_subcommands().empty() ? "qi" : app.get_subcommands()[0]->get_name(),
                          e.what());
        return 1;
    }
    return 0;
}
