#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qi/image_io.hpp"
#include "qi/preprocess.hpp"
#include "qi/serialize.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("QI_CLI_PATH");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path workspace() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "qi_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// tiny corpus spec shared by the CLI tests
fs::path tiny_spec() {
    const fs::path p = workspace() / "tiny_spec.json";
    if (!fs::exists(p)) {
        qi::CorpusSpec spec;
        spec.patients = 2;
        spec.sequences_per_patient = 1;
        spec.frames_per_sequence = 3;
        spec.width = 64;
        spec.height = 64;
        spec.base_seed = 4242;
        qi::write_text_file(p.string(), qi::corpus_spec_to_json(spec).dump(2) + "\n");
    }
    return p;
}

fs::path simulated_corpus() {
    static const fs::path dir = [] {
        const fs::path d = workspace() / "corpus";
        REQUIRE(run("simulate --out-dir " + d.string() + " --spec " + tiny_spec().string()) == 0);
        return d;
    }();
    return dir;
}

fs::path fitted_weights() {
    static const fs::path w = [] {
        const fs::path p = workspace() / "weights.json";
        REQUIRE(run("fit-weights --corpus " + (simulated_corpus() / "corpus.json").string() +
                    " --out " + p.string() + " --folds-out " + (workspace() / "folds.json").string()) ==
                0);
        return p;
    }();
    return w;
}

}  // namespace

TEST_CASE("simulate writes a loadable corpus with config echo") {
    const fs::path dir = simulated_corpus();
    CHECK(fs::exists(dir / "corpus.json"));
    CHECK(fs::exists(dir / "generation_config.json"));
    const qi::FrameSequence seq =
        qi::load_sequence(dir / "patient_0" / "seq0_pre" / "sequence.json");
    CHECK(seq.frames.size() == 3);
    CHECK(seq.frames[0].width == 64);
}

TEST_CASE("fit-weights produces sign-valid weights and fold reports") {
    const auto doc = nlohmann::json::parse(slurp(fitted_weights()));
    const qi::WeightVector w = qi::weights_from_json(doc);
    CHECK(w.w1 > 0.0);
    CHECK(w.w2 < 0.0);
    CHECK(w.w3 < 0.0);
    CHECK(doc["provenance"].size() == 2);

    const auto folds = nlohmann::json::parse(slurp(workspace() / "folds.json"));
    CHECK(folds["folds"].size() == 2);
}

TEST_CASE("fit-weights is deterministic across reruns") {
    const fs::path again = workspace() / "weights_again.json";
    REQUIRE(run("fit-weights --corpus " + (simulated_corpus() / "corpus.json").string() +
                " --out " + again.string()) == 0);
    CHECK(slurp(again) == slurp(fitted_weights()));
}

TEST_CASE("fit-weights rejects a single-patient corpus") {
    const auto corpus = nlohmann::json::parse(slurp(simulated_corpus() / "corpus.json"));
    nlohmann::json one;
    one["patients"] = nlohmann::json::array({corpus["patients"][0]});
    const fs::path p = workspace() / "one_patient.json";
    qi::write_text_file(p.string(), one.dump(2) + "\n");
    // paths inside are relative to the corpus dir, so place the file there
    const fs::path inside = simulated_corpus() / "one_patient.json";
    fs::copy_file(p, inside, fs::copy_options::overwrite_existing);
    CHECK(run("fit-weights --corpus " + inside.string() + " --out " +
              (workspace() / "nope.json").string()) != 0);
}

TEST_CASE("score emits byte-identical output across reruns and jobs") {
    const fs::path manifest = simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json";
    const fs::path r1 = workspace() / "r1.json";
    const fs::path r2 = workspace() / "r2.json";
    const fs::path c1 = workspace() / "r1.csv";
    const fs::path c2 = workspace() / "r2.csv";
    REQUIRE(run("--jobs 1 score --manifest " + manifest.string() + " --weights " +
                fitted_weights().string() + " --out " + r1.string() + " --csv " + c1.string()) == 0);
    REQUIRE(run("--jobs 4 score --manifest " + manifest.string() + " --weights " +
                fitted_weights().string() + " --out " + r2.string() + " --csv " + c2.string()) == 0);
    CHECK(slurp(r1) == slurp(r2));
    CHECK(slurp(c1) == slurp(c2));

    const auto doc = nlohmann::json::parse(slurp(r1));
    CHECK(doc["per_frame"].size() == 3);
    CHECK(doc.contains("mad_total"));
}

TEST_CASE("score fails cleanly without weights and writes nothing") {
    const fs::path manifest = simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json";
    const fs::path out = workspace() / "missing_weights_report.json";
    CHECK(run("score --manifest " + manifest.string() + " --weights " +
              (workspace() / "no_such.json").string() + " --out " + out.string()) != 0);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("score honors --skip-frames") {
    const fs::path manifest = simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json";
    const fs::path out = workspace() / "skip.json";
    REQUIRE(run("score --manifest " + manifest.string() + " --weights " + fitted_weights().string() +
                " --out " + out.string() + " --skip-frames 1") == 0);
    const auto doc = nlohmann::json::parse(slurp(out));
    CHECK(doc["skip_frames"] == 1);
    CHECK(doc["per_frame"].size() == 3);  // all frames still reported
}

TEST_CASE("preprocess writes provenance and deterministic frames") {
    const fs::path manifest = simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json";
    const fs::path out1 = workspace() / "pp1";
    const fs::path out2 = workspace() / "pp2";
    REQUIRE(run("preprocess --manifest " + manifest.string() + " --out-dir " + out1.string() +
                " --gamma 1 --sigma 0") == 0);
    REQUIRE(run("preprocess --manifest " + manifest.string() + " --out-dir " + out2.string() +
                " --gamma 1 --sigma 0") == 0);
    CHECK(slurp(out1 / "frame_0.f32") == slurp(out2 / "frame_0.f32"));

    // identity config: output equals normalized input
    const qi::FrameSequence in = qi::load_sequence(manifest);
    const qi::Image expect = qi::normalize_gray(in.frames[0]);
    const qi::Image got = qi::load_raw_f32(out1 / "frame_0.f32");
    REQUIRE(got.pixels.size() == expect.pixels.size());
    for (size_t i = 0; i < got.pixels.size(); ++i)
        CHECK(got.pixels[i] == Catch::Approx(expect.pixels[i]).margin(1e-7));

    const auto prov = nlohmann::json::parse(slurp(out1 / "provenance.json"));
    CHECK(prov["config"]["gamma"] == 1.0);
    CHECK(prov["config"]["sigma"] == 0.0);
    CHECK(prov["frames"].size() == 3);
    CHECK(fs::exists(out1 / "sequence.json"));
}

TEST_CASE("compare on identical corpora reports zero diffs") {
    const fs::path pre_list = workspace() / "pre_list.json";
    nlohmann::json list;
    list["sequences"] = {
        (simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json").string()};
    qi::write_text_file(pre_list.string(), list.dump(2) + "\n");

    const fs::path prefix = workspace() / "cmp_same";
    REQUIRE(run("compare --pre " + pre_list.string() + " --post " + pre_list.string() +
                " --weights " + fitted_weights().string() + " --out-prefix " + prefix.string()) == 0);
    const auto doc = nlohmann::json::parse(slurp(prefix.string() + ".json"));
    for (const auto& m : doc["metrics"]) {
        if (m["skipped"].get<bool>()) continue;
        CHECK(std::fabs(m["mean"].get<double>()) < 1e-12);
    }
    // fixed CSV column order
    const std::string csv = slurp(prefix.string() + ".csv");
    CHECK(csv.rfind("metric,median,mean,std\n", 0) == 0);
    CHECK(fs::exists(prefix.string() + "_frames.csv"));
}

TEST_CASE("compare detects misaligned manifests") {
    nlohmann::json two;
    two["sequences"] = {
        (simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json").string(),
        (simulated_corpus() / "patient_1" / "seq0_pre" / "sequence.json").string()};
    nlohmann::json one;
    one["sequences"] = {
        (simulated_corpus() / "patient_0" / "seq0_post" / "sequence.json").string()};
    const fs::path p2 = workspace() / "two.json";
    const fs::path p1 = workspace() / "one.json";
    qi::write_text_file(p2.string(), two.dump() + "\n");
    qi::write_text_file(p1.string(), one.dump() + "\n");
    CHECK(run("compare --pre " + p2.string() + " --post " + p1.string() + " --weights " +
              fitted_weights().string() + " --out-prefix " + (workspace() / "cmp_bad").string()) !=
          0);
}

TEST_CASE("features and pdfmc subcommands emit CSV") {
    const fs::path manifest = simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json";
    const fs::path feats = workspace() / "features.csv";
    REQUIRE(run("features --manifest " + manifest.string() + " --out " + feats.string()) == 0);
    const std::string text = slurp(feats);
    CHECK(text.rfind("frame_id,gamma_h,beta_l_h,beta_r_h", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);  // header + 3 frames

    const fs::path pdf = workspace() / "pdfmc.csv";
    const fs::path mscn_dir = workspace() / "mscn_dump";
    REQUIRE(run("pdfmc --manifest " + manifest.string() + " --out " + pdf.string() +
                " --bins 33 --dump-mscn " + mscn_dir.string()) == 0);
    const std::string pdf_text = slurp(pdf);
    CHECK(pdf_text.rfind("bin_center,density\n", 0) == 0);
    CHECK(std::count(pdf_text.begin(), pdf_text.end(), '\n') == 34);
    CHECK(fs::exists(mscn_dir / "mscn_0.f32"));
    const qi::Image field = qi::load_raw_f32(mscn_dir / "mscn_0.f32");
    CHECK(field.width == 64);
}

TEST_CASE("config file entries override flags") {
    const fs::path manifest = simulated_corpus() / "patient_0" / "seq0_pre" / "sequence.json";
    const fs::path cfg = workspace() / "cfg.json";
    qi::write_text_file(cfg.string(), "{\"skip_frames\": 1}\n");
    const fs::path out = workspace() / "cfg_report.json";
    REQUIRE(run("--config " + cfg.string() + " score --manifest " + manifest.string() +
                " --weights " + fitted_weights().string() + " --out " + out.string() +
                " --skip-frames 0") == 0);
    const auto doc = nlohmann::json::parse(slurp(out));
    CHECK(doc["skip_frames"] == 1);  // config wins over the flag
}
