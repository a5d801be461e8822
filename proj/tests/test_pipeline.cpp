#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "deltarad/csvio.hpp"
#include "deltarad/dosimetry.hpp"
#include "deltarad/pipeline.hpp"
#include "deltarad/registration.hpp"

using namespace deltarad;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "deltarad_pipeline" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// byte-compare every regular file under two trees
void check_trees_identical(const fs::path& a, const fs::path& b) {
    std::map<std::string, fs::path> files_a, files_b;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) files_a[fs::relative(e.path(), a).string()] = e.path();
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) files_b[fs::relative(e.path(), b).string()] = e.path();
    REQUIRE(files_a.size() == files_b.size());
    for (const auto& [rel, path] : files_a) {
        REQUIRE(files_b.count(rel));
        INFO("file ", rel);
        CHECK(slurp(path) == slurp(files_b[rel]));
    }
}

PipelineConfig demo_config(const fs::path& demo_root, const std::string& out_name) {
    PipelineConfig cfg = PipelineConfig::load((demo_root / "config.json").string());
    cfg.output_dir = (demo_root / out_name).string();
    return cfg;
}

const fs::path& shared_demo() {
    static const fs::path root = [] {
        const fs::path p = fresh_dir("demo_inputs");
        generate_demo(p.string(), 4242);
        return p;
    }();
    return root;
}

}  // namespace

TEST_CASE("demo generator writes a loadable, valid config and inputs") {
    const fs::path& root = shared_demo();
    CHECK(fs::exists(root / "patients.csv"));
    CHECK(fs::exists(root / "lesions.csv"));
    CHECK(fs::exists(root / "images/P01/ct.nii.gz"));
    CHECK(fs::exists(root / "images/P01/mri.nii.gz"));
    const PipelineConfig cfg = demo_config(root, "out_probe");
    CHECK(cfg.seed == 4242);
    CHECK(cfg.families.size() == 5);
}

TEST_CASE("config validation errors name the offending field") {
    const fs::path dir = fresh_dir("bad_config");
    {
        std::ofstream os(dir / "config.json");
        os << R"({"seed": 1, "paths": {"patients_csv": "nope.csv", "lesions_csv": "nope.csv",
                 "image_root": ".", "output_dir": "out"}})";
    }
    CHECK_THROWS_WITH_AS(PipelineConfig::load((dir / "config.json").string()),
                         doctest::Contains("patients_csv"), std::runtime_error);
    {
        std::ofstream os(dir / "config2.json");
        os << R"({"paths": {}})";
    }
    CHECK_THROWS_WITH_AS(PipelineConfig::load((dir / "config2.json").string()),
                         doctest::Contains("seed"), std::runtime_error);
}

TEST_CASE("stage dependencies are enforced") {
    const PipelineConfig cfg = demo_config(shared_demo(), "out_deps");
    CHECK_THROWS_WITH_AS(run_evaluate(cfg), doctest::Contains("missing trained models"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(run_features(cfg), doctest::Contains("preprocess"),
                         std::runtime_error);
}

TEST_CASE("full pipeline runs and its artifacts are complete") {
    const PipelineConfig cfg = demo_config(shared_demo(), "out_full");
    run_all(cfg);

    const fs::path out(cfg.output_dir);
    CHECK(fs::exists(out / "preprocessed/P01_ct.nii.gz"));
    CHECK(fs::exists(out / "register/report.csv"));
    CHECK(fs::exists(out / "register/P01_transform.txt"));
    CHECK(fs::exists(out / "dose/lesion_summary.csv"));
    CHECK(fs::exists(out / "features/features.csv"));
    CHECK(fs::exists(out / "cohort/table1.csv"));
    CHECK(fs::exists(out / "cohort/intervals.svg"));
    CHECK(fs::exists(out / "train/DT.model"));
    CHECK(fs::exists(out / "train/SVM.model"));
    CHECK(fs::exists(out / "train/cv_results.csv"));
    CHECK(fs::exists(out / "evaluate/metrics.csv"));
    CHECK(fs::exists(out / "evaluate/metrics.json"));
    CHECK(fs::exists(out / "evaluate/confusion_RF.csv"));
    CHECK(fs::exists(out / "evaluate/importances_RF.csv"));
    CHECK(fs::exists(out / "evaluate/importances_RF.svg"));

    // every CSV artifact carries the config stamp
    const std::string stamp = cfg.stamp();
    for (const char* rel : {"register/report.csv", "dose/lesion_summary.csv",
                            "features/features.csv", "cohort/table1.csv",
                            "train/cv_results.csv", "evaluate/metrics.csv"}) {
        INFO("artifact ", rel);
        CHECK(slurp(out / rel).find(stamp) != std::string::npos);
    }

    // the feature table holds roi/isodose/delta rows per lesion
    const csv::Table features = csv::read_file((out / "features/features.csv").string());
    const auto lesions = load_lesions((shared_demo() / "lesions.csv").string());
    CHECK(features.rows.size() == lesions.size() * 3);
    CHECK(features.header.size() == 3 + 34);

    // importances in the report files are the top 8
    const csv::Table imp = csv::read_file((out / "evaluate/importances_RF.csv").string());
    CHECK(imp.rows.size() == 8);

    // the importance SVG draws one bar per reported feature, and the
    // interval-histogram SVG one bar per CSV bin
    auto count_bars = [&](const fs::path& svg) {
        const std::string body = slurp(svg);
        std::size_t bars = 0;
        for (std::size_t pos = body.find("<rect"); pos != std::string::npos;
             pos = body.find("<rect", pos + 1))
            ++bars;
        return bars;
    };
    CHECK(count_bars(out / "evaluate/importances_RF.svg") == imp.rows.size());
    const csv::Table hist = csv::read_file((out / "cohort/interval_histogram.csv").string());
    CHECK(count_bars(out / "cohort/intervals.svg") == hist.rows.size());
}

TEST_CASE("reruns with the same config and seed are byte-identical") {
    const fs::path& root = shared_demo();
    const PipelineConfig cfg1 = demo_config(root, "out_det1");
    const PipelineConfig cfg2 = demo_config(root, "out_det2");
    CHECK(cfg1.config_hash() == cfg2.config_hash());  // output_dir excluded from the hash
    run_all(cfg1);
    run_all(cfg2);
    check_trees_identical(cfg1.output_dir, cfg2.output_dir);
}

TEST_CASE("register applies vendor-exported transforms when provided") {
    const fs::path& root = shared_demo();
    PipelineConfig cfg = demo_config(root, "out_external");
    const fs::path ext = fresh_dir("external_transforms");
    const auto lesions = load_lesions((root / "lesions.csv").string());
    std::set<std::string> pids;
    for (const auto& l : lesions) pids.insert(l.patient_id);
    for (const auto& pid : pids) {
        std::ofstream os(ext / (pid + ".txt"));
        os << "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
    }
    cfg.external_transforms_dir = ext.string();
    run_preprocess(cfg);
    run_register(cfg);
    const std::string report = slurp(fs::path(cfg.output_dir) / "register/report.csv");
    CHECK(report.find("external") != std::string::npos);
    CHECK(report.find("optimized") == std::string::npos);
    const RigidTransform t = load_transform_text(
        (fs::path(cfg.output_dir) / "register" / (*pids.begin() + "_transform.txt")).string());
    for (int r = 0; r < 4; ++r)
        for (int col = 0; col < 4; ++col) CHECK(t.at(r, col) == (r == col ? 1.0 : 0.0));
}

TEST_CASE("evaluate refuses artifacts from a different config hash") {
    const fs::path& root = shared_demo();
    PipelineConfig cfg = demo_config(root, "out_mixed");
    run_all(cfg);
    PipelineConfig tweaked = cfg;
    tweaked.n_iter += 1;  // changes the config hash, not the artifacts
    CHECK(tweaked.config_hash() != cfg.config_hash());
    CHECK_THROWS_WITH_AS(run_evaluate(tweaked), doctest::Contains("config hash"),
                         std::runtime_error);
}
