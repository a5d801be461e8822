// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "deltarad/cohort.hpp"
#include "deltarad/dosimetry.hpp"
#include "deltarad/learn.hpp"
#include "deltarad/pipeline.hpp"
#include "deltarad/radiomics.hpp"
#include "deltarad/registration.hpp"
#include "deltarad/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "phantoms.hpp"

using namespace deltarad;
namespace fs = std::filesystem;

namespace {

int g_failed_criteria = 0;

struct Criterion {
    std::string name;
    int failures = 0;
    std::string detail;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Criterion(std::string n) : name(std::move(n)) {}

    void require(bool ok, const std::string& what) {
        if (!ok) {
            ++failures;
            if (detail.empty()) detail = what;
        }
    }

    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    void finish(double time_limit_s = 0.0) {
        const double elapsed = seconds();
        if (time_limit_s > 0.0 && elapsed > time_limit_s) {
            ++failures;
            if (detail.empty())
                detail = "exceeded time limit of " + std::to_string(time_limit_s) + " s";
        }
        if (failures == 0) {
            std::printf("[PASS] %s (%.1f s)\n", name.c_str(), elapsed);
        } else {
            std::printf("[FAIL] %s: %d check(s) failed%s%s\n", name.c_str(), failures,
                        detail.empty() ? "" : " - ", detail.c_str());
            ++g_failed_criteria;
        }
        std::fflush(stdout);
    }
};

bool rel_ok(double a, double b) { return oracle::rel_close(a, b, 1e-9); }

Volume random_volume(const Geometry& g, Rng& rng, double lo = 0.0, double hi = 50.0) {
    std::vector<double> vals(g.voxel_count());
    for (double& x : vals) x = rng.uniform(lo, hi);
    return Volume(g, std::move(vals));
}

BinaryMask random_mask(const Geometry& g, Rng& rng, double p) {
    std::vector<std::uint8_t> bits(g.voxel_count());
    for (auto& b : bits) b = rng.uniform01() < p ? 1 : 0;
    return BinaryMask(g, std::move(bits));
}

void feature_oracle_suite() {
    Criterion c("feature oracles: first-order/GLCM/GLRLM vs brute force, 50 random 8x8x8 pairs");
    Rng rng(20240811);
    DiscretizationConfig cfg;
    cfg.bins = 8;
    Geometry g;
    g.dims = {8, 8, 8};
    int tested = 0;
    while (tested < 50) {
        const Volume v = random_volume(g, rng);
        BinaryMask m = random_mask(g, rng, 0.5);
        if (m.voxel_count() < 4) continue;
        ++tested;

        std::vector<double> masked;
        for (std::size_t i = 0; i < v.values.size(); ++i)
            if (m.bits[i]) masked.push_back(v.values[i]);
        const auto fo = first_order_features(v, m);
        const auto ref = oracle::first_order_ref(masked);
        c.require(rel_ok(fo.value("firstorder.mean"), ref.mean), "first-order mean");
        c.require(rel_ok(fo.value("firstorder.median"), ref.median), "first-order median");
        c.require(rel_ok(fo.value("firstorder.variance"), ref.variance), "first-order variance");
        c.require(rel_ok(fo.value("firstorder.skewness"), ref.skewness), "first-order skewness");
        c.require(rel_ok(fo.value("firstorder.kurtosis"), ref.kurtosis), "first-order kurtosis");
        c.require(rel_ok(fo.value("firstorder.energy"), ref.energy), "first-order energy");
        c.require(rel_ok(fo.value("firstorder.rms"), ref.rms), "first-order rms");
        c.require(rel_ok(fo.value("firstorder.entropy"), ref.entropy), "first-order entropy");
        c.require(rel_ok(fo.value("firstorder.p10"), ref.p10), "first-order p10");
        c.require(rel_ok(fo.value("firstorder.p90"), ref.p90), "first-order p90");
        c.require(rel_ok(fo.value("firstorder.iqr"), ref.iqr), "first-order iqr");
        c.require(rel_ok(fo.value("firstorder.mad"), ref.mad), "first-order mad");

        const auto glcm = glcm_features(v, m, cfg, 1);
        const auto glcm_ref = oracle::glcm_ref(v, m, cfg.bins, 1, texture_directions());
        c.require(rel_ok(glcm.value("glcm.contrast"), glcm_ref.contrast), "glcm contrast");
        c.require(rel_ok(glcm.value("glcm.dissimilarity"), glcm_ref.dissimilarity),
                  "glcm dissimilarity");
        c.require(rel_ok(glcm.value("glcm.energy"), glcm_ref.energy), "glcm energy");
        c.require(rel_ok(glcm.value("glcm.entropy"), glcm_ref.entropy), "glcm entropy");
        c.require(rel_ok(glcm.value("glcm.homogeneity"), glcm_ref.homogeneity),
                  "glcm homogeneity");
        c.require(rel_ok(glcm.value("glcm.correlation"), glcm_ref.correlation),
                  "glcm correlation");

        const auto glrlm = glrlm_features(v, m, cfg);
        const auto glrlm_ref = oracle::glrlm_ref(v, m, cfg.bins, texture_directions());
        c.require(rel_ok(glrlm.value("glrlm.sre"), glrlm_ref.sre), "glrlm sre");
        c.require(rel_ok(glrlm.value("glrlm.lre"), glrlm_ref.lre), "glrlm lre");
        c.require(rel_ok(glrlm.value("glrlm.gln"), glrlm_ref.gln), "glrlm gln");
        c.require(rel_ok(glrlm.value("glrlm.rln"), glrlm_ref.rln), "glrlm rln");
        c.require(rel_ok(glrlm.value("glrlm.run_percentage"), glrlm_ref.run_percentage),
                  "glrlm run percentage");
    }
    c.finish(30.0);
}

void shape_phantom() {
    Criterion c("shape phantom: sphere r=25 sphericity/volume + exact 2x2x1 GLCM contrast");
    const BinaryMask sphere = testing::make_sphere_mask(54, 25.0);
    const FeatureVector f = shape_features(sphere);
    const double sph = f.value("shape.sphericity");
    c.require(sph >= 0.95 && sph <= 1.02,
              "sphericity " + std::to_string(sph) + " outside [0.95, 1.02]");
    const double expected_cc = 4.0 / 3.0 * M_PI * 25.0 * 25.0 * 25.0 / 1000.0;
    const double vol = f.value("shape.volume_cc");
    c.require(std::abs(vol - expected_cc) / expected_cc <= 0.02, "sphere volume off by > 2%");

    Geometry g;
    g.dims = {2, 2, 1};
    const Volume v(g, {1.0, 1.0, 1.0, 2.0});
    const BinaryMask full(g, {1, 1, 1, 1});
    DiscretizationConfig cfg;
    cfg.bins = 2;
    const FeatureVector glcm = glcm_features(v, full, cfg, 1);
    c.require(glcm.value("glcm.contrast") == 0.5, "hand-enumerated GLCM contrast != 0.5");
    c.finish();
}

void registration_recovery() {
    Criterion c("registration: recover (3.2,-1.7,2.0) voxels + 5 deg about z at 64^3");
    const Volume fixed = testing::make_phantom(64);
    RigidParams truth;
    truth.tx = 3.2;
    truth.ty = -1.7;
    truth.tz = 2.0;
    truth.rz = 5.0 * M_PI / 180.0;
    truth.center = fixed.geom.physical_center();
    const RigidTransform applied = truth.to_transform();
    const Volume moving = apply_transform(fixed, applied, fixed.geom, Interp::Trilinear);

    RegistrationConfig cfg;
    cfg.seed = 17;
    const RegistrationResult r = register_rigid(fixed, moving, cfg);
    const RigidTransform expect = invert(applied);
    for (int axis = 0; axis < 3; ++axis)
        c.require(std::abs(r.transform.at(axis, 3) - expect.at(axis, 3)) <= 0.5,
                  "translation axis " + std::to_string(axis) + " off by > 0.5 voxel");
    const double rz_deg = std::atan2(r.transform.at(1, 0), r.transform.at(0, 0)) * 180.0 / M_PI;
    c.require(std::abs(rz_deg - (-5.0)) <= 1.0, "rotation off by > 1 degree");
    c.require(r.metric >= r.metric_at_identity, "MI at solution below MI at identity");

    const BinaryMask obj = testing::make_sphere_mask(64, 16.0);
    const BinaryMask moved = apply_transform_mask(obj, applied, obj.geom);
    const BinaryMask realigned = apply_transform_mask(moved, r.transform, obj.geom);
    c.require(dice(realigned, obj) >= 0.95, "object-mask Dice below 0.95");
    c.finish(60.0);
}

void dosimetry_criteria() {
    Criterion c("dosimetry: 7-voxel incidence region, isodose nesting x100, exact mean dose");
    Geometry g7;
    g7.dims = {7, 7, 7};
    BinaryMask single = BinaryMask::empty_like(g7);
    single.set(3, 3, 3, true);
    c.require(incidence_region(single, 1.5).voxel_count() == 7,
              "single-voxel incidence region is not exactly 7 voxels");

    Rng rng(404);
    Geometry g;
    g.dims = {6, 5, 4};
    for (int t = 0; t < 100; ++t) {
        const Volume dose = random_volume(g, rng, 0.0, 60.0);
        const double t_lo = rng.uniform(5.0, 25.0);
        const double t_hi = t_lo + rng.uniform(0.1, 25.0);
        const BinaryMask hi = isodose_mask(dose, t_hi);
        const BinaryMask lo = isodose_mask(dose, t_lo);
        for (std::size_t i = 0; i < hi.bits.size(); ++i)
            if (hi.bits[i] && !lo.bits[i]) c.require(false, "isodose nesting violated");

        BinaryMask m = random_mask(g, rng, 0.4);
        if (m.voxel_count() == 0) continue;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < dose.values.size(); ++i)
            if (m.bits[i]) {
                sum += dose.values[i];
                ++n;
            }
        c.require(mean_dose(dose, m) == sum / static_cast<double>(n),
                  "mean dose differs from the brute-force oracle");
    }
    c.finish();
}

void delta_identity() {
    Criterion c("delta identity: delta(f, f) = 0 for all 34 features on 100 random inputs");
    Rng rng(777);
    DiscretizationConfig cfg;
    cfg.bins = 16;
    Geometry g;
    g.dims = {8, 8, 8};
    int tested = 0;
    while (tested < 100) {
        const Volume v = random_volume(g, rng);
        const BinaryMask m = random_mask(g, rng, rng.uniform(0.2, 0.8));
        if (m.voxel_count() < 2) continue;
        ++tested;
        const FeatureVector f = extract_features(v, m, cfg);
        c.require(f.size() == 34, "feature count != 34");
        const FeatureVector d = delta_features(f, f);
        for (double x : d.values)
            if (x != 0.0) c.require(false, "nonzero self-delta");
    }
    c.finish();
}

Dataset gaussian_dataset(std::size_t n, std::size_t p, double shift, std::uint64_t seed) {
    Dataset d;
    for (std::size_t f = 0; f < p; ++f) d.columns.push_back("f" + std::to_string(f));
    d.x.assign(n * p, 0.0);
    d.labels.assign(n, 0);
    d.groups.assign(n, "");
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        d.groups[i] = "P" + std::to_string(i);
        d.labels[i] = i % 2 == 0 ? 0 : 1;
        for (std::size_t f = 0; f < p; ++f)
            d.x[i * p + f] = rng.normal() + (d.labels[i] == 1 ? shift : 0.0);
    }
    return d;
}

void classifier_sanity() {
    Criterion c("classifier sanity: five families >= 0.95 on 500x20 two-Gaussian data, "
                "bit-identical under reseeding");
    const Dataset all = gaussian_dataset(500, 20, 3.0, 99);
    const SplitIndices split = stratified_split(all, 0.2, 5);
    const Dataset train = all.subset(split.train), test = all.subset(split.test);

    const ModelFamily families[5] = {ModelFamily::DT, ModelFamily::RF, ModelFamily::ADA,
                                     ModelFamily::GBT, ModelFamily::SVM};
    for (const ModelFamily family : families) {
        auto run_once = [&]() {
            const SearchResult search =
                random_search(family, default_search_space(family), 10, 5, 7, train);
            const TrainedModel model = train_family(family, train, search.best_params, 11);
            return evaluate(predict(model, test), test.labels);
        };
        const EvalReport a = run_once();
        const EvalReport b = run_once();
        c.require(a.accuracy >= 0.95,
                  family_name(family) + " accuracy " + std::to_string(a.accuracy) + " < 0.95");
        const bool identical = a.accuracy == b.accuracy && a.macro_f1 == b.macro_f1 &&
                               a.macro_precision == b.macro_precision &&
                               a.macro_recall == b.macro_recall &&
                               a.confusion.tp == b.confusion.tp &&
                               a.confusion.tn == b.confusion.tn;
        c.require(identical, family_name(family) + " metrics not bit-identical under reseeding");
    }
    c.finish(300.0);
}

void metric_identities() {
    Criterion c("metric identities: TN=20 FP=2 FN=1 TP=13 exact to full precision");
    std::vector<int> pred, actual;
    auto add = [&](int p, int a, int count) {
        for (int i = 0; i < count; ++i) {
            pred.push_back(p);
            actual.push_back(a);
        }
    };
    add(0, 0, 20);
    add(1, 0, 2);
    add(0, 1, 1);
    add(1, 1, 13);
    const EvalReport r = evaluate(pred, actual);
    c.require(r.accuracy == 33.0 / 36.0, "accuracy != 33/36");
    c.require(r.class1.precision == 13.0 / 15.0, "class-1 precision != 13/15");
    c.require(r.class1.recall == 13.0 / 14.0, "class-1 recall != 13/14");
    const double p1 = 13.0 / 15.0, r1 = 13.0 / 14.0;
    c.require(r.class1.f1 == 2.0 * p1 * r1 / (p1 + r1), "class-1 F1 is not the harmonic mean");
    c.finish();
}

void split_fidelity() {
    Criterion c("split fidelity: 177 cases at 0.20 -> exactly 36 test, proportions within 1");
    Dataset d = gaussian_dataset(177, 2, 1.0, 31);
    for (std::size_t i = 0; i < 177; ++i) d.labels[i] = i < 45 ? 1 : 0;
    const SplitIndices s = stratified_split(d, 0.20, 9);
    c.require(s.test.size() == 36, "test size " + std::to_string(s.test.size()) + " != 36");
    c.require(s.train.size() == 141, "train size != 141");
    std::size_t test1 = 0;
    for (auto r : s.test) test1 += d.labels[r];
    c.require(std::abs(static_cast<double>(test1) - 0.20 * 45.0) <= 1.0,
              "test class-1 count not within one case of proportional");
    c.finish();
}

void planted_importance() {
    Criterion c("planted signal: RF and AdaBoost both rank feature 0 first; importances sum to 1");
    Dataset d = gaussian_dataset(200, 8, 0.0, 55);
    Rng rng(56);
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        d.labels[i] = static_cast<int>(i % 2);
        d.x[i * 8] = rng.normal() + (d.labels[i] == 1 ? 4.0 : 0.0);  // only f0 carries signal
    }
    RandomForestParams rf;
    rf.n_trees = 100;
    const TrainedModel mrf = train_random_forest(d, rf, 3);
    AdaBoostParams ada;
    ada.n_estimators = 60;
    const TrainedModel mada = train_adaboost(d, ada, 4);

    c.require(feature_importances(mrf, 8)[0].first == "f0", "RF top feature is not f0");
    c.require(feature_importances(mada, 8)[0].first == "f0", "AdaBoost top feature is not f0");
    for (const TrainedModel* m : {&mrf, &mada}) {
        double sum = 0.0;
        for (double x : raw_importances(*m)) sum += x;
        c.require(std::abs(sum - 1.0) <= 1e-9, "importances do not sum to 1 within 1e-9");
    }
    c.finish();
}

void cohort_fixture() {
    Criterion c("cohort fixture: reference counts/percentages to 2 decimals; 57 -> 53 records");
    const auto cohort = testing::make_reference_cohort();
    const CohortSummary s = summarize_cohort(cohort);
    auto check_cat = [&](const std::vector<CategoryCount>& section, const std::string& label,
                         std::size_t count, double percent) {
        for (const auto& cat : section) {
            if (cat.label != label) continue;
            c.require(cat.count == count, label + " count != " + std::to_string(count));
            c.require(cat.percent == percent, label + " percent != published value");
            return;
        }
        c.require(false, "missing category " + label);
    };
    check_cat(s.sex, "Male", 15, 28.30);
    check_cat(s.sex, "Female", 37, 69.81);
    check_cat(s.sex, "Other", 1, 1.89);
    check_cat(s.machine, "LINAC", 28, 52.83);
    check_cat(s.decision, "2nd Treatment", 45, 84.91);
    check_cat(s.decision, "Follow-Up", 8, 15.09);

    // 57 parsed rows, 4 missing a required clinical field
    LoadResult loaded;
    for (int i = 0; i < 57; ++i) {
        RawPatientRow r;
        r.patient_id = "Q" + std::to_string(i + 1);
        r.sex = Sex::Female;
        r.n_metastases = 2;
        r.machine = Machine::LINAC;
        const bool incomplete = i == 5 || i == 17 || i == 29 || i == 41;
        if (!incomplete) r.primary_tumor = "Lung";
        r.decision_si = 1;
        r.date_first_treatment = Date{2020, 3, 1};
        loaded.rows.push_back(std::move(r));
    }
    const ValidationResult v = validate_and_exclude(loaded);
    c.require(v.included.size() == 53,
              "validate_and_exclude kept " + std::to_string(v.included.size()) + " != 53");
    c.require(v.excluded.size() == 4, "exclusion report does not list 4 patients");
    c.finish();
}

void end_to_end_determinism() {
    Criterion c("end-to-end: deltarad all twice on the demo cohort is byte-identical");
    const fs::path root = fs::temp_directory_path() / "deltarad_acceptance_demo";
    fs::remove_all(root);
    generate_demo(root.string(), 20240811);

    PipelineConfig cfg = PipelineConfig::load((root / "config.json").string());
    cfg.output_dir = (root / "run1").string();
    run_all(cfg);
    PipelineConfig cfg2 = cfg;
    cfg2.output_dir = (root / "run2").string();
    run_all(cfg2);

    std::map<std::string, fs::path> a, b;
    for (const auto& e : fs::recursive_directory_iterator(root / "run1"))
        if (e.is_regular_file()) a[fs::relative(e.path(), root / "run1").string()] = e.path();
    for (const auto& e : fs::recursive_directory_iterator(root / "run2"))
        if (e.is_regular_file()) b[fs::relative(e.path(), root / "run2").string()] = e.path();
    c.require(a.size() == b.size() && !a.empty(), "artifact sets differ in size");
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    for (const auto& [rel, path] : a) {
        if (!b.count(rel)) {
            c.require(false, "missing artifact " + rel);
            continue;
        }
        if (slurp(path) != slurp(b[rel])) c.require(false, "artifact differs: " + rel);
    }
    c.finish(600.0);
}

}  // namespace

int main() {
    feature_oracle_suite();
    shape_phantom();
    registration_recovery();
    dosimetry_criteria();
    delta_identity();
    classifier_sanity();
    metric_identities();
    split_fidelity();
    planted_importance();
    cohort_fixture();
    end_to_end_determinism();

    if (g_failed_criteria == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", g_failed_criteria);
    return 1;
}
