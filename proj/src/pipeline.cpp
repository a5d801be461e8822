#include "deltarad/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "deltarad/cohort.hpp"
#include "deltarad/csvio.hpp"
#include "deltarad/dosimetry.hpp"
#include "deltarad/rng.hpp"
#include "deltarad/svg.hpp"
#include "deltarad/volgrid.hpp"

namespace deltarad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return p;
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
}

json config_to_json(const PipelineConfig& c, bool include_output_dir) {
    json j;
    j["seed"] = c.seed;
    j["paths"]["patients_csv"] = c.patients_csv;
    j["paths"]["lesions_csv"] = c.lesions_csv;
    j["paths"]["image_root"] = c.image_root;
    j["paths"]["output_dir"] = include_output_dir ? c.output_dir : "";
    j["preprocess"]["window"]["level"] = c.window.level;
    j["preprocess"]["window"]["width"] = c.window.width;
    j["preprocess"]["clahe"]["tiles"] = {c.clahe_spec.tiles_x, c.clahe_spec.tiles_y};
    j["preprocess"]["clahe"]["clip_limit"] = c.clahe_spec.clip_limit;
    j["preprocess"]["clahe"]["bins"] = c.clahe_spec.bins;
    j["preprocess"]["median_radius"] = c.median_radius;
    j["registration"]["mi_bins"] = c.registration.mi_bins;
    j["registration"]["pyramid"] = c.registration.pyramid;
    j["registration"]["sampling_fraction"] = c.registration.sampling_fraction;
    j["registration"]["max_iterations"] = c.registration.max_iterations;
    j["registration"]["translation_step_mm"] = c.registration.translation_step_mm;
    j["registration"]["rotation_step_rad"] = c.registration.rotation_step_rad;
    j["registration"]["external_transforms_dir"] = c.external_transforms_dir;
    j["dosimetry"]["incidence_factor"] = c.incidence_factor;
    j["radiomics"]["mode"] =
        c.discretization.mode == DiscretizationMode::FixedBinCount ? "fixed_bin_count"
                                                                   : "fixed_bin_width";
    j["radiomics"]["bins"] = c.discretization.bins;
    j["radiomics"]["bin_width"] = c.discretization.bin_width;
    j["radiomics"]["glcm_distance"] = c.glcm_distance;
    std::vector<std::string> fams;
    for (auto f : c.families) fams.push_back(family_name(f));
    j["learn"]["families"] = fams;
    j["learn"]["n_iter"] = c.n_iter;
    j["learn"]["cv_folds"] = c.cv_folds;
    j["learn"]["test_fraction"] = c.test_fraction;
    j["learn"]["split_mode"] = c.split_mode == SplitMode::Case ? "case" : "patient_grouped";
    j["learn"]["balanced_class_weights"] = c.balanced_class_weights;
    j["learn"]["include_age"] = c.include_age;
    return j;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::uint64_t PipelineConfig::config_hash() const {
    return fnv1a64(config_to_json(*this, false).dump());
}

std::string PipelineConfig::stamp() const {
    return "config_hash=" + hex64(config_hash()) + " seed=" + std::to_string(seed);
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + " is not valid JSON: " + e.what());
    }

    PipelineConfig c;
    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto& paths = j.at("paths");
        c.patients_csv = resolve(base, paths.at("patients_csv").get<std::string>());
        c.lesions_csv = resolve(base, paths.at("lesions_csv").get<std::string>());
        c.image_root = resolve(base, paths.at("image_root").get<std::string>());
        c.output_dir = resolve(base, paths.at("output_dir").get<std::string>());

        const json pre = j.value("preprocess", json::object());
        if (pre.contains("window")) {
            c.window.level = pre["window"].value("level", 40.0);
            c.window.width = pre["window"].value("width", 80.0);
        }
        if (pre.contains("clahe")) {
            const auto& cl = pre["clahe"];
            if (cl.contains("tiles")) {
                c.clahe_spec.tiles_x = cl["tiles"].at(0).get<int>();
                c.clahe_spec.tiles_y = cl["tiles"].at(1).get<int>();
            }
            c.clahe_spec.clip_limit = cl.value("clip_limit", 2.0);
            c.clahe_spec.bins = cl.value("bins", 256);
        }
        c.median_radius = pre.value("median_radius", 0);

        const json reg = j.value("registration", json::object());
        c.registration.mi_bins = reg.value("mi_bins", 32);
        if (reg.contains("pyramid")) c.registration.pyramid = reg["pyramid"].get<std::vector<int>>();
        c.registration.sampling_fraction = reg.value("sampling_fraction", 0.25);
        c.registration.max_iterations = reg.value("max_iterations", 100);
        c.registration.translation_step_mm = reg.value("translation_step_mm", 2.0);
        c.registration.rotation_step_rad = reg.value("rotation_step_rad", 0.02);
        c.registration.seed = c.seed;
        c.external_transforms_dir =
            resolve(base, reg.value("external_transforms_dir", std::string()));

        c.incidence_factor = j.value("dosimetry", json::object()).value("incidence_factor", 1.5);

        const json rad = j.value("radiomics", json::object());
        const std::string mode = rad.value("mode", "fixed_bin_count");
        if (mode == "fixed_bin_count") c.discretization.mode = DiscretizationMode::FixedBinCount;
        else if (mode == "fixed_bin_width") c.discretization.mode = DiscretizationMode::FixedBinWidth;
        else throw std::runtime_error("radiomics.mode must be fixed_bin_count or fixed_bin_width");
        c.discretization.bins = rad.value("bins", 32);
        c.discretization.bin_width = rad.value("bin_width", 1.0);
        c.glcm_distance = rad.value("glcm_distance", 1);

        const json learn = j.value("learn", json::object());
        if (learn.contains("families")) {
            c.families.clear();
            for (const auto& f : learn["families"]) c.families.push_back(parse_family(f));
        }
        c.n_iter = learn.value("n_iter", 25);
        c.cv_folds = learn.value("cv_folds", 5);
        c.test_fraction = learn.value("test_fraction", 0.2);
        const std::string sm = learn.value("split_mode", "case");
        if (sm == "case") c.split_mode = SplitMode::Case;
        else if (sm == "patient_grouped") c.split_mode = SplitMode::PatientGrouped;
        else throw std::runtime_error("learn.split_mode must be case or patient_grouped");
        c.balanced_class_weights = learn.value("balanced_class_weights", true);
        c.include_age = learn.value("include_age", true);
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    c.validate();
    return c;
}

void PipelineConfig::validate() const {
    auto require_file = [](const std::string& p, const std::string& field) {
        if (p.empty()) throw std::runtime_error("config: paths." + field + " is empty");
        if (!fs::exists(p))
            throw std::runtime_error("config: paths." + field + " does not exist: " + p);
    };
    require_file(patients_csv, "patients_csv");
    require_file(lesions_csv, "lesions_csv");
    require_file(image_root, "image_root");
    if (output_dir.empty()) throw std::runtime_error("config: paths.output_dir is empty");
    if (!(window.width > 0)) throw std::runtime_error("config: preprocess.window.width must be > 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::runtime_error("config: learn.test_fraction must be in (0, 1)");
    if (cv_folds < 2) throw std::runtime_error("config: learn.cv_folds must be >= 2");
    if (n_iter < 1) throw std::runtime_error("config: learn.n_iter must be >= 1");
    if (!(incidence_factor > 1.0))
        throw std::runtime_error("config: dosimetry.incidence_factor must be > 1");
    if (families.empty()) throw std::runtime_error("config: learn.families is empty");
    registration.validate();
    discretization.validate();
}

namespace {

fs::path stage_dir(const PipelineConfig& cfg, const std::string& stage) {
    return fs::path(cfg.output_dir) / stage;
}

void write_manifest(const PipelineConfig& cfg, const std::string& stage) {
    json m;
    m["stage"] = stage;
    m["config_hash"] = hex64(cfg.config_hash());
    m["seed"] = cfg.seed;
    std::ofstream os(stage_dir(cfg, stage) / "manifest.json", std::ios::trunc);
    os << m.dump(2) << "\n";
}

void require_stage(const PipelineConfig& cfg, const std::string& stage,
                   const std::string& what) {
    const fs::path manifest = stage_dir(cfg, stage) / "manifest.json";
    if (!fs::exists(manifest))
        throw std::runtime_error("missing " + what + " (run the " + stage + " stage first)");
    std::ifstream in(manifest);
    json m;
    in >> m;
    const std::string have = m.value("config_hash", "");
    const std::string want = hex64(cfg.config_hash());
    if (have != want)
        throw std::runtime_error(stage + " artifacts were produced under config hash " + have +
                                 " but the current config hashes to " + want +
                                 "; re-run the stage");
}

std::vector<std::string> sorted_patient_ids(const std::vector<LesionRecord>& lesions) {
    std::set<std::string> ids;
    for (const auto& l : lesions) ids.insert(l.patient_id);
    return {ids.begin(), ids.end()};
}

std::string image_path(const PipelineConfig& cfg, const std::string& pid,
                       const std::string& kind) {
    for (const char* ext : {".nii.gz", ".nii"}) {
        const fs::path p = fs::path(cfg.image_root) / pid / (kind + ext);
        if (fs::exists(p)) return p.string();
    }
    return {};
}

fs::path preprocessed_path(const PipelineConfig& cfg, const std::string& pid,
                           const std::string& kind) {
    return stage_dir(cfg, "preprocessed") / (pid + "_" + kind + ".nii.gz");
}

// Otsu's threshold over a 128-bin histogram; separates head from background
// regardless of the preprocessing each modality went through.
double otsu_threshold(const Volume& v) {
    double lo = v.values[0], hi = v.values[0];
    for (double x : v.values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(hi > lo)) return lo;
    constexpr int kBins = 128;
    std::vector<double> hist(kBins, 0.0);
    const double scale = kBins / (hi - lo);
    for (double x : v.values)
        ++hist[std::min(kBins - 1, static_cast<int>((x - lo) * scale))];
    double total = static_cast<double>(v.values.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * hist[b];
    double w0 = 0.0, sum0 = 0.0, best_between = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kBins; ++b) {
        w0 += hist[b];
        if (w0 <= 0.0) continue;
        const double w1 = total - w0;
        if (w1 <= 0.0) break;
        sum0 += b * hist[b];
        const double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_between) {
            best_between = between;
            best_bin = b;
        }
    }
    return lo + (best_bin + 1) / scale;
}

}  // namespace

void run_preprocess(const PipelineConfig& cfg) {
    const auto lesions = load_lesions(cfg.lesions_csv);
    const fs::path dir = stage_dir(cfg, "preprocessed");
    fs::create_directories(dir);

    json processed = json::array();
    for (const auto& pid : sorted_patient_ids(lesions)) {
        const std::string ct_path = image_path(cfg, pid, "ct");
        const std::string mri_path = image_path(cfg, pid, "mri");
        json entry;
        entry["patient_id"] = pid;
        if (!ct_path.empty()) {
            Volume ct = read_nifti(ct_path, Unit::HU);
            Volume windowed = window(ct, cfg.window);
            if (cfg.median_radius >= 1) windowed = denoise_median(windowed, cfg.median_radius);
            write_nifti(windowed, preprocessed_path(cfg, pid, "ct").string(), cfg.stamp());
            entry["ct"] = true;
        } else {
            entry["ct"] = false;
        }
        if (!mri_path.empty()) {
            const Volume mri = read_nifti(mri_path, Unit::Intensity);
            write_nifti(clahe(mri, cfg.clahe_spec), preprocessed_path(cfg, pid, "mri").string(),
                        cfg.stamp());
            entry["mri"] = true;
        } else {
            entry["mri"] = false;
        }
        processed.push_back(entry);
    }
    std::ofstream os(dir / "images.json", std::ios::trunc);
    os << processed.dump(2) << "\n";
    write_manifest(cfg, "preprocessed");
}

void run_register(const PipelineConfig& cfg) {
    require_stage(cfg, "preprocessed", "preprocessed images");
    const auto lesions = load_lesions(cfg.lesions_csv);
    const fs::path dir = stage_dir(cfg, "register");
    fs::create_directories(dir);

    std::ofstream report(dir / "report.csv", std::ios::trunc);
    report << "# " << cfg.stamp() << "\n";
    report << "patient_id,source,mi_identity,mi_final,iterations,converged,foreground_dice\n";

    const auto pids = sorted_patient_ids(lesions);
    for (std::size_t idx = 0; idx < pids.size(); ++idx) {
        const auto& pid = pids[idx];
        const fs::path ct_p = preprocessed_path(cfg, pid, "ct");
        const fs::path mri_p = preprocessed_path(cfg, pid, "mri");
        if (!fs::exists(ct_p) || !fs::exists(mri_p)) continue;
        // MRI is the fixed image, CT the moving one
        const Volume fixed = read_nifti(mri_p.string());
        const Volume moving = read_nifti(ct_p.string());

        RigidTransform transform;
        std::string source;
        double mi_id = 0.0, mi_final = 0.0;
        int iterations = 0;
        bool converged = true;
        const fs::path external = cfg.external_transforms_dir.empty()
                                      ? fs::path()
                                      : fs::path(cfg.external_transforms_dir) / (pid + ".txt");
        if (!external.empty() && fs::exists(external)) {
            transform = load_transform_text(external.string());
            source = "external";
            const Volume identity_aligned =
                apply_transform(moving, RigidTransform::identity(), fixed.geom, Interp::Trilinear);
            mi_id = mutual_information(fixed, identity_aligned, cfg.registration.mi_bins);
            const Volume aligned = apply_transform(moving, transform, fixed.geom, Interp::Trilinear);
            mi_final = mutual_information(fixed, aligned, cfg.registration.mi_bins);
        } else {
            RegistrationConfig rc = cfg.registration;
            rc.seed = derive_seed(cfg.seed, 0x4E6 + idx);
            const RegistrationResult r = register_rigid(fixed, moving, rc);
            transform = r.transform;
            source = "optimized";
            mi_id = r.metric_at_identity;
            mi_final = r.metric;
            iterations = r.iterations;
            converged = r.converged;
        }

        save_transform_text(transform, (dir / (pid + "_transform.txt")).string());
        const Volume aligned = apply_transform(moving, transform, fixed.geom, Interp::Trilinear);
        write_nifti(aligned, (dir / (pid + "_ct_in_mri.nii.gz")).string(), cfg.stamp());

        // overlap of Otsu foregrounds as a coarse alignment check
        auto foreground = [](const Volume& v) {
            const double thr = otsu_threshold(v);
            std::vector<std::uint8_t> bits(v.values.size());
            for (std::size_t i = 0; i < v.values.size(); ++i)
                bits[i] = v.values[i] >= thr ? 1 : 0;
            return BinaryMask(v.geom, std::move(bits));
        };
        double fg_dice = 0.0;
        const BinaryMask fg_fixed = foreground(fixed), fg_aligned = foreground(aligned);
        if (fg_fixed.voxel_count() + fg_aligned.voxel_count() > 0)
            fg_dice = dice(fg_fixed, fg_aligned);

        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%d,%d,%.6f", pid.c_str(), source.c_str(),
                      mi_id, mi_final, iterations, converged ? 1 : 0, fg_dice);
        report << buf << "\n";
    }
    write_manifest(cfg, "register");
}

void run_dose(const PipelineConfig& cfg) {
    const auto lesions = load_lesions(cfg.lesions_csv);
    const fs::path dir = stage_dir(cfg, "dose");
    fs::create_directories(dir);

    std::vector<LesionDoseSummary> summaries;
    for (const auto& rec : lesions) {
        const Volume dose = read_nifti(rec.dose_path, Unit::Gy);
        BinaryMask roi = read_nifti_mask(rec.mask_path);
        if (!roi.geom.approx_equal(dose.geom)) roi = resample_mask(roi, dose.geom);
        if (roi.voxel_count() == 0)
            throw std::runtime_error("lesion " + rec.lesion_id + ": ROI mask is empty on the dose grid");

        summaries.push_back(summarize_lesion(dose, roi, rec));

        // per-lesion isodose region: prescription-level dose restricted to
        // the lesion's incidence neighborhood
        const BinaryMask iso_global = isodose_mask(dose, rec.prescription_gy);
        const BinaryMask region = incidence_region(roi, cfg.incidence_factor);
        std::vector<std::uint8_t> bits(iso_global.bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            bits[i] = iso_global.bits[i] && region.bits[i];
        const BinaryMask iso(dose.geom, std::move(bits));
        write_nifti_mask(iso, (dir / (rec.lesion_id + "_isodose.nii.gz")).string(), cfg.stamp());
    }
    write_lesion_summaries(summaries, (dir / "lesion_summary.csv").string(), cfg.stamp());
    write_manifest(cfg, "dose");
}

void run_features(const PipelineConfig& cfg) {
    require_stage(cfg, "preprocessed", "preprocessed images");
    require_stage(cfg, "dose", "isodose masks");
    const auto lesions = load_lesions(cfg.lesions_csv);
    const fs::path dir = stage_dir(cfg, "features");
    fs::create_directories(dir);

    const auto schema = feature_schema();
    std::ofstream os(dir / "features.csv", std::ios::trunc);
    os << "# " << cfg.stamp() << "\n";
    os << "patient_id,lesion_id,role";
    for (const auto& name : schema) os << "," << name;
    os << "\n";
    std::ofstream issues(dir / "issues.csv", std::ios::trunc);
    issues << "lesion_id,problem\n";

    char buf[64];
    auto emit = [&](const LesionRecord& rec, const std::string& role, const FeatureVector& f) {
        os << csv::quote(rec.patient_id) << "," << csv::quote(rec.lesion_id) << "," << role;
        for (double v : f.values) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v);
            os << buf;
        }
        os << "\n";
    };

    std::map<std::string, Volume> ct_cache;
    for (const auto& rec : lesions) {
        const fs::path ct_p = preprocessed_path(cfg, rec.patient_id, "ct");
        if (!fs::exists(ct_p)) {
            issues << csv::quote(rec.lesion_id) << ",no preprocessed CT for patient\n";
            continue;
        }
        auto it = ct_cache.find(rec.patient_id);
        if (it == ct_cache.end())
            it = ct_cache.emplace(rec.patient_id, read_nifti(ct_p.string())).first;
        const Volume& ct = it->second;

        BinaryMask roi = read_nifti_mask(rec.mask_path);
        if (!roi.geom.approx_equal(ct.geom)) roi = resample_mask(roi, ct.geom);
        const fs::path iso_p = stage_dir(cfg, "dose") / (rec.lesion_id + "_isodose.nii.gz");
        if (!fs::exists(iso_p)) {
            issues << csv::quote(rec.lesion_id) << ",no isodose mask from the dose stage\n";
            continue;
        }
        BinaryMask iso = read_nifti_mask(iso_p.string());
        if (!iso.geom.approx_equal(ct.geom)) iso = resample_mask(iso, ct.geom);

        if (roi.voxel_count() == 0 || iso.voxel_count() == 0) {
            issues << csv::quote(rec.lesion_id) << ",empty mask after resampling to the CT grid\n";
            continue;
        }
        const FeatureVector f_roi =
            extract_features(ct, roi, cfg.discretization, cfg.glcm_distance);
        const FeatureVector f_iso =
            extract_features(ct, iso, cfg.discretization, cfg.glcm_distance);
        const FeatureVector f_delta = delta_features(f_iso, f_roi);
        emit(rec, "roi", f_roi);
        emit(rec, "isodose", f_iso);
        emit(rec, "delta", f_delta);
    }
    write_manifest(cfg, "features");
}

void run_cohort(const PipelineConfig& cfg) {
    const fs::path dir = stage_dir(cfg, "cohort");
    fs::create_directories(dir);

    const LoadResult loaded = load_patients(cfg.patients_csv);
    const ValidationResult validated = validate_and_exclude(loaded);

    {
        std::ofstream os(dir / "exclusions.csv", std::ios::trunc);
        os << "# " << cfg.stamp() << "\n";
        os << "patient_id,missing_fields\n";
        for (const auto& e : validated.excluded) {
            std::string fields;
            for (const auto& f : e.missing_fields) fields += (fields.empty() ? "" : ";") + f;
            os << csv::quote(e.patient_id) << "," << csv::quote(fields) << "\n";
        }
    }
    if (validated.included.empty())
        throw std::runtime_error("cohort: no patients survive validation");

    write_cohort_summary_csv(summarize_cohort(validated.included),
                             (dir / "table1.csv").string(), cfg.stamp());

    std::vector<double> intervals;
    {
        std::ofstream os(dir / "intervals.csv", std::ios::trunc);
        os << "# " << cfg.stamp() << "\n";
        os << "patient_id,interval_months,long_interval\n";
        char buf[128];
        for (const auto& p : validated.included) {
            if (!p.date_first_followup) continue;
            const double months =
                followup_interval_months(p.date_first_treatment, *p.date_first_followup);
            intervals.push_back(months);
            std::snprintf(buf, sizeof(buf), "%s,%.2f,%d", csv::quote(p.patient_id).c_str(),
                          months, months > kLongIntervalMonths ? 1 : 0);
            os << buf << "\n";
        }
    }
    if (!intervals.empty()) {
        const auto bins = interval_histogram(intervals, 1.0);
        std::ofstream os(dir / "interval_histogram.csv", std::ios::trunc);
        os << "# " << cfg.stamp() << "\n";
        os << "bin_start,bin_end,count\n";
        std::vector<std::string> labels;
        std::vector<double> values;
        char buf[96];
        for (const auto& b : bins) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%zu", b.lo, b.hi, b.count);
            os << buf << "\n";
            std::snprintf(buf, sizeof(buf), "[%g,%g)", b.lo, b.hi);
            labels.push_back(buf);
            values.push_back(static_cast<double>(b.count));
        }
        write_bar_chart_svg((dir / "intervals.svg").string(),
                            "Months between first treatment and first follow-up", labels, values,
                            cfg.stamp());
    }
    write_manifest(cfg, "cohort");
}

namespace {

struct AssembledData {
    Dataset dataset;
    std::vector<std::string> lesion_ids;
};

AssembledData build_dataset(const PipelineConfig& cfg) {
    const csv::Table features = csv::read_file((stage_dir(cfg, "features") / "features.csv").string());
    const int c_pid = features.require_column("patient_id");
    const int c_lid = features.require_column("lesion_id");
    const int c_role = features.require_column("role");
    const auto schema = feature_schema();
    std::vector<int> feat_cols;
    for (const auto& name : schema) feat_cols.push_back(features.require_column(name));

    const ValidationResult cohort = validate_and_exclude(load_patients(cfg.patients_csv));
    std::map<std::string, const PatientRecord*> by_id;
    for (const auto& p : cohort.included) by_id[p.patient_id] = &p;

    // delta rows drive the model; patients must have survived validation
    struct Row {
        std::string pid, lid;
        std::vector<double> deltas;
    };
    std::vector<Row> rows;
    std::set<std::string> used_patients;
    for (const auto& row : features.rows) {
        if (row[c_role] != "delta") continue;
        if (!by_id.count(row[c_pid])) continue;
        Row r;
        r.pid = row[c_pid];
        r.lid = row[c_lid];
        for (int col : feat_cols) r.deltas.push_back(std::stod(row[col]));
        rows.push_back(std::move(r));
        used_patients.insert(row[c_pid]);
    }
    if (rows.empty())
        throw std::runtime_error("train: no usable delta-feature rows (did the features stage run "
                                 "on a cohort that passes validation?)");

    std::vector<PatientRecord> used;
    for (const auto& p : cohort.included)
        if (used_patients.count(p.patient_id)) used.push_back(p);
    const OneHotEncoding encoding = fit_one_hot(used, {"sex", "machine", "primary_tumor"});
    bool all_have_age = true;
    for (const auto& p : used) all_have_age &= p.age.has_value();
    const bool with_age = cfg.include_age && all_have_age;

    AssembledData out;
    for (const auto& name : schema) out.dataset.columns.push_back("delta." + name);
    for (const auto& name : encoding.column_names) out.dataset.columns.push_back(name);
    out.dataset.columns.push_back("n_metastases");
    if (with_age) out.dataset.columns.push_back("age");

    for (const auto& r : rows) {
        const PatientRecord& p = *by_id[r.pid];
        out.dataset.x.insert(out.dataset.x.end(), r.deltas.begin(), r.deltas.end());
        const auto clinical = encoding.encode_row(categorical_fields(p));
        out.dataset.x.insert(out.dataset.x.end(), clinical.begin(), clinical.end());
        out.dataset.x.push_back(static_cast<double>(p.n_metastases));
        if (with_age) out.dataset.x.push_back(*p.age);
        out.dataset.labels.push_back(p.decision_si);
        out.dataset.groups.push_back(r.pid);
        out.lesion_ids.push_back(r.lid);
    }
    out.dataset.validate();
    return out;
}

void write_dataset_csv(const AssembledData& data, const std::string& path,
                       const std::string& stamp) {
    std::ofstream os(path, std::ios::trunc);
    os << "# " << stamp << "\n";
    os << "lesion_id,patient_id,si";
    for (const auto& c : data.dataset.columns) os << "," << c;
    os << "\n";
    char buf[64];
    for (std::size_t i = 0; i < data.dataset.n_rows(); ++i) {
        os << csv::quote(data.lesion_ids[i]) << "," << csv::quote(data.dataset.groups[i]) << ","
           << data.dataset.labels[i];
        for (std::size_t c = 0; c < data.dataset.n_cols(); ++c) {
            std::snprintf(buf, sizeof(buf), ",%.9g", data.dataset.at(i, c));
            os << buf;
        }
        os << "\n";
    }
}

}  // namespace

void run_train(const PipelineConfig& cfg) {
    require_stage(cfg, "features", "feature table");
    const fs::path dir = stage_dir(cfg, "train");
    fs::create_directories(dir);

    const AssembledData data = build_dataset(cfg);
    write_dataset_csv(data, (dir / "dataset.csv").string(), cfg.stamp());

    const SplitIndices split =
        stratified_split(data.dataset, cfg.test_fraction, derive_seed(cfg.seed, 0x5711),
                         cfg.split_mode);
    {
        json j;
        j["config_hash"] = hex64(cfg.config_hash());
        j["seed"] = cfg.seed;
        j["split_mode"] = cfg.split_mode == SplitMode::Case ? "case" : "patient_grouped";
        j["train"] = split.train;
        j["test"] = split.test;
        std::ofstream os(dir / "split.json", std::ios::trunc);
        os << j.dump(2) << "\n";
    }
    const Dataset train_set = data.dataset.subset(split.train);

    std::ofstream cv(dir / "cv_results.csv", std::ios::trunc);
    cv << "# " << cfg.stamp() << "\n";
    cv << "family,candidate,params,mean_macro_f1,fold_scores\n";

    for (std::size_t fi = 0; fi < cfg.families.size(); ++fi) {
        const ModelFamily family = cfg.families[fi];
        SearchSpace space = default_search_space(family);
        const SearchResult search = random_search(
            family, space, cfg.n_iter, cfg.cv_folds, derive_seed(cfg.seed, 0x5EA8C + fi),
            train_set);

        for (std::size_t c = 0; c < search.candidates.size(); ++c) {
            cv << family_name(family) << "," << c << ","
               << csv::quote(describe_params(search.candidates[c])) << ",";
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", search.mean_scores[c]);
            cv << buf << ",\"";
            for (std::size_t f = 0; f < search.fold_scores[c].size(); ++f) {
                std::snprintf(buf, sizeof(buf), "%s%.6f", f ? ";" : "",
                              search.fold_scores[c][f]);
                cv << buf;
            }
            cv << "\"\n";
        }

        ModelParams best = search.best_params;
        // the final refit honors the configured class weighting
        std::visit([&](auto& p) { p.balanced_class_weights = cfg.balanced_class_weights; }, best);
        TrainedModel model =
            train_family(family, train_set, best, derive_seed(cfg.seed, 0xF17A1 + fi));
        model.config_hash = cfg.config_hash();
        save_model(model, (dir / (family_name(family) + ".model")).string());
    }
    write_manifest(cfg, "train");
}

void run_evaluate(const PipelineConfig& cfg) {
    {
        const fs::path manifest = stage_dir(cfg, "train") / "manifest.json";
        if (!fs::exists(manifest))
            throw std::runtime_error("missing trained models (run the train stage first)");
    }
    require_stage(cfg, "train", "trained models");
    const fs::path dir = stage_dir(cfg, "evaluate");
    fs::create_directories(dir);

    const AssembledData data = build_dataset(cfg);
    SplitIndices split;
    {
        std::ifstream in(stage_dir(cfg, "train") / "split.json");
        json j;
        in >> j;
        if (j.value("config_hash", "") != hex64(cfg.config_hash()))
            throw std::runtime_error("evaluate: split.json config hash does not match");
        split.train = j.at("train").get<std::vector<std::size_t>>();
        split.test = j.at("test").get<std::vector<std::size_t>>();
    }
    const Dataset train_set = data.dataset.subset(split.train);
    const Dataset test_set = data.dataset.subset(split.test);

    std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
    metrics << "# " << cfg.stamp() << "\n";
    metrics << "model,precision_train,precision_test,recall_train,recall_test,f1_train,f1_test,"
               "accuracy_train,accuracy_test\n";
    json report_json;
    report_json["config_hash"] = hex64(cfg.config_hash());
    report_json["seed"] = cfg.seed;
    report_json["averaging"] = "macro";

    auto class_json = [](const ClassMetrics& c) {
        json j;
        j["precision"] = c.precision;
        j["recall"] = c.recall;
        j["f1"] = c.f1;
        j["support"] = c.support;
        return j;
    };
    auto report_to_json = [&](const EvalReport& r) {
        json j;
        j["accuracy"] = r.accuracy;
        j["macro"] = {{"precision", r.macro_precision},
                      {"recall", r.macro_recall},
                      {"f1", r.macro_f1}};
        j["weighted"] = {{"precision", r.weighted_precision},
                         {"recall", r.weighted_recall},
                         {"f1", r.weighted_f1}};
        j["class0"] = class_json(r.class0);
        j["class1"] = class_json(r.class1);
        j["confusion"] = {{"tn", r.confusion.tn},
                          {"fp", r.confusion.fp},
                          {"fn", r.confusion.fn},
                          {"tp", r.confusion.tp}};
        j["zero_division"] = r.zero_division;
        return j;
    };

    for (const ModelFamily family : cfg.families) {
        const fs::path model_path = stage_dir(cfg, "train") / (family_name(family) + ".model");
        if (!fs::exists(model_path))
            throw std::runtime_error("missing trained models (no " + family_name(family) +
                                     ".model in the train stage output)");
        const TrainedModel model = load_model(model_path.string());
        if (model.config_hash != cfg.config_hash())
            throw std::runtime_error("evaluate: model " + family_name(family) +
                                     " was trained under a different config hash");

        const EvalReport on_train = evaluate(predict(model, train_set), train_set.labels);
        const EvalReport on_test = evaluate(predict(model, test_set), test_set.labels);

        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                      family_name(family).c_str(), on_train.macro_precision,
                      on_test.macro_precision, on_train.macro_recall, on_test.macro_recall,
                      on_train.macro_f1, on_test.macro_f1, on_train.accuracy, on_test.accuracy);
        metrics << buf << "\n";

        report_json["models"][family_name(family)]["train"] = report_to_json(on_train);
        report_json["models"][family_name(family)]["test"] = report_to_json(on_test);

        {
            std::ofstream cm(dir / ("confusion_" + family_name(family) + ".csv"),
                             std::ios::trunc);
            cm << "# " << cfg.stamp() << "\n";
            cm << "predicted\\actual,si0,si1\n";
            cm << "si0," << on_test.confusion.tn << "," << on_test.confusion.fn << "\n";
            cm << "si1," << on_test.confusion.fp << "," << on_test.confusion.tp << "\n";
        }

        const bool has_importances =
            family != ModelFamily::SVM ||
            std::get<SvmModel>(model.impl).params.kernel == SvmKernel::Linear;
        if (has_importances) {
            const auto ranked = feature_importances(model, 8);
            std::ofstream imp(dir / ("importances_" + family_name(family) + ".csv"),
                              std::ios::trunc);
            imp << "# " << cfg.stamp() << "\n";
            imp << "rank,feature,weight\n";
            std::vector<std::string> labels;
            std::vector<double> weights;
            for (std::size_t r = 0; r < ranked.size(); ++r) {
                std::snprintf(buf, sizeof(buf), "%zu,%s,%.9g", r + 1,
                              csv::quote(ranked[r].first).c_str(), ranked[r].second);
                imp << buf << "\n";
                labels.push_back(ranked[r].first);
                weights.push_back(ranked[r].second);
            }
            write_bar_chart_svg(
                (dir / ("importances_" + family_name(family) + ".svg")).string(),
                "Top " + std::to_string(ranked.size()) + " features: " + family_name(family),
                labels, weights, cfg.stamp());
        }
    }
    metrics << "# note: GBT is an in-repo second-order gradient-boosted tree ensemble with L2 "
               "leaf regularization; exact XGBoost parity is not claimed.\n";
    std::ofstream js(dir / "metrics.json", std::ios::trunc);
    js << report_json.dump(2) << "\n";
    write_manifest(cfg, "evaluate");
}

void run_all(const PipelineConfig& cfg) {
    run_preprocess(cfg);
    run_register(cfg);
    run_dose(cfg);
    run_features(cfg);
    run_cohort(cfg);
    run_train(cfg);
    run_evaluate(cfg);
}

int run_stage(const std::string& stage, const PipelineConfig& cfg) {
    if (stage == "preprocess") run_preprocess(cfg);
    else if (stage == "register") run_register(cfg);
    else if (stage == "dose") run_dose(cfg);
    else if (stage == "features") run_features(cfg);
    else if (stage == "cohort") run_cohort(cfg);
    else if (stage == "train") run_train(cfg);
    else if (stage == "evaluate") run_evaluate(cfg);
    else if (stage == "all") run_all(cfg);
    else throw std::runtime_error("unknown stage: " + stage);
    return 0;
}

}  // namespace deltarad
