#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "deltarad/cohort.hpp"
#include "deltarad/pipeline.hpp"
#include "deltarad/registration.hpp"
#include "deltarad/rng.hpp"
#include "deltarad/volgrid.hpp"

namespace deltarad {

namespace fs = std::filesystem;

namespace {

constexpr int kDim = 40;

struct DemoLesion {
    std::string id;
    Point3 center;  // voxel coordinates
    double radius;
    double rx_gy;
};

struct DemoPatient {
    std::string id;
    int si = 0;
    Machine machine = Machine::LINAC;
    std::string sex;
    std::string tumor;
    double age = 60.0;
    std::string date_treatment;
    std::string date_followup;
    std::vector<DemoLesion> lesions;
};

Geometry demo_geometry() {
    Geometry g;
    g.dims = {kDim, kDim, kDim};
    return g;
}

/// Head phantom in Hounsfield units: air background, soft-tissue ellipsoid
/// with smooth structure, bright lesion spheres.
Volume make_ct(const DemoPatient& p, Rng& rng) {
    const Geometry g = demo_geometry();
    std::vector<double> vals(g.voxel_count(), -1000.0);
    const double c = (kDim - 1) / 2.0;
    const double R = 0.45 * kDim;

    struct Bump {
        double x, y, z, sigma, amp;
    };
    std::vector<Bump> bumps;
    for (int b = 0; b < 6; ++b)
        bumps.push_back({c + rng.uniform(-0.25, 0.25) * kDim, c + rng.uniform(-0.25, 0.25) * kDim,
                         c + rng.uniform(-0.25, 0.25) * kDim, rng.uniform(2.5, 5.0),
                         rng.uniform(-14.0, 14.0)});

    std::size_t idx = 0;
    for (int k = 0; k < kDim; ++k)
        for (int j = 0; j < kDim; ++j)
            for (int i = 0; i < kDim; ++i, ++idx) {
                const double dx = i - c, dy = j - c, dz = k - c;
                if (dx * dx + dy * dy + dz * dz > R * R) continue;
                double hu = 38.0;
                for (const auto& b : bumps) {
                    const double ux = i - b.x, uy = j - b.y, uz = k - b.z;
                    hu += b.amp * std::exp(-(ux * ux + uy * uy + uz * uz) / (2 * b.sigma * b.sigma));
                }
                vals[idx] = hu;
            }
    for (const auto& lesion : p.lesions) {
        for (int k = 0; k < kDim; ++k)
            for (int j = 0; j < kDim; ++j)
                for (int i = 0; i < kDim; ++i) {
                    const double dx = i - lesion.center[0], dy = j - lesion.center[1],
                                 dz = k - lesion.center[2];
                    if (dx * dx + dy * dy + dz * dz <= lesion.radius * lesion.radius)
                        vals[g.index(i, j, k)] = 66.0 + 4.0 * std::sin(0.9 * i) * std::cos(0.7 * j);
                }
    }
    return Volume(g, std::move(vals), Unit::HU);
}

/// Follow-up MRI: a different monotone contrast of the same anatomy, moved
/// by a small per-patient rigid transform so registration has work to do.
Volume make_mri(const Volume& ct, Rng& rng) {
    std::vector<double> remapped(ct.values.size());
    for (std::size_t i = 0; i < ct.values.size(); ++i) {
        const double hu = ct.values[i];
        remapped[i] = hu <= -500.0 ? 25.0 : 320.0 + 4.5 * (80.0 - hu);
    }
    const Volume base(ct.geom, std::move(remapped), Unit::Intensity);

    RigidParams motion;
    motion.rz = rng.uniform(-0.05, 0.05);
    motion.rx = rng.uniform(-0.02, 0.02);
    motion.tx = rng.uniform(-2.5, 2.5);
    motion.ty = rng.uniform(-2.5, 2.5);
    motion.tz = rng.uniform(-1.5, 1.5);
    motion.center = ct.geom.physical_center();
    return apply_transform(base, motion.to_transform(), ct.geom, Interp::Trilinear, 25.0);
}

BinaryMask lesion_mask(const DemoLesion& l) {
    const Geometry g = demo_geometry();
    BinaryMask m = BinaryMask::empty_like(g);
    for (int k = 0; k < kDim; ++k)
        for (int j = 0; j < kDim; ++j)
            for (int i = 0; i < kDim; ++i) {
                const double dx = i - l.center[0], dy = j - l.center[1], dz = k - l.center[2];
                if (dx * dx + dy * dy + dz * dz <= l.radius * l.radius) m.set(i, j, k, true);
            }
    return m;
}

/// One dose grid per patient: Gaussian blobs per lesion. Recurrent (SI=1)
/// patients get their blobs displaced off the lesion centers, so delivered
/// dose misses the target margin and the isodose-vs-ROI deltas carry signal.
Volume make_dose(const DemoPatient& p, Rng& rng) {
    const Geometry g = demo_geometry();
    std::vector<double> vals(g.voxel_count(), 0.0);
    for (const auto& lesion : p.lesions) {
        Point3 center = lesion.center;
        if (p.si == 1) {
            const double angle = rng.uniform(0.0, 2.0 * M_PI);
            center[0] += 2.4 * std::cos(angle);
            center[1] += 2.4 * std::sin(angle);
            center[2] += rng.uniform(-0.8, 0.8);
        } else {
            center[0] += rng.uniform(-0.4, 0.4);
            center[1] += rng.uniform(-0.4, 0.4);
        }
        const double sigma = 1.15 * lesion.radius;
        const double peak = 1.45 * lesion.rx_gy;
        for (int k = 0; k < kDim; ++k)
            for (int j = 0; j < kDim; ++j)
                for (int i = 0; i < kDim; ++i) {
                    const double dx = i - center[0], dy = j - center[1], dz = k - center[2];
                    const double dose =
                        peak * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma));
                    double& cell = vals[g.index(i, j, k)];
                    cell = std::max(cell, dose);
                }
    }
    return Volume(g, std::move(vals), Unit::Gy);
}

}  // namespace

void generate_demo(const std::string& dir, std::uint64_t seed) {
    const fs::path root(dir);
    fs::create_directories(root / "masks");
    fs::create_directories(root / "dose");

    constexpr int kPatients = 12;
    const char* sexes[kPatients] = {"Male",  "Female", "Female", "Male",   "Female", "Other",
                                    "Male",  "Female", "Female", "Male",   "Female", "Female"};
    const char* tumors[kPatients] = {"Lung",  "Breast", "Lung",    "Kidney", "Breast", "Lung",
                                     "Colon", "Breast", "Lung",    "Breast", "Thyroid", "Lung"};
    const char* treat_dates[kPatients] = {"2021-01-10", "2021-02-14", "2021-03-03", "2021-04-21",
                                          "2021-05-30", "2021-06-08", "2021-07-19", "2021-01-05",
                                          "2021-08-02", "2021-09-15", "2021-10-11", "2021-11-23"};
    const int fu_months[kPatients] = {6, 7, 5, 8, 7, 6, 2, 70, 7, 5, 8, 6};  // one long outlier

    std::vector<DemoPatient> patients;
    Rng rng(derive_seed(seed, 0xDE30));
    for (int pi = 0; pi < kPatients; ++pi) {
        DemoPatient p;
        p.id = pi < 9 ? "P0" + std::to_string(pi + 1) : "P" + std::to_string(pi + 1);
        p.si = pi < 7 ? 1 : 0;
        p.machine = pi % 2 == 0 ? Machine::LINAC : Machine::GammaKnife;
        p.sex = sexes[pi];
        p.tumor = tumors[pi];
        p.age = 42.0 + 4.0 * pi;
        p.date_treatment = treat_dates[pi];
        Date t0 = Date::parse(p.date_treatment);
        Date fu = t0;
        fu.year += (fu.month + fu_months[pi] - 1) / 12;
        fu.month = 1 + (fu.month + fu_months[pi] - 1) % 12;
        p.date_followup = fu.iso();

        const int n_lesions = p.si == 1 ? 3 + static_cast<int>(rng.uniform_index(2))
                                        : 2 + static_cast<int>(rng.uniform_index(2));
        for (int li = 0; li < n_lesions; ++li) {
            DemoLesion l;
            l.id = p.id + "_L" + std::to_string(li + 1);
            const double c = (kDim - 1) / 2.0;
            const double angle = rng.uniform(0.0, 2.0 * M_PI);
            const double rad = rng.uniform(0.12, 0.3) * kDim;
            l.center = {c + rad * std::cos(angle), c + rad * std::sin(angle),
                        c + rng.uniform(-0.22, 0.22) * kDim};
            l.radius = rng.uniform(2.6, 4.2);
            l.rx_gy = p.machine == Machine::GammaKnife ? 24.0 : 20.0;
            p.lesions.push_back(std::move(l));
        }
        patients.push_back(std::move(p));
    }

    std::ofstream patients_csv(root / "patients.csv", std::ios::trunc);
    patients_csv << "patient_id,sex,n_metastases,machine,primary_tumor,decision_si,"
                    "date_first_treatment,date_first_followup,age\n";
    std::ofstream lesions_csv(root / "lesions.csv", std::ios::trunc);
    lesions_csv << "patient_id,lesion_id,roi_name,target_kind,machine,prescription_gy,"
                   "mask_path,dose_path\n";

    for (const auto& p : patients) {
        Rng prng(derive_seed(seed, 0xCA7 + std::hash<std::string>{}(p.id)));
        const Volume ct = make_ct(p, prng);
        const Volume mri = make_mri(ct, prng);
        fs::create_directories(root / "images" / p.id);
        write_nifti(ct, (root / "images" / p.id / "ct.nii.gz").string(), "deltarad demo ct");
        write_nifti(mri, (root / "images" / p.id / "mri.nii.gz").string(), "deltarad demo mri");
        const Volume dose = make_dose(p, prng);
        const std::string dose_rel = "dose/" + p.id + "_dose.nii.gz";
        write_nifti(dose, (root / dose_rel).string(), "deltarad demo dose");

        patients_csv << p.id << "," << p.sex << "," << p.lesions.size() << ","
                     << machine_name(p.machine) << "," << p.tumor << "," << p.si << ","
                     << p.date_treatment << "," << p.date_followup << "," << p.age << "\n";

        const TargetKind kind = select_target_kind(p.machine);
        for (std::size_t li = 0; li < p.lesions.size(); ++li) {
            const auto& l = p.lesions[li];
            const std::string mask_rel = "masks/" + l.id + ".nii.gz";
            write_nifti_mask(lesion_mask(l), (root / mask_rel).string(), "deltarad demo mask");
            lesions_csv << p.id << "," << l.id << "," << target_kind_name(kind) << "_"
                        << (li + 1) << "," << target_kind_name(kind) << ","
                        << machine_name(p.machine) << "," << l.rx_gy << "," << mask_rel << ","
                        << dose_rel << "\n";
        }
    }

    nlohmann::json cfg;
    cfg["seed"] = seed;
    cfg["paths"]["patients_csv"] = "patients.csv";
    cfg["paths"]["lesions_csv"] = "lesions.csv";
    cfg["paths"]["image_root"] = "images";
    cfg["paths"]["output_dir"] = "out";
    cfg["preprocess"]["window"]["level"] = 40.0;
    cfg["preprocess"]["window"]["width"] = 80.0;
    cfg["preprocess"]["clahe"]["tiles"] = {4, 4};
    cfg["preprocess"]["clahe"]["clip_limit"] = 2.0;
    cfg["preprocess"]["clahe"]["bins"] = 128;
    cfg["preprocess"]["median_radius"] = 0;
    cfg["registration"]["mi_bins"] = 32;
    cfg["registration"]["pyramid"] = {2, 1};
    cfg["registration"]["sampling_fraction"] = 0.5;
    cfg["registration"]["max_iterations"] = 60;
    cfg["dosimetry"]["incidence_factor"] = 1.5;
    cfg["radiomics"]["mode"] = "fixed_bin_count";
    cfg["radiomics"]["bins"] = 16;
    cfg["radiomics"]["glcm_distance"] = 1;
    cfg["learn"]["families"] = {"DT", "RF", "ADA", "GBT", "SVM"};
    cfg["learn"]["n_iter"] = 6;
    cfg["learn"]["cv_folds"] = 3;
    cfg["learn"]["test_fraction"] = 0.25;
    cfg["learn"]["split_mode"] = "case";
    cfg["learn"]["balanced_class_weights"] = true;
    cfg["learn"]["include_age"] = true;
    std::ofstream os(root / "config.json", std::ios::trunc);
    os << cfg.dump(2) << "\n";
}

}  // namespace deltarad
