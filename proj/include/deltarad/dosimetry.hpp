#pragma once

#include <string>
#include <vector>

#include "deltarad/volgrid.hpp"

namespace deltarad {

enum class Machine { LINAC, GammaKnife };
enum class TargetKind { GTV, PTV };

Machine parse_machine(const std::string& s);
std::string machine_name(Machine m);
std::string target_kind_name(TargetKind t);

struct LesionRecord {
    std::string lesion_id;
    std::string patient_id;
    std::string roi_name;
    TargetKind target_kind = TargetKind::GTV;
    double prescription_gy = 0.0;
    Machine machine = Machine::GammaKnife;
    std::string mask_path;
    std::string dose_path;

    void validate() const;
};

struct LesionDoseSummary {
    std::string lesion_id;
    double volume_cc = 0.0;
    double mean_dose_gy = 0.0;
    double max_dose_gy = 0.0;
    double min_dose_gy = 0.0;
    double coverage = 0.0;     // fraction of lesion voxels at or above prescription
    double discrepancy = 0.0;  // (mean - prescription) / prescription
};

/// Gamma Knife plans target GTVs, LINAC plans PTVs.
TargetKind select_target_kind(Machine m);

/// Arithmetic mean of dose inside the mask; mask must be non-empty and on
/// the dose grid.
double mean_dose(const Volume& dose, const BinaryMask& m);

/// True exactly where dose >= threshold.
BinaryMask isodose_mask(const Volume& dose, double threshold_gy);

/// |{v in m : dose(v) >= rx}| / |m|.
double coverage_fraction(const Volume& dose, const BinaryMask& m, double rx_gy);

/// voxel count * voxel volume / 1000.
double volume_cc(const BinaryMask& m);

/// Exact squared Euclidean distance (mm^2) from mask voxel centers,
/// anisotropic spacing respected.
std::vector<double> squared_distance_mm(const BinaryMask& m);

/// Dilates the mask by a margin of (factor - 1) equivalent-sphere radii,
/// floored at one voxel (max spacing). The result always contains the input.
BinaryMask incidence_region(const BinaryMask& m, double factor = 1.5);

LesionDoseSummary summarize_lesion(const Volume& dose, const BinaryMask& m,
                                   const LesionRecord& rec);

/// Lesion table CSV: patient_id, lesion_id, roi_name, target_kind, machine,
/// prescription_gy, mask_path, dose_path. Relative mask/dose paths are
/// resolved against the CSV's directory.
std::vector<LesionRecord> load_lesions(const std::string& path);

/// Summary CSV, fixed column order, 6-decimal fixed point.
void write_lesion_summaries(const std::vector<LesionDoseSummary>& summaries,
                            const std::string& path, const std::string& preamble = "");

}  // namespace deltarad
