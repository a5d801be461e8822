#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deltarad/learn.hpp"
#include "deltarad/preprocess.hpp"
#include "deltarad/radiomics.hpp"
#include "deltarad/registration.hpp"

namespace deltarad {

/// Full pipeline configuration, loaded from one JSON document so a run is
/// reproducible from a single artifact. Relative paths resolve against the
/// config file's directory.
struct PipelineConfig {
    std::uint64_t seed = 0;

    std::string patients_csv;
    std::string lesions_csv;
    std::string image_root;
    std::string output_dir;

    WindowSpec window;
    ClaheSpec clahe_spec;
    int median_radius = 0;  // 0 disables artifact-reduction filtering

    RegistrationConfig registration;
    std::string external_transforms_dir;  // optional vendor-exported matrices

    double incidence_factor = 1.5;

    DiscretizationConfig discretization;
    int glcm_distance = 1;

    std::vector<ModelFamily> families{ModelFamily::DT, ModelFamily::RF, ModelFamily::ADA,
                                      ModelFamily::GBT, ModelFamily::SVM};
    int n_iter = 25;
    int cv_folds = 5;
    double test_fraction = 0.2;
    SplitMode split_mode = SplitMode::Case;
    bool balanced_class_weights = true;
    bool include_age = true;

    /// FNV-1a over the canonical config serialization with output_dir
    /// blanked, so the hash identifies inputs and parameters, not the
    /// destination.
    std::uint64_t config_hash() const;
    std::string stamp() const;  // "config_hash=... seed=..."

    static PipelineConfig load(const std::string& path);
    void validate() const;
};

/// Stage entry points; each writes its artifacts plus a manifest under
/// output_dir/<stage>/ and throws with a clear message when a prerequisite
/// stage has not run (or ran under a different config hash).
void run_preprocess(const PipelineConfig& cfg);
void run_register(const PipelineConfig& cfg);
void run_dose(const PipelineConfig& cfg);
void run_features(const PipelineConfig& cfg);
void run_cohort(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_evaluate(const PipelineConfig& cfg);
void run_all(const PipelineConfig& cfg);

int run_stage(const std::string& stage, const PipelineConfig& cfg);

/// Writes a self-contained synthetic demo cohort (phantom images, lesion
/// masks, dose grids, clinical table, and a ready-to-run config.json).
void generate_demo(const std::string& dir, std::uint64_t seed);

}  // namespace deltarad
