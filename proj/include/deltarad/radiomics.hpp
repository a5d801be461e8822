#pragma once

#include <array>
#include <string>
#include <vector>

#include "deltarad/volgrid.hpp"

namespace deltarad {

enum class DiscretizationMode { FixedBinCount, FixedBinWidth };

struct DiscretizationConfig {
    DiscretizationMode mode = DiscretizationMode::FixedBinCount;
    int bins = 32;
    double bin_width = 1.0;

    void validate() const;
};

/// Ordered, named real-valued features; order is fixed by the extractor
/// schema and names follow the "family.feature" convention.
struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;

    std::size_t size() const { return names.size(); }
    double value(const std::string& name) const;
    void push(std::string name, double v);
};

/// Gray-level labels over the full grid; 0 marks voxels outside the mask,
/// masked voxels carry 1..level_count.
struct DiscretizedGrid {
    std::vector<int> labels;
    int level_count = 0;
};

using Offset3 = std::array<int, 3>;

/// The 13 unique 3-D scan directions (half of the 26-neighborhood).
const std::vector<Offset3>& texture_directions();

DiscretizedGrid discretize(const Volume& v, const BinaryMask& m, const DiscretizationConfig& cfg);

/// {mean, median, min, max, range, variance, stddev, skewness, kurtosis,
/// energy, rms, entropy, p10, p90, iqr, mad} of masked intensities.
/// Population moments; skewness/kurtosis 0 for constant regions; entropy
/// over 64 fixed-count bins, log2.
FeatureVector first_order_features(const Volume& v, const BinaryMask& m);

/// {volume_cc, surface_area_cm2, surface_to_volume, sphericity,
/// max_diameter_mm, elongation, flatness}. Surface area sums exposed voxel
/// faces weighted by the estimated local surface normal, which is exact for
/// axis-aligned slabs and isolated voxels and close for smooth phantoms.
/// Elongation is the minor-axis ratio sqrt(l3/l2) and flatness sqrt(l3/l1)
/// of the descending covariance eigenvalues; degenerate ratios are 1.
FeatureVector shape_features(const BinaryMask& m);

/// Symmetric co-occurrence counts over the given directions at `distance`,
/// both voxels inside the mask, summed into one matrix and normalized.
std::vector<double> glcm_matrix(const Volume& v, const BinaryMask& m,
                                const DiscretizationConfig& cfg, int distance,
                                const std::vector<Offset3>& directions, int& levels_out);

/// {contrast, dissimilarity, energy, entropy, homogeneity, correlation};
/// all zero when no voxel pair exists, correlation 0 for zero variance.
FeatureVector glcm_features(const Volume& v, const BinaryMask& m, const DiscretizationConfig& cfg,
                            int distance = 1);

/// Run-length counts R(level, length), runs truncated at the mask boundary,
/// summed over the given directions.
std::vector<double> glrlm_matrix(const Volume& v, const BinaryMask& m,
                                 const DiscretizationConfig& cfg,
                                 const std::vector<Offset3>& directions, int& levels_out,
                                 int& max_len_out);

/// {sre, lre, gln, rln, run_percentage}; run percentage uses the
/// runs / (voxels * directions) denominator.
FeatureVector glrlm_features(const Volume& v, const BinaryMask& m,
                             const DiscretizationConfig& cfg);

/// Full 34-feature schema: 16 first-order + 7 shape + 6 GLCM + 5 GLRLM.
FeatureVector extract_features(const Volume& v, const BinaryMask& m,
                               const DiscretizationConfig& cfg, int glcm_distance = 1);

/// The fixed name list extract_features produces.
std::vector<std::string> feature_schema();

/// value_i = |a_i - b_i| with names prefixed "delta."; name lists must match
/// exactly.
FeatureVector delta_features(const FeatureVector& a, const FeatureVector& b);

}  // namespace deltarad
