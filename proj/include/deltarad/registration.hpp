#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deltarad/volgrid.hpp"

namespace deltarad {

/// Euler-angle rigid parameterization. The rotation is applied about
/// `center` (world mm) as R = Rz * Ry * Rx, followed by the translation.
struct RigidParams {
    double rx = 0.0, ry = 0.0, rz = 0.0;  // radians
    double tx = 0.0, ty = 0.0, tz = 0.0;  // mm
    Point3 center{0.0, 0.0, 0.0};

    RigidTransform to_transform() const;
};

struct RegistrationConfig {
    int mi_bins = 32;
    std::vector<int> pyramid{4, 2, 1};   // downsampling factors, descending to 1
    double sampling_fraction = 0.25;      // fraction of fixed voxels used per metric eval
    int max_iterations = 100;             // coordinate-descent sweeps per pyramid level
    double translation_step_mm = 2.0;     // initial steps, scaled by the pyramid factor
    double rotation_step_rad = 0.02;
    double translation_tolerance_mm = 0.05;  // stop when steps shrink below these
    double rotation_tolerance_rad = 0.002;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RegistrationResult {
    RigidTransform transform;  // pass to apply_transform(moving, t, fixed.geom, ...)
    double metric = 0.0;       // MI at the returned transform, full resolution
    double metric_at_identity = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// compose(t, invert(t)) is the identity within 1e-9.
RigidTransform invert(const RigidTransform& t);

/// Result maps p to a(b(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Output voxel at world position w samples `moving` at t^-1(w).
Volume apply_transform(const Volume& moving, const RigidTransform& t, const Geometry& target,
                       Interp interp, double fill = 0.0);
BinaryMask apply_transform_mask(const BinaryMask& moving, const RigidTransform& t,
                                const Geometry& target);

/// Joint-histogram mutual information over min-max normalized intensities,
/// natural log. Same geometry required; a constant image on either side
/// yields 0 by convention.
double mutual_information(const Volume& a, const Volume& b, int bins);

/// 2|a n b| / (|a| + |b|); throws when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

/// Derivative-free coordinate descent (per-parameter line search with step
/// halving) maximizing MI, coarse-to-fine over the pyramid. MRI is the
/// intended fixed image and CT the moving one. Deterministic given the seed;
/// the returned transform never scores below the identity.
RegistrationResult register_rigid(const Volume& fixed, const Volume& moving,
                                  const RegistrationConfig& cfg);

/// Text transform exchange format: 16 whitespace-separated numbers,
/// row-major 4x4, world mm. Covers vendor-exported inverse matrices.
RigidTransform load_transform_text(const std::string& path);
void save_transform_text(const RigidTransform& t, const std::string& path);

}  // namespace deltarad
