#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace deltarad {

using Point3 = std::array<double, 3>;

enum class Unit { HU, Intensity, Gy, Normalized };

/// Physical placement of a voxel grid: counts, spacing (mm), origin of the
/// voxel (0,0,0) center in world mm, and a row-major 3x3 orthonormal
/// direction matrix.
struct Geometry {
    std::array<int, 3> dims{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    Point3 origin{0.0, 0.0, 0.0};
    std::array<double, 9> direction{1, 0, 0, 0, 1, 0, 0, 0, 1};

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }

    // x fastest; voxel indices are bit-exact across all operations
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }

    bool contains(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }

    // w = origin + D * (spacing .* p)
    Point3 voxel_to_world(const Point3& p) const;
    // exact inverse (D is orthonormal, so D^-1 = D^T)
    Point3 world_to_voxel(const Point3& w) const;

    Point3 physical_center() const;

    /// Throws std::invalid_argument when dims/spacing are out of range or the
    /// direction matrix is not orthonormal within 1e-6.
    void validate() const;

    bool approx_equal(const Geometry& other, double tol = 1e-6) const;
};

/// 3-D scalar grid; carrier for CT, MRI and dose data. Values are stored
/// x-fastest and are finite by construction.
struct Volume {
    Geometry geom;
    std::vector<double> values;
    Unit unit = Unit::Intensity;

    Volume() = default;
    Volume(Geometry g, std::vector<double> v, Unit u = Unit::Intensity);

    double at(int i, int j, int k) const { return values[geom.index(i, j, k)]; }
    double& at(int i, int j, int k) { return values[geom.index(i, j, k)]; }

    /// Trilinear sample at continuous voxel coordinate c. Valid over the
    /// half-voxel-extended field [-0.5, n-0.5] per axis (coordinates clamped
    /// to the voxel-center hull first); outside returns `fill`.
    double sample_trilinear(const Point3& c, double fill = 0.0) const;
    /// Nearest-neighbor sample; valid where round(c) lands inside the grid.
    double sample_nearest(const Point3& c, double fill = 0.0) const;
};

/// Boolean grid on a Geometry; ROI, target and isodose regions.
struct BinaryMask {
    Geometry geom;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(Geometry g, std::vector<std::uint8_t> b);
    static BinaryMask empty_like(const Geometry& g);

    bool at(int i, int j, int k) const { return bits[geom.index(i, j, k)] != 0; }
    void set(int i, int j, int k, bool v) { bits[geom.index(i, j, k)] = v ? 1 : 0; }
    std::size_t voxel_count() const;
};

/// 4x4 homogeneous world->world rigid map, row-major.
struct RigidTransform {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    static RigidTransform identity() { return RigidTransform{}; }
    static RigidTransform translation(double tx, double ty, double tz);

    Point3 apply(const Point3& p) const;
    double at(int r, int c) const { return m[static_cast<std::size_t>(r) * 4 + c]; }
    double& at(int r, int c) { return m[static_cast<std::size_t>(r) * 4 + c]; }

    /// Bottom row must be (0,0,0,1) exactly and R orthonormal with det +1
    /// within 1e-9; throws otherwise.
    void validate() const;
};

enum class Interp { Nearest, Trilinear };

/// Reads a NIfTI-1 volume (.nii or .nii.gz, little-endian). Geometry comes
/// from the sform when sform_code > 0, else the qform, else pixdim with
/// identity direction. scl_slope/scl_inter are applied when scl_slope != 0.
Volume read_nifti(const std::string& path, Unit unit = Unit::Intensity);

/// Writes little-endian NIfTI-1 float32 with the geometry encoded in the
/// sform; read_nifti inverts it. Paths ending in .gz are gzip-compressed with
/// a fixed header so identical volumes produce identical bytes.
/// `descrip` lands in the 80-char header description field.
void write_nifti(const Volume& v, const std::string& path, const std::string& descrip = "");

Volume read_nifti_mask_volume(const std::string& path);
BinaryMask read_nifti_mask(const std::string& path, double threshold = 0.5);
void write_nifti_mask(const BinaryMask& m, const std::string& path, const std::string& descrip = "");

/// Resamples src onto the target geometry. Out-of-field voxels take `fill`.
Volume resample(const Volume& src, const Geometry& target, Interp interp, double fill = 0.0);

/// Nearest-neighbor resampling of the bit grid; the result is binary.
BinaryMask resample_mask(const BinaryMask& m, const Geometry& target);

}  // namespace deltarad
