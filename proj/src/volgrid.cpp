#include "deltarad/volgrid.hpp"

#include <cmath>
#include <stdexcept>

namespace deltarad {

namespace {

double det3(const std::array<double, 9>& d) {
    return d[0] * (d[4] * d[8] - d[5] * d[7]) - d[1] * (d[3] * d[8] - d[5] * d[6]) +
           d[2] * (d[3] * d[7] - d[4] * d[6]);
}

}  // namespace

Point3 Geometry::voxel_to_world(const Point3& p) const {
    const double sx = spacing[0] * p[0];
    const double sy = spacing[1] * p[1];
    const double sz = spacing[2] * p[2];
    return {origin[0] + direction[0] * sx + direction[1] * sy + direction[2] * sz,
            origin[1] + direction[3] * sx + direction[4] * sy + direction[5] * sz,
            origin[2] + direction[6] * sx + direction[7] * sy + direction[8] * sz};
}

Point3 Geometry::world_to_voxel(const Point3& w) const {
    const double dx = w[0] - origin[0];
    const double dy = w[1] - origin[1];
    const double dz = w[2] - origin[2];
    return {(direction[0] * dx + direction[3] * dy + direction[6] * dz) / spacing[0],
            (direction[1] * dx + direction[4] * dy + direction[7] * dz) / spacing[1],
            (direction[2] * dx + direction[5] * dy + direction[8] * dz) / spacing[2]};
}

Point3 Geometry::physical_center() const {
    return voxel_to_world({(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0});
}

void Geometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) throw std::invalid_argument("Geometry: dims must be >= 1");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
            throw std::invalid_argument("Geometry: spacing must be > 0");
        if (!std::isfinite(origin[a])) throw std::invalid_argument("Geometry: non-finite origin");
    }
    // |D^T D - I|_max <= 1e-6
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += direction[3 * k + r] * direction[3 * k + c];
            const double expect = (r == c) ? 1.0 : 0.0;
            if (std::abs(dot - expect) > 1e-6)
                throw std::invalid_argument("Geometry: direction matrix is not orthonormal");
        }
    }
    if (std::abs(std::abs(det3(direction)) - 1.0) > 1e-6)
        throw std::invalid_argument("Geometry: direction determinant must be +/-1");
}

bool Geometry::approx_equal(const Geometry& other, double tol) const {
    if (dims != other.dims) return false;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(spacing[a] - other.spacing[a]) > tol) return false;
        if (std::abs(origin[a] - other.origin[a]) > tol) return false;
    }
    for (int i = 0; i < 9; ++i)
        if (std::abs(direction[i] - other.direction[i]) > tol) return false;
    return true;
}

Volume::Volume(Geometry g, std::vector<double> v, Unit u)
    : geom(g), values(std::move(v)), unit(u) {
    geom.validate();
    if (values.size() != geom.voxel_count())
        throw std::invalid_argument("Volume: value count does not match dims");
    for (double x : values)
        if (!std::isfinite(x)) throw std::invalid_argument("Volume: non-finite value");
}

double Volume::sample_trilinear(const Point3& c, double fill) const {
    const auto& d = geom.dims;
    Point3 q = c;
    for (int a = 0; a < 3; ++a) {
        if (q[a] < -0.5 || q[a] > d[a] - 0.5) return fill;
        if (q[a] < 0.0) q[a] = 0.0;
        if (q[a] > d[a] - 1) q[a] = d[a] - 1;
    }
    const int i0 = static_cast<int>(std::floor(q[0]));
    const int j0 = static_cast<int>(std::floor(q[1]));
    const int k0 = static_cast<int>(std::floor(q[2]));
    const int i1 = std::min(i0 + 1, d[0] - 1);
    const int j1 = std::min(j0 + 1, d[1] - 1);
    const int k1 = std::min(k0 + 1, d[2] - 1);
    const double fx = q[0] - i0, fy = q[1] - j0, fz = q[2] - k0;

    const double c000 = at(i0, j0, k0), c100 = at(i1, j0, k0);
    const double c010 = at(i0, j1, k0), c110 = at(i1, j1, k0);
    const double c001 = at(i0, j0, k1), c101 = at(i1, j0, k1);
    const double c011 = at(i0, j1, k1), c111 = at(i1, j1, k1);

    const double c00 = c000 + (c100 - c000) * fx;
    const double c10 = c010 + (c110 - c010) * fx;
    const double c01 = c001 + (c101 - c001) * fx;
    const double c11 = c011 + (c111 - c011) * fx;
    const double c0 = c00 + (c10 - c00) * fy;
    const double c1 = c01 + (c11 - c01) * fy;
    return c0 + (c1 - c0) * fz;
}

double Volume::sample_nearest(const Point3& c, double fill) const {
    const int i = static_cast<int>(std::lround(c[0]));
    const int j = static_cast<int>(std::lround(c[1]));
    const int k = static_cast<int>(std::lround(c[2]));
    if (!geom.contains(i, j, k)) return fill;
    return at(i, j, k);
}

BinaryMask::BinaryMask(Geometry g, std::vector<std::uint8_t> b) : geom(g), bits(std::move(b)) {
    geom.validate();
    if (bits.size() != geom.voxel_count())
        throw std::invalid_argument("BinaryMask: bit count does not match dims");
    for (auto& x : bits) x = x ? 1 : 0;
}

BinaryMask BinaryMask::empty_like(const Geometry& g) {
    return BinaryMask(g, std::vector<std::uint8_t>(g.voxel_count(), 0));
}

std::size_t BinaryMask::voxel_count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
}

RigidTransform RigidTransform::translation(double tx, double ty, double tz) {
    RigidTransform t;
    t.at(0, 3) = tx;
    t.at(1, 3) = ty;
    t.at(2, 3) = tz;
    return t;
}

Point3 RigidTransform::apply(const Point3& p) const {
    return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + m[3],
            m[4] * p[0] + m[5] * p[1] + m[6] * p[2] + m[7],
            m[8] * p[0] + m[9] * p[1] + m[10] * p[2] + m[11]};
}

void RigidTransform::validate() const {
    if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0)
        throw std::invalid_argument("RigidTransform: bottom row must be (0,0,0,1)");
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double dot = 0.0;
            for (int k = 0; k < 3; ++k) dot += at(k, r) * at(k, c);
            const double expect = (r == c) ? 1.0 : 0.0;
            if (std::abs(dot - expect) > 1e-9)
                throw std::invalid_argument("RigidTransform: rotation is not orthonormal");
        }
    }
    const std::array<double, 9> rot{at(0, 0), at(0, 1), at(0, 2), at(1, 0), at(1, 1),
                                    at(1, 2), at(2, 0), at(2, 1), at(2, 2)};
    if (std::abs(det3(rot) - 1.0) > 1e-9)
        throw std::invalid_argument("RigidTransform: rotation determinant must be +1");
}

namespace {

// target voxel -> source voxel as one affine map, composed in exact algebra
struct VoxelMap {
    std::array<double, 9> a;
    Point3 b;

    static VoxelMap between(const Geometry& target, const Geometry& src) {
        VoxelMap vm{};
        // columns of the target voxel->world map, pushed through src world->voxel
        const Point3 o = src.world_to_voxel(target.voxel_to_world({0, 0, 0}));
        for (int c = 0; c < 3; ++c) {
            Point3 e{0, 0, 0};
            e[c] = 1.0;
            const Point3 w = src.world_to_voxel(target.voxel_to_world(e));
            for (int r = 0; r < 3; ++r) vm.a[3 * r + c] = w[r] - o[r];
        }
        vm.b = o;
        return vm;
    }

    Point3 operator()(double i, double j, double k) const {
        return {a[0] * i + a[1] * j + a[2] * k + b[0], a[3] * i + a[4] * j + a[5] * k + b[1],
                a[6] * i + a[7] * j + a[8] * k + b[2]};
    }
};

}  // namespace

Volume resample(const Volume& src, const Geometry& target, Interp interp, double fill) {
    src.geom.validate();
    target.validate();
    const VoxelMap vm = VoxelMap::between(target, src.geom);
    std::vector<double> out(target.voxel_count());
    std::size_t idx = 0;
    for (int k = 0; k < target.dims[2]; ++k) {
        for (int j = 0; j < target.dims[1]; ++j) {
            for (int i = 0; i < target.dims[0]; ++i, ++idx) {
                const Point3 c = vm(i, j, k);
                out[idx] = (interp == Interp::Nearest) ? src.sample_nearest(c, fill)
                                                       : src.sample_trilinear(c, fill);
            }
        }
    }
    return Volume(target, std::move(out), src.unit);
}

BinaryMask resample_mask(const BinaryMask& m, const Geometry& target) {
    m.geom.validate();
    target.validate();
    const VoxelMap vm = VoxelMap::between(target, m.geom);
    std::vector<std::uint8_t> out(target.voxel_count(), 0);
    std::size_t idx = 0;
    for (int k = 0; k < target.dims[2]; ++k) {
        for (int j = 0; j < target.dims[1]; ++j) {
            for (int i = 0; i < target.dims[0]; ++i, ++idx) {
                const Point3 c = vm(i, j, k);
                const int si = static_cast<int>(std::lround(c[0]));
                const int sj = static_cast<int>(std::lround(c[1]));
                const int sk = static_cast<int>(std::lround(c[2]));
                if (m.geom.contains(si, sj, sk)) out[idx] = m.bits[m.geom.index(si, sj, sk)];
            }
        }
    }
    return BinaryMask(target, std::move(out));
}

}  // namespace deltarad
