#include "deltarad/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "deltarad/rng.hpp"

namespace deltarad {

RigidTransform RigidParams::to_transform() const {
    const double cx = std::cos(rx), sx = std::sin(rx);
    const double cy = std::cos(ry), sy = std::sin(ry);
    const double cz = std::cos(rz), sz = std::sin(rz);
    // R = Rz * Ry * Rx
    const double r00 = cz * cy;
    const double r01 = cz * sy * sx - sz * cx;
    const double r02 = cz * sy * cx + sz * sx;
    const double r10 = sz * cy;
    const double r11 = sz * sy * sx + cz * cx;
    const double r12 = sz * sy * cx - cz * sx;
    const double r20 = -sy;
    const double r21 = cy * sx;
    const double r22 = cy * cx;

    RigidTransform t;
    t.at(0, 0) = r00; t.at(0, 1) = r01; t.at(0, 2) = r02;
    t.at(1, 0) = r10; t.at(1, 1) = r11; t.at(1, 2) = r12;
    t.at(2, 0) = r20; t.at(2, 1) = r21; t.at(2, 2) = r22;
    // p -> R (p - c) + c + t
    t.at(0, 3) = center[0] - (r00 * center[0] + r01 * center[1] + r02 * center[2]) + tx;
    t.at(1, 3) = center[1] - (r10 * center[0] + r11 * center[1] + r12 * center[2]) + ty;
    t.at(2, 3) = center[2] - (r20 * center[0] + r21 * center[1] + r22 * center[2]) + tz;
    return t;
}

void RegistrationConfig::validate() const {
    if (mi_bins < 8) throw std::invalid_argument("registration: mi_bins must be >= 8");
    if (pyramid.empty() || pyramid.back() != 1)
        throw std::invalid_argument("registration: pyramid must end at factor 1");
    int prev = 1 << 30;
    for (int f : pyramid) {
        if (f < 1 || f > prev) throw std::invalid_argument("registration: pyramid factors must be >= 1 and descending");
        prev = f;
    }
    if (!(sampling_fraction > 0.0) || sampling_fraction > 1.0)
        throw std::invalid_argument("registration: sampling fraction must be in (0, 1]");
    if (max_iterations < 1) throw std::invalid_argument("registration: max_iterations must be >= 1");
}

RigidTransform invert(const RigidTransform& t) {
    // rigid inverse: R^T, -R^T b
    RigidTransform out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.at(r, c) = t.at(c, r);
    for (int r = 0; r < 3; ++r) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += t.at(c, r) * t.at(c, 3);
        out.at(r, 3) = -s;
    }
    return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    RigidTransform out;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += a.at(r, k) * b.at(k, c);
            out.at(r, c) = s;
        }
    }
    return out;
}

namespace {

// target voxel -> moving voxel through t^-1, folded into one affine
struct PullbackMap {
    std::array<double, 9> a;
    Point3 b;

    static PullbackMap make(const Geometry& target, const RigidTransform& t, const Geometry& moving) {
        const RigidTransform inv = invert(t);
        PullbackMap pm{};
        const Point3 o = moving.world_to_voxel(inv.apply(target.voxel_to_world({0, 0, 0})));
        for (int c = 0; c < 3; ++c) {
            Point3 e{0, 0, 0};
            e[c] = 1.0;
            const Point3 w = moving.world_to_voxel(inv.apply(target.voxel_to_world(e)));
            for (int r = 0; r < 3; ++r) pm.a[3 * r + c] = w[r] - o[r];
        }
        pm.b = o;
        return pm;
    }

    Point3 operator()(double i, double j, double k) const {
        return {a[0] * i + a[1] * j + a[2] * k + b[0], a[3] * i + a[4] * j + a[5] * k + b[1],
                a[6] * i + a[7] * j + a[8] * k + b[2]};
    }
};

}  // namespace

Volume apply_transform(const Volume& moving, const RigidTransform& t, const Geometry& target,
                       Interp interp, double fill) {
    target.validate();
    const PullbackMap pm = PullbackMap::make(target, t, moving.geom);
    std::vector<double> out(target.voxel_count());
    std::size_t idx = 0;
    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i, ++idx) {
                const Point3 c = pm(i, j, k);
                out[idx] = (interp == Interp::Nearest) ? moving.sample_nearest(c, fill)
                                                       : moving.sample_trilinear(c, fill);
            }
    return Volume(target, std::move(out), moving.unit);
}

BinaryMask apply_transform_mask(const BinaryMask& moving, const RigidTransform& t,
                                const Geometry& target) {
    target.validate();
    const PullbackMap pm = PullbackMap::make(target, t, moving.geom);
    std::vector<std::uint8_t> out(target.voxel_count(), 0);
    std::size_t idx = 0;
    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i, ++idx) {
                const Point3 c = pm(i, j, k);
                const int si = static_cast<int>(std::lround(c[0]));
                const int sj = static_cast<int>(std::lround(c[1]));
                const int sk = static_cast<int>(std::lround(c[2]));
                if (moving.geom.contains(si, sj, sk))
                    out[idx] = moving.bits[moving.geom.index(si, sj, sk)];
            }
    return BinaryMask(target, std::move(out));
}

namespace {

struct MinMax {
    double lo, hi;
    bool constant() const { return !(hi > lo); }
};

MinMax value_range(const std::vector<double>& v) {
    MinMax mm{v[0], v[0]};
    for (double x : v) {
        mm.lo = std::min(mm.lo, x);
        mm.hi = std::max(mm.hi, x);
    }
    return mm;
}

double mi_from_joint(const std::vector<double>& joint, int bins, double total) {
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            pa[i] += joint[static_cast<std::size_t>(i) * bins + j];
            pb[j] += joint[static_cast<std::size_t>(i) * bins + j];
        }
    double mi = 0.0;
    for (int i = 0; i < bins; ++i) {
        for (int j = 0; j < bins; ++j) {
            const double pij = joint[static_cast<std::size_t>(i) * bins + j] / total;
            if (pij > 0.0) mi += pij * std::log(pij / ((pa[i] / total) * (pb[j] / total)));
        }
    }
    return mi;
}

}  // namespace

double mutual_information(const Volume& a, const Volume& b, int bins) {
    if (bins < 8) throw std::invalid_argument("mutual_information: bins must be >= 8");
    if (!a.geom.approx_equal(b.geom))
        throw std::invalid_argument("mutual_information: geometries differ; resample first");
    const MinMax ra = value_range(a.values), rb = value_range(b.values);
    if (ra.constant() || rb.constant()) return 0.0;

    std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
    const double sa = bins / (ra.hi - ra.lo), sb = bins / (rb.hi - rb.lo);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const int ia = std::min(bins - 1, static_cast<int>((a.values[i] - ra.lo) * sa));
        const int ib = std::min(bins - 1, static_cast<int>((b.values[i] - rb.lo) * sb));
        joint[static_cast<std::size_t>(ia) * bins + ib] += 1.0;
    }
    return mi_from_joint(joint, bins, static_cast<double>(a.values.size()));
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (!a.geom.approx_equal(b.geom)) throw std::invalid_argument("dice: geometries differ");
    std::size_t na = 0, nb = 0, ninter = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        na += a.bits[i];
        nb += b.bits[i];
        ninter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    }
    if (na + nb == 0) throw std::invalid_argument("dice: both masks are empty");
    return 2.0 * static_cast<double>(ninter) / static_cast<double>(na + nb);
}

namespace {

Geometry downsampled_geometry(const Geometry& g, int factor) {
    Geometry out = g;
    for (int a = 0; a < 3; ++a) {
        out.dims[a] = std::max(1, g.dims[a] / factor);
        out.spacing[a] = g.spacing[a] * factor;
    }
    // keep the field centered: voxel 0 of the coarse grid sits at the mean
    // world position of the fine voxels it covers
    const Point3 shift = {(factor - 1) / 2.0, (factor - 1) / 2.0, (factor - 1) / 2.0};
    out.origin = g.voxel_to_world(shift);
    return out;
}

// deterministic sample of fixed-image voxels with their world positions
struct FixedSamples {
    std::vector<Point3> world;
    std::vector<double> value;
};

FixedSamples sample_fixed(const Volume& fixed, double fraction, std::uint64_t seed) {
    FixedSamples s;
    const std::size_t n = fixed.values.size();
    Rng rng(derive_seed(seed, 0xF1C5ED));
    s.world.reserve(static_cast<std::size_t>(n * fraction) + 1);
    std::size_t idx = 0;
    for (int k = 0; k < fixed.geom.dims[2]; ++k)
        for (int j = 0; j < fixed.geom.dims[1]; ++j)
            for (int i = 0; i < fixed.geom.dims[0]; ++i, ++idx) {
                if (fraction < 1.0 && rng.uniform01() >= fraction) continue;
                s.world.push_back(fixed.geom.voxel_to_world({double(i), double(j), double(k)}));
                s.value.push_back(fixed.values[idx]);
            }
    return s;
}

// MI between sampled fixed values and the moving image pulled back through
// T(params)^-1. Out-of-field samples read the low end of the moving range
// (air) instead of being dropped; dropping them lets the optimizer shrink
// the overlap toward spuriously high MI.
double sampled_mi(const FixedSamples& s, const MinMax& fr, const Volume& moving, const MinMax& mr,
                  const RigidTransform& t, int bins) {
    const RigidTransform inv = invert(t);
    std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
    const double sa = bins / (fr.hi - fr.lo);
    const double sb = bins / (mr.hi - mr.lo);
    for (std::size_t i = 0; i < s.world.size(); ++i) {
        const Point3 c = moving.geom.world_to_voxel(inv.apply(s.world[i]));
        const double mv = moving.sample_trilinear(c, mr.lo);
        const int ia = std::clamp(static_cast<int>((s.value[i] - fr.lo) * sa), 0, bins - 1);
        const int ib = std::clamp(static_cast<int>((mv - mr.lo) * sb), 0, bins - 1);
        joint[static_cast<std::size_t>(ia) * bins + ib] += 1.0;
    }
    const double mi = mi_from_joint(joint, bins, static_cast<double>(s.world.size()));
    if (!std::isfinite(mi))
        throw std::runtime_error("register_rigid: non-finite metric during search");
    return mi;
}

}  // namespace

RegistrationResult register_rigid(const Volume& fixed, const Volume& moving,
                                  const RegistrationConfig& cfg) {
    cfg.validate();
    const MinMax fr = value_range(fixed.values), mr = value_range(moving.values);
    if (fr.constant() || mr.constant())
        throw std::invalid_argument("register_rigid: images must be non-constant");

    RigidParams params;
    params.center = fixed.geom.physical_center();
    int max_level_sweeps = 0;
    bool converged = false;

    for (std::size_t level = 0; level < cfg.pyramid.size(); ++level) {
        const int factor = cfg.pyramid[level];
        Volume level_fixed = factor == 1
                                 ? fixed
                                 : resample(fixed, downsampled_geometry(fixed.geom, factor),
                                            Interp::Trilinear, fr.lo);
        const FixedSamples samples =
            sample_fixed(level_fixed, cfg.sampling_fraction, derive_seed(cfg.seed, level));

        auto eval = [&](const RigidParams& p) {
            return sampled_mi(samples, fr, moving, mr, p.to_transform(), cfg.mi_bins);
        };

        double step_t = cfg.translation_step_mm * factor;
        double step_r = cfg.rotation_step_rad * factor;
        double best = eval(params);
        converged = false;

        for (int sweep = 0; sweep < cfg.max_iterations; ++sweep) {
            max_level_sweeps = std::max(max_level_sweeps, sweep + 1);
            bool improved = false;
            double* fields[6] = {&params.tx, &params.ty, &params.tz,
                                 &params.rx, &params.ry, &params.rz};
            for (int pi = 0; pi < 6; ++pi) {
                const double step = pi < 3 ? step_t : step_r;
                for (const double dir : {+1.0, -1.0}) {
                    for (;;) {
                        *fields[pi] += dir * step;
                        const double m = eval(params);
                        if (m > best) {
                            best = m;
                            improved = true;
                        } else {
                            *fields[pi] -= dir * step;
                            break;
                        }
                    }
                }
            }
            if (!improved) {
                step_t /= 2.0;
                step_r /= 2.0;
                if (step_t < cfg.translation_tolerance_mm && step_r < cfg.rotation_tolerance_rad) {
                    converged = true;
                    break;
                }
            }
        }
    }

    // full-resolution scores for the monotone-acceptance guarantee
    const FixedSamples full = sample_fixed(fixed, cfg.sampling_fraction, derive_seed(cfg.seed, 97));
    RigidParams identity;
    identity.center = params.center;
    const double mi_id = sampled_mi(full, fr, moving, mr, identity.to_transform(), cfg.mi_bins);
    double mi_sol = sampled_mi(full, fr, moving, mr, params.to_transform(), cfg.mi_bins);

    RegistrationResult result;
    result.metric_at_identity = mi_id;
    result.iterations = max_level_sweeps;  // sweeps used at the busiest pyramid level
    if (mi_sol >= mi_id) {
        result.transform = params.to_transform();
        result.metric = mi_sol;
        result.converged = converged;
    } else {
        result.transform = identity.to_transform();
        result.metric = mi_id;
        result.converged = false;
    }
    return result;
}

RigidTransform load_transform_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open transform file: " + path);
    RigidTransform t;
    for (int i = 0; i < 16; ++i) {
        if (!(in >> t.m[i]))
            throw std::runtime_error("transform file must hold 16 numbers: " + path);
    }
    t.validate();
    return t;
}

void save_transform_text(const RigidTransform& t, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write transform file: " + path);
    os << std::setprecision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            os << t.at(r, c);
            os << (c == 3 ? '\n' : ' ');
        }
    }
}

}  // namespace deltarad
