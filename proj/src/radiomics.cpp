#include "deltarad/radiomics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deltarad {

void DiscretizationConfig::validate() const {
    if (mode == DiscretizationMode::FixedBinCount) {
        if (bins < 2) throw std::invalid_argument("discretize: bin count must be >= 2");
    } else {
        if (!(bin_width > 0.0)) throw std::invalid_argument("discretize: bin width must be > 0");
    }
}

double FeatureVector::value(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    throw std::out_of_range("no such feature: " + name);
}

void FeatureVector::push(std::string name, double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("feature " + name + " is not finite");
    names.push_back(std::move(name));
    values.push_back(v);
}

const std::vector<Offset3>& texture_directions() {
    static const std::vector<Offset3> dirs = {
        {1, 0, 0},  {0, 1, 0},  {0, 0, 1},  {1, 1, 0},   {1, -1, 0},
        {1, 0, 1},  {1, 0, -1}, {0, 1, 1},  {0, 1, -1},  {1, 1, 1},
        {1, 1, -1}, {1, -1, 1}, {-1, 1, 1},
    };
    return dirs;
}

namespace {

std::vector<double> masked_values(const Volume& v, const BinaryMask& m) {
    if (!v.geom.approx_equal(m.geom))
        throw std::invalid_argument("radiomics: volume and mask geometries differ");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.values.size(); ++i)
        if (m.bits[i]) out.push_back(v.values[i]);
    if (out.empty()) throw std::invalid_argument("radiomics: empty mask");
    return out;
}

// linear-interpolation percentile on sorted data, rank q*(n-1)
double percentile_sorted(const std::vector<double>& sorted, double q) {
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

DiscretizedGrid discretize(const Volume& v, const BinaryMask& m, const DiscretizationConfig& cfg) {
    cfg.validate();
    if (!v.geom.approx_equal(m.geom))
        throw std::invalid_argument("discretize: volume and mask geometries differ");

    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < v.values.size(); ++i) {
        if (!m.bits[i]) continue;
        if (first) {
            lo = hi = v.values[i];
            first = false;
        } else {
            lo = std::min(lo, v.values[i]);
            hi = std::max(hi, v.values[i]);
        }
    }
    if (first) throw std::invalid_argument("discretize: empty mask");

    DiscretizedGrid out;
    out.labels.assign(v.values.size(), 0);
    if (cfg.mode == DiscretizationMode::FixedBinCount) {
        if (!(hi > lo)) {
            for (std::size_t i = 0; i < v.values.size(); ++i)
                if (m.bits[i]) out.labels[i] = 1;
            out.level_count = 1;
            return out;
        }
        const double width = (hi - lo) / cfg.bins;
        for (std::size_t i = 0; i < v.values.size(); ++i) {
            if (!m.bits[i]) continue;
            const int level = static_cast<int>((v.values[i] - lo) / width) + 1;
            out.labels[i] = std::min(level, cfg.bins);
        }
        out.level_count = cfg.bins;
    } else {
        int max_level = 1;
        for (std::size_t i = 0; i < v.values.size(); ++i) {
            if (!m.bits[i]) continue;
            const int level = static_cast<int>(std::floor((v.values[i] - lo) / cfg.bin_width)) + 1;
            out.labels[i] = level;
            max_level = std::max(max_level, level);
        }
        out.level_count = max_level;
    }
    return out;
}

FeatureVector first_order_features(const Volume& v, const BinaryMask& m) {
    std::vector<double> x = masked_values(v, m);
    const double n = static_cast<double>(x.size());

    double sum = 0.0, energy = 0.0;
    for (double xi : x) {
        sum += xi;
        energy += xi * xi;
    }
    const double mean = sum / n;

    double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
    for (double xi : x) {
        const double d = xi - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mad += std::abs(d);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    const double stddev = std::sqrt(m2);
    const double skewness = stddev > 0.0 ? m3 / (m2 * stddev) : 0.0;
    const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;  // Fisher

    std::sort(x.begin(), x.end());
    const double minimum = x.front(), maximum = x.back();
    const double median = percentile_sorted(x, 0.50);
    const double p10 = percentile_sorted(x, 0.10);
    const double p90 = percentile_sorted(x, 0.90);
    const double iqr = percentile_sorted(x, 0.75) - percentile_sorted(x, 0.25);

    double entropy = 0.0;
    if (maximum > minimum) {
        constexpr int kBins = 64;
        std::array<double, kBins> hist{};
        const double scale = kBins / (maximum - minimum);
        for (double xi : x)
            ++hist[std::min(kBins - 1, static_cast<int>((xi - minimum) * scale))];
        for (double h : hist)
            if (h > 0.0) {
                const double p = h / n;
                entropy -= p * std::log2(p);
            }
    }

    FeatureVector f;
    f.push("firstorder.mean", mean);
    f.push("firstorder.median", median);
    f.push("firstorder.minimum", minimum);
    f.push("firstorder.maximum", maximum);
    f.push("firstorder.range", maximum - minimum);
    f.push("firstorder.variance", m2);
    f.push("firstorder.stddev", stddev);
    f.push("firstorder.skewness", skewness);
    f.push("firstorder.kurtosis", kurtosis);
    f.push("firstorder.energy", energy);
    f.push("firstorder.rms", std::sqrt(energy / n));
    f.push("firstorder.entropy", entropy);
    f.push("firstorder.p10", p10);
    f.push("firstorder.p90", p90);
    f.push("firstorder.iqr", iqr);
    f.push("firstorder.mad", mad);
    return f;
}

namespace {

// inward gradient of the mask indicator at voxel p in world units,
// 26-neighborhood, offsets weighted by 1/|offset|^2
std::array<double, 3> indicator_gradient(const BinaryMask& m, int i, int j, int k) {
    const auto& g = m.geom;
    std::array<double, 3> grad{0.0, 0.0, 0.0};
    for (int dk = -1; dk <= 1; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                if (di == 0 && dj == 0 && dk == 0) continue;
                const int ii = i + di, jj = j + dj, kk = k + dk;
                if (!g.contains(ii, jj, kk)) continue;
                if (!m.bits[g.index(ii, jj, kk)]) continue;
                const double ox = di * g.spacing[0], oy = dj * g.spacing[1],
                             oz = dk * g.spacing[2];
                const double inv = 1.0 / (ox * ox + oy * oy + oz * oz);
                grad[0] += ox * inv;
                grad[1] += oy * inv;
                grad[2] += oz * inv;
            }
    return grad;
}

}  // namespace

FeatureVector shape_features(const BinaryMask& m) {
    const auto& g = m.geom;
    const std::size_t count = m.voxel_count();
    if (count == 0) throw std::invalid_argument("shape_features: empty mask");

    const double voxel_mm3 = g.spacing[0] * g.spacing[1] * g.spacing[2];
    const double volume_mm3 = static_cast<double>(count) * voxel_mm3;

    // normal-weighted exposed-face area and surface voxel collection
    const Offset3 faces[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    const double face_area[3] = {g.spacing[1] * g.spacing[2], g.spacing[0] * g.spacing[2],
                                 g.spacing[0] * g.spacing[1]};
    double area_mm2 = 0.0;
    std::vector<Point3> surface_world;
    for (int k = 0; k < g.dims[2]; ++k) {
        for (int j = 0; j < g.dims[1]; ++j) {
            for (int i = 0; i < g.dims[0]; ++i) {
                if (!m.bits[g.index(i, j, k)]) continue;
                bool boundary = false;
                for (int f = 0; f < 6; ++f) {
                    const int ii = i + faces[f][0], jj = j + faces[f][1], kk = k + faces[f][2];
                    const bool outside = !g.contains(ii, jj, kk) || !m.bits[g.index(ii, jj, kk)];
                    if (!outside) continue;
                    boundary = true;
                    auto grad = indicator_gradient(m, i, j, k);
                    if (g.contains(ii, jj, kk)) {
                        const auto go = indicator_gradient(m, ii, jj, kk);
                        grad[0] += go[0];
                        grad[1] += go[1];
                        grad[2] += go[2];
                    }
                    const double norm =
                        std::sqrt(grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]);
                    const int axis = f / 2;
                    double weight = 1.0;
                    if (norm > 0.0) weight = std::abs(grad[axis]) / norm;
                    area_mm2 += weight * face_area[axis];
                }
                if (boundary)
                    surface_world.push_back(g.voxel_to_world({double(i), double(j), double(k)}));
            }
        }
    }

    // max pairwise distance between surface voxel centers
    double max_diam2 = 0.0;
    for (std::size_t a = 0; a < surface_world.size(); ++a)
        for (std::size_t b = a + 1; b < surface_world.size(); ++b) {
            const double dx = surface_world[a][0] - surface_world[b][0];
            const double dy = surface_world[a][1] - surface_world[b][1];
            const double dz = surface_world[a][2] - surface_world[b][2];
            max_diam2 = std::max(max_diam2, dx * dx + dy * dy + dz * dz);
        }

    // covariance eigenvalues of masked voxel world coordinates
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> coords;
    coords.reserve(count);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i)
                if (m.bits[g.index(i, j, k)]) {
                    const Point3 w = g.voxel_to_world({double(i), double(j), double(k)});
                    coords.emplace_back(w[0], w[1], w[2]);
                    mean += coords.back();
                }
    mean /= static_cast<double>(count);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : coords) {
        const Eigen::Vector3d d = p - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(count);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // ascending from Eigen; flip to descending and clamp FP negatives
    const double l1 = std::max(0.0, eig.eigenvalues()[2]);
    const double l2 = std::max(0.0, eig.eigenvalues()[1]);
    const double l3 = std::max(0.0, eig.eigenvalues()[0]);
    constexpr double kTiny = 1e-12;
    const double elongation = l2 > kTiny ? std::sqrt(l3 / l2) : 1.0;
    const double flatness = l1 > kTiny ? std::sqrt(l3 / l1) : 1.0;

    const double vol_cc = volume_mm3 / 1000.0;
    const double area_cm2 = area_mm2 / 100.0;
    const double sphericity = std::cbrt(M_PI) * std::pow(6.0 * volume_mm3, 2.0 / 3.0) / area_mm2;

    FeatureVector f;
    f.push("shape.volume_cc", vol_cc);
    f.push("shape.surface_area_cm2", area_cm2);
    f.push("shape.surface_to_volume", area_cm2 / vol_cc);
    f.push("shape.sphericity", sphericity);
    f.push("shape.max_diameter_mm", std::sqrt(max_diam2));
    f.push("shape.elongation", elongation);
    f.push("shape.flatness", flatness);
    return f;
}

std::vector<double> glcm_matrix(const Volume& v, const BinaryMask& m,
                                const DiscretizationConfig& cfg, int distance,
                                const std::vector<Offset3>& directions, int& levels_out) {
    if (distance < 1) throw std::invalid_argument("glcm: distance must be >= 1");
    const DiscretizedGrid grid = discretize(v, m, cfg);
    const int L = grid.level_count;
    levels_out = L;
    const auto& g = v.geom;
    std::vector<double> counts(static_cast<std::size_t>(L) * L, 0.0);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const int a = grid.labels[g.index(i, j, k)];
                if (a == 0) continue;
                for (const auto& d : directions) {
                    const int ii = i + d[0] * distance, jj = j + d[1] * distance,
                              kk = k + d[2] * distance;
                    if (!g.contains(ii, jj, kk)) continue;
                    const int b = grid.labels[g.index(ii, jj, kk)];
                    if (b == 0) continue;
                    counts[static_cast<std::size_t>(a - 1) * L + (b - 1)] += 1.0;
                    counts[static_cast<std::size_t>(b - 1) * L + (a - 1)] += 1.0;
                }
            }
    double total = 0.0;
    for (double c : counts) total += c;
    if (total > 0.0)
        for (double& c : counts) c /= total;
    return counts;
}

FeatureVector glcm_features(const Volume& v, const BinaryMask& m, const DiscretizationConfig& cfg,
                            int distance) {
    int L = 0;
    const std::vector<double> p = glcm_matrix(v, m, cfg, distance, texture_directions(), L);
    double total = 0.0;
    for (double x : p) total += x;

    double contrast = 0.0, dissimilarity = 0.0, energy = 0.0, entropy = 0.0, homogeneity = 0.0;
    double mu = 0.0;
    if (total > 0.0) {
        for (int a = 0; a < L; ++a)
            for (int b = 0; b < L; ++b) {
                const double pab = p[static_cast<std::size_t>(a) * L + b];
                if (pab <= 0.0) continue;
                const double diff = a - b;
                contrast += pab * diff * diff;
                dissimilarity += pab * std::abs(diff);
                energy += pab * pab;
                entropy -= pab * std::log2(pab);
                homogeneity += pab / (1.0 + diff * diff);
                mu += pab * (a + 1);  // marginal mean; matrix is symmetric
            }
    }
    double correlation = 0.0;
    if (total > 0.0) {
        double var = 0.0, cross = 0.0;
        for (int a = 0; a < L; ++a)
            for (int b = 0; b < L; ++b) {
                const double pab = p[static_cast<std::size_t>(a) * L + b];
                if (pab <= 0.0) continue;
                var += pab * (a + 1 - mu) * (a + 1 - mu);
                cross += pab * (a + 1 - mu) * (b + 1 - mu);
            }
        if (var > 1e-12) correlation = cross / var;  // sigma_x == sigma_y by symmetry
    }

    FeatureVector f;
    f.push("glcm.contrast", contrast);
    f.push("glcm.dissimilarity", dissimilarity);
    f.push("glcm.energy", energy);
    f.push("glcm.entropy", entropy);
    f.push("glcm.homogeneity", homogeneity);
    f.push("glcm.correlation", correlation);
    return f;
}

std::vector<double> glrlm_matrix(const Volume& v, const BinaryMask& m,
                                 const DiscretizationConfig& cfg,
                                 const std::vector<Offset3>& directions, int& levels_out,
                                 int& max_len_out) {
    const DiscretizedGrid grid = discretize(v, m, cfg);
    const int L = grid.level_count;
    const auto& g = v.geom;
    const int max_len = g.dims[0] + g.dims[1] + g.dims[2];  // safe upper bound
    std::vector<double> runs(static_cast<std::size_t>(L) * max_len, 0.0);

    for (const auto& d : directions) {
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    // only start scanning at the first voxel of each grid line
                    if (g.contains(i - d[0], j - d[1], k - d[2])) continue;
                    int run_level = 0, run_len = 0;
                    int ci = i, cj = j, ck = k;
                    while (g.contains(ci, cj, ck)) {
                        const int label = grid.labels[g.index(ci, cj, ck)];
                        if (label == run_level && label != 0) {
                            ++run_len;
                        } else {
                            if (run_level != 0)
                                runs[static_cast<std::size_t>(run_level - 1) * max_len +
                                     (run_len - 1)] += 1.0;
                            run_level = label;
                            run_len = label != 0 ? 1 : 0;
                        }
                        ci += d[0];
                        cj += d[1];
                        ck += d[2];
                    }
                    if (run_level != 0)
                        runs[static_cast<std::size_t>(run_level - 1) * max_len + (run_len - 1)] +=
                            1.0;
                }
    }
    levels_out = L;
    max_len_out = max_len;
    return runs;
}

FeatureVector glrlm_features(const Volume& v, const BinaryMask& m,
                             const DiscretizationConfig& cfg) {
    int L = 0, max_len = 0;
    const std::vector<double> r = glrlm_matrix(v, m, cfg, texture_directions(), L, max_len);
    const double nv = static_cast<double>(m.voxel_count());
    const double nd = static_cast<double>(texture_directions().size());

    double nr = 0.0, sre = 0.0, lre = 0.0, gln = 0.0, rln = 0.0;
    for (int a = 0; a < L; ++a) {
        double row = 0.0;
        for (int l = 0; l < max_len; ++l) {
            const double c = r[static_cast<std::size_t>(a) * max_len + l];
            if (c <= 0.0) continue;
            const double len = l + 1;
            nr += c;
            row += c;
            sre += c / (len * len);
            lre += c * len * len;
        }
        gln += row * row;
    }
    for (int l = 0; l < max_len; ++l) {
        double col = 0.0;
        for (int a = 0; a < L; ++a) col += r[static_cast<std::size_t>(a) * max_len + l];
        rln += col * col;
    }

    FeatureVector f;
    f.push("glrlm.sre", nr > 0 ? sre / nr : 0.0);
    f.push("glrlm.lre", nr > 0 ? lre / nr : 0.0);
    f.push("glrlm.gln", nr > 0 ? gln / nr : 0.0);
    f.push("glrlm.rln", nr > 0 ? rln / nr : 0.0);
    f.push("glrlm.run_percentage", nr / (nv * nd));
    return f;
}

FeatureVector extract_features(const Volume& v, const BinaryMask& m,
                               const DiscretizationConfig& cfg, int glcm_distance) {
    FeatureVector out = first_order_features(v, m);
    for (const FeatureVector& part :
         {shape_features(m), glcm_features(v, m, cfg, glcm_distance), glrlm_features(v, m, cfg)}) {
        for (std::size_t i = 0; i < part.size(); ++i) out.push(part.names[i], part.values[i]);
    }
    return out;
}

std::vector<std::string> feature_schema() {
    return {
        "firstorder.mean",     "firstorder.median",   "firstorder.minimum",
        "firstorder.maximum",  "firstorder.range",    "firstorder.variance",
        "firstorder.stddev",   "firstorder.skewness", "firstorder.kurtosis",
        "firstorder.energy",   "firstorder.rms",      "firstorder.entropy",
        "firstorder.p10",      "firstorder.p90",      "firstorder.iqr",
        "firstorder.mad",      "shape.volume_cc",     "shape.surface_area_cm2",
        "shape.surface_to_volume", "shape.sphericity", "shape.max_diameter_mm",
        "shape.elongation",    "shape.flatness",      "glcm.contrast",
        "glcm.dissimilarity",  "glcm.energy",         "glcm.entropy",
        "glcm.homogeneity",    "glcm.correlation",    "glrlm.sre",
        "glrlm.lre",           "glrlm.gln",           "glrlm.rln",
        "glrlm.run_percentage",
    };
}

FeatureVector delta_features(const FeatureVector& a, const FeatureVector& b) {
    if (a.names != b.names)
        throw std::invalid_argument("delta_features: feature name lists differ");
    FeatureVector out;
    for (std::size_t i = 0; i < a.size(); ++i)
        out.push("delta." + a.names[i], std::abs(a.values[i] - b.values[i]));
    return out;
}

}  // namespace deltarad
