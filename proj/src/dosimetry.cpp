#include "deltarad/dosimetry.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "deltarad/csvio.hpp"

namespace deltarad {

Machine parse_machine(const std::string& s) {
    if (s == "LINAC") return Machine::LINAC;
    if (s == "GammaKnife") return Machine::GammaKnife;
    throw std::invalid_argument("unknown machine: \"" + s + "\" (expected LINAC or GammaKnife)");
}

std::string machine_name(Machine m) { return m == Machine::LINAC ? "LINAC" : "GammaKnife"; }

std::string target_kind_name(TargetKind t) { return t == TargetKind::GTV ? "GTV" : "PTV"; }

void LesionRecord::validate() const {
    if (!(prescription_gy > 0.0))
        throw std::invalid_argument("lesion " + lesion_id + ": prescription dose must be > 0");
    if (target_kind != select_target_kind(machine))
        throw std::invalid_argument("lesion " + lesion_id + ": target kind " +
                                    target_kind_name(target_kind) + " does not match machine " +
                                    machine_name(machine));
}

TargetKind select_target_kind(Machine m) {
    return m == Machine::GammaKnife ? TargetKind::GTV : TargetKind::PTV;
}

double mean_dose(const Volume& dose, const BinaryMask& m) {
    if (!dose.geom.approx_equal(m.geom))
        throw std::invalid_argument("mean_dose: dose and mask geometries differ");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < dose.values.size(); ++i) {
        if (m.bits[i]) {
            sum += dose.values[i];
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("mean_dose: empty mask");
    return sum / static_cast<double>(n);
}

BinaryMask isodose_mask(const Volume& dose, double threshold_gy) {
    if (!(threshold_gy > 0.0)) throw std::invalid_argument("isodose_mask: threshold must be > 0");
    std::vector<std::uint8_t> bits(dose.values.size());
    for (std::size_t i = 0; i < dose.values.size(); ++i)
        bits[i] = dose.values[i] >= threshold_gy ? 1 : 0;
    return BinaryMask(dose.geom, std::move(bits));
}

double coverage_fraction(const Volume& dose, const BinaryMask& m, double rx_gy) {
    if (!dose.geom.approx_equal(m.geom))
        throw std::invalid_argument("coverage_fraction: geometries differ");
    std::size_t n = 0, hit = 0;
    for (std::size_t i = 0; i < dose.values.size(); ++i) {
        if (m.bits[i]) {
            ++n;
            if (dose.values[i] >= rx_gy) ++hit;
        }
    }
    if (n == 0) throw std::invalid_argument("coverage_fraction: empty mask");
    return static_cast<double>(hit) / static_cast<double>(n);
}

double volume_cc(const BinaryMask& m) {
    const double voxel_mm3 = m.geom.spacing[0] * m.geom.spacing[1] * m.geom.spacing[2];
    return static_cast<double>(m.voxel_count()) * voxel_mm3 / 1000.0;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher 1-D squared-distance transform with a physical
// step size; exact for any spacing. Infinite parabolas (rows with no seed
// so far) are handled by substituting a huge finite height.
void edt_1d(std::vector<double>& f, double step) {
    const int n = static_cast<int>(f.size());
    if (n == 1) return;
    constexpr double kBig = 1e30;
    for (auto& x : f)
        if (x == kInf) x = kBig;

    static thread_local std::vector<int> v;
    static thread_local std::vector<double> z, d;
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    d.assign(n, 0.0);
    int k = 0;
    z[0] = -kInf;
    z[1] = kInf;
    auto sq = [](double x) { return x * x; };
    for (int q = 1; q < n; ++q) {
        double s = (f[q] + sq(q * step) - f[v[k]] - sq(v[k] * step)) / (2.0 * step * (q - v[k]));
        while (s <= z[k]) {
            --k;
            s = (f[q] + sq(q * step) - f[v[k]] - sq(v[k] * step)) / (2.0 * step * (q - v[k]));
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        const double x = q * step;
        while (z[k + 1] < x) ++k;
        d[q] = sq(x - v[k] * step) + f[v[k]];
    }
    for (int q = 0; q < n; ++q) f[q] = d[q] >= kBig ? kInf : d[q];
}

}  // namespace

std::vector<double> squared_distance_mm(const BinaryMask& m) {
    const auto& g = m.geom;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    std::vector<double> dist(m.bits.size());
    for (std::size_t i = 0; i < m.bits.size(); ++i) dist[i] = m.bits[i] ? 0.0 : kInf;

    std::vector<double> line;
    line.resize(nx);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) line[i] = dist[g.index(i, j, k)];
            edt_1d(line, g.spacing[0]);
            for (int i = 0; i < nx; ++i) dist[g.index(i, j, k)] = line[i];
        }
    line.assign(ny, 0.0);
    for (int k = 0; k < nz; ++k)
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < ny; ++j) line[j] = dist[g.index(i, j, k)];
            edt_1d(line, g.spacing[1]);
            for (int j = 0; j < ny; ++j) dist[g.index(i, j, k)] = line[j];
        }
    line.assign(nz, 0.0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            for (int k = 0; k < nz; ++k) line[k] = dist[g.index(i, j, k)];
            edt_1d(line, g.spacing[2]);
            for (int k = 0; k < nz; ++k) dist[g.index(i, j, k)] = line[k];
        }
    return dist;
}

BinaryMask incidence_region(const BinaryMask& m, double factor) {
    if (!(factor > 1.0)) throw std::invalid_argument("incidence_region: factor must be > 1");
    const double v_mm3 = volume_cc(m) * 1000.0;
    if (!(v_mm3 > 0.0)) throw std::invalid_argument("incidence_region: empty mask");
    const double r_eq = std::cbrt(3.0 * v_mm3 / (4.0 * M_PI));
    double margin = (factor - 1.0) * r_eq;
    const double max_spacing = std::max({m.geom.spacing[0], m.geom.spacing[1], m.geom.spacing[2]});
    if (margin < max_spacing) margin = max_spacing;  // one-voxel floor

    const std::vector<double> d2 = squared_distance_mm(m);
    std::vector<std::uint8_t> bits(m.bits.size());
    const double margin2 = margin * margin;
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = (m.bits[i] || d2[i] <= margin2) ? 1 : 0;
    return BinaryMask(m.geom, std::move(bits));
}

LesionDoseSummary summarize_lesion(const Volume& dose, const BinaryMask& m,
                                   const LesionRecord& rec) {
    rec.validate();
    LesionDoseSummary s;
    s.lesion_id = rec.lesion_id;
    s.volume_cc = volume_cc(m);
    s.mean_dose_gy = mean_dose(dose, m);
    double lo = kInf, hi = -kInf;
    for (std::size_t i = 0; i < dose.values.size(); ++i) {
        if (m.bits[i]) {
            lo = std::min(lo, dose.values[i]);
            hi = std::max(hi, dose.values[i]);
        }
    }
    s.min_dose_gy = lo;
    s.max_dose_gy = hi;
    s.coverage = coverage_fraction(dose, m, rec.prescription_gy);
    s.discrepancy = (s.mean_dose_gy - rec.prescription_gy) / rec.prescription_gy;
    return s;
}

std::vector<LesionRecord> load_lesions(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    const int c_pid = t.require_column("patient_id");
    const int c_lid = t.require_column("lesion_id");
    const int c_roi = t.require_column("roi_name");
    const int c_kind = t.require_column("target_kind");
    const int c_machine = t.require_column("machine");
    const int c_rx = t.require_column("prescription_gy");
    const int c_mask = t.require_column("mask_path");
    const int c_dose = t.require_column("dose_path");

    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    std::vector<LesionRecord> out;
    for (const auto& row : t.rows) {
        LesionRecord r;
        r.patient_id = row[c_pid];
        r.lesion_id = row[c_lid];
        r.roi_name = row[c_roi];
        r.machine = parse_machine(row[c_machine]);
        const std::string& kind = row[c_kind];
        if (kind == "GTV") r.target_kind = TargetKind::GTV;
        else if (kind == "PTV") r.target_kind = TargetKind::PTV;
        else throw std::runtime_error("lesion " + r.lesion_id + ": unknown target kind " + kind);
        r.prescription_gy = std::stod(row[c_rx]);
        r.mask_path = resolve(row[c_mask]);
        r.dose_path = resolve(row[c_dose]);
        r.validate();
        out.push_back(std::move(r));
    }
    return out;
}

void write_lesion_summaries(const std::vector<LesionDoseSummary>& summaries,
                            const std::string& path, const std::string& preamble) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write summary CSV: " + path);
    if (!preamble.empty()) os << "# " << preamble << "\n";
    os << "lesion_id,volume_cc,mean_dose_gy,max_dose_gy,min_dose_gy,coverage,discrepancy\n";
    char buf[256];
    for (const auto& s : summaries) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                      csv::quote(s.lesion_id).c_str(), s.volume_cc, s.mean_dose_gy, s.max_dose_gy,
                      s.min_dose_gy, s.coverage, s.discrepancy);
        os << buf << "\n";
    }
}

}  // namespace deltarad
