#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "deltarad/dosimetry.hpp"
#include "deltarad/rng.hpp"
#include "phantoms.hpp"

using namespace deltarad;

namespace {

Volume make_dose(int nx, int ny, int nz, const std::vector<double>& vals) {
    Geometry g;
    g.dims = {nx, ny, nz};
    return Volume(g, vals, Unit::Gy);
}

BinaryMask random_mask(const Geometry& g, Rng& rng, double p = 0.4) {
    std::vector<std::uint8_t> bits(g.voxel_count());
    for (auto& b : bits) b = rng.uniform01() < p ? 1 : 0;
    return BinaryMask(g, std::move(bits));
}

LesionRecord demo_record(double rx = 20.0) {
    LesionRecord r;
    r.lesion_id = "L1";
    r.patient_id = "P1";
    r.roi_name = "GTV_1";
    r.machine = Machine::GammaKnife;
    r.target_kind = TargetKind::GTV;
    r.prescription_gy = rx;
    return r;
}

}  // namespace

TEST_CASE("target kind follows the machine") {
    CHECK(select_target_kind(Machine::GammaKnife) == TargetKind::GTV);
    CHECK(select_target_kind(Machine::LINAC) == TargetKind::PTV);
    CHECK_THROWS_WITH_AS(parse_machine("Cyberknife"), doctest::Contains("unknown machine"),
                         std::invalid_argument);
}

TEST_CASE("mean dose: simple cases and the brute-force oracle") {
    const Volume d = make_dose(4, 1, 1, {10, 20, 30, 40});
    BinaryMask m = BinaryMask::empty_like(d.geom);
    m.bits[0] = m.bits[1] = 1;
    CHECK(mean_dose(d, m) == doctest::Approx(15.0));

    const Volume c = make_dose(3, 3, 3, std::vector<double>(27, 24.0));
    BinaryMask any = BinaryMask::empty_like(c.geom);
    any.bits[5] = any.bits[11] = any.bits[20] = 1;
    CHECK(mean_dose(c, any) == doctest::Approx(24.0));

    Rng rng(8);
    Geometry g;
    g.dims = {6, 6, 6};
    std::vector<double> vals(g.voxel_count());
    for (double& x : vals) x = rng.uniform(0.0, 60.0);
    const Volume dose(g, vals, Unit::Gy);
    const BinaryMask rm = random_mask(g, rng);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (rm.bits[i]) {
            sum += vals[i];
            ++n;
        }
    REQUIRE(n > 0);
    CHECK(mean_dose(dose, rm) == sum / double(n));

    CHECK_THROWS(mean_dose(dose, BinaryMask::empty_like(g)));
    Geometry g2 = g;
    g2.spacing = {2, 2, 2};
    CHECK_THROWS(mean_dose(dose, BinaryMask::empty_like(g2)));
}

TEST_CASE("isodose masks threshold and nest") {
    const Volume d = make_dose(4, 1, 1, {10, 20, 30, 40});
    CHECK(isodose_mask(d, 100.0).voxel_count() == 0);
    CHECK(isodose_mask(d, 25.0).voxel_count() == 2);
    CHECK_THROWS(isodose_mask(d, 0.0));

    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        Geometry g;
        g.dims = {5, 4, 3};
        std::vector<double> vals(g.voxel_count());
        for (double& x : vals) x = rng.uniform(0.0, 50.0);
        const Volume dose(g, vals, Unit::Gy);
        const BinaryMask hi = isodose_mask(dose, 30.0);
        const BinaryMask lo = isodose_mask(dose, 20.0);
        for (std::size_t i = 0; i < hi.bits.size(); ++i)
            if (hi.bits[i]) CHECK(lo.bits[i]);
    }
}

TEST_CASE("coverage fraction") {
    const Volume d = make_dose(4, 1, 1, {22, 25, 19, 30});
    BinaryMask all(d.geom, {1, 1, 1, 1});
    CHECK(coverage_fraction(d, all, 19.0) == doctest::Approx(1.0));
    CHECK(coverage_fraction(d, all, 31.0) == doctest::Approx(0.0));
    CHECK(coverage_fraction(d, all, 20.0) == doctest::Approx(0.75));
    CHECK_THROWS(coverage_fraction(d, BinaryMask::empty_like(d.geom), 20.0));
}

TEST_CASE("mask volume in cc") {
    Geometry g;
    g.dims = {10, 10, 10};
    BinaryMask m(g, std::vector<std::uint8_t>(1000, 1));
    CHECK(volume_cc(m) == doctest::Approx(1.0));
    CHECK(volume_cc(BinaryMask::empty_like(g)) == 0.0);

    Geometry ga;
    ga.dims = {2, 2, 2};
    ga.spacing = {2.0, 2.0, 2.5};
    BinaryMask m8(ga, std::vector<std::uint8_t>(8, 1));
    CHECK(volume_cc(m8) == doctest::Approx(0.08));
}

TEST_CASE("volume is additive over disjoint masks") {
    Rng rng(3);
    Geometry g;
    g.dims = {8, 8, 8};
    g.spacing = {1.1, 0.9, 1.7};
    BinaryMask a = BinaryMask::empty_like(g), b = BinaryMask::empty_like(g),
               u = BinaryMask::empty_like(g);
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const double r = rng.uniform01();
        if (r < 0.3) a.bits[i] = 1;
        else if (r < 0.6) b.bits[i] = 1;
        u.bits[i] = a.bits[i] | b.bits[i];
    }
    CHECK(volume_cc(u) == doctest::Approx(volume_cc(a) + volume_cc(b)).epsilon(1e-12));
}

TEST_CASE("squared distance transform matches brute force") {
    Rng rng(19);
    for (int t = 0; t < 10; ++t) {
        Geometry g;
        g.dims = {6, 5, 4};
        g.spacing = {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        BinaryMask m = random_mask(g, rng, 0.15);
        if (m.voxel_count() == 0) m.bits[7] = 1;
        const std::vector<double> d2 = squared_distance_mm(m);

        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    double best = std::numeric_limits<double>::infinity();
                    for (int kk = 0; kk < g.dims[2]; ++kk)
                        for (int jj = 0; jj < g.dims[1]; ++jj)
                            for (int ii = 0; ii < g.dims[0]; ++ii) {
                                if (!m.at(ii, jj, kk)) continue;
                                const double dx = (i - ii) * g.spacing[0];
                                const double dy = (j - jj) * g.spacing[1];
                                const double dz = (k - kk) * g.spacing[2];
                                best = std::min(best, dx * dx + dy * dy + dz * dz);
                            }
                    CHECK(d2[g.index(i, j, k)] == doctest::Approx(best).epsilon(1e-9));
                }
    }
}

TEST_CASE("incidence region of a single voxel is its 7-voxel plus neighborhood") {
    Geometry g;
    g.dims = {7, 7, 7};
    BinaryMask m = BinaryMask::empty_like(g);
    m.set(3, 3, 3, true);
    const BinaryMask region = incidence_region(m, 1.5);
    CHECK(region.voxel_count() == 7);
    CHECK(region.at(3, 3, 3));
    CHECK(region.at(2, 3, 3));
    CHECK(region.at(4, 3, 3));
    CHECK(region.at(3, 2, 3));
    CHECK(region.at(3, 4, 3));
    CHECK(region.at(3, 3, 2));
    CHECK(region.at(3, 3, 4));
}

TEST_CASE("incidence region of a r=10 sphere approximates the r=15 ball") {
    const BinaryMask sphere = deltarad::testing::make_sphere_mask(40, 10.0);
    const BinaryMask region = incidence_region(sphere, 1.5);
    const double expected = 4.0 / 3.0 * M_PI * 15.0 * 15.0 * 15.0;
    CHECK(std::abs(double(region.voxel_count()) - expected) / expected <= 0.05);
    for (std::size_t i = 0; i < sphere.bits.size(); ++i)
        if (sphere.bits[i]) CHECK(region.bits[i]);
}

TEST_CASE("incidence region is monotone in the factor") {
    const BinaryMask sphere = deltarad::testing::make_sphere_mask(32, 8.0);
    const BinaryMask r1 = incidence_region(sphere, 1.3);
    const BinaryMask r2 = incidence_region(sphere, 1.6);
    for (std::size_t i = 0; i < r1.bits.size(); ++i)
        if (r1.bits[i]) CHECK(r2.bits[i]);
    CHECK_THROWS(incidence_region(BinaryMask::empty_like(sphere.geom), 1.5));
    CHECK_THROWS(incidence_region(sphere, 1.0));
}

TEST_CASE("lesion summary fields") {
    Geometry g;
    g.dims = {4, 4, 4};
    BinaryMask m = BinaryMask::empty_like(g);
    for (int i = 0; i < 8; ++i) m.bits[i] = 1;

    const Volume flat(g, std::vector<double>(64, 20.0), Unit::Gy);
    const LesionDoseSummary s1 = summarize_lesion(flat, m, demo_record(20.0));
    CHECK(s1.coverage == doctest::Approx(1.0));
    CHECK(s1.discrepancy == doctest::Approx(0.0));

    std::vector<double> vals(64, 22.0);
    const LesionDoseSummary s2 =
        summarize_lesion(Volume(g, vals, Unit::Gy), m, demo_record(20.0));
    CHECK(s2.mean_dose_gy == doctest::Approx(22.0));
    CHECK(s2.discrepancy == doctest::Approx(0.10));

    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> rv(64);
        for (double& x : rv) x = rng.uniform(5.0, 45.0);
        const BinaryMask rm = random_mask(g, rng, 0.5);
        if (rm.voxel_count() == 0) continue;
        const LesionDoseSummary s = summarize_lesion(Volume(g, rv, Unit::Gy), rm, demo_record());
        CHECK(s.min_dose_gy <= s.mean_dose_gy);
        CHECK(s.mean_dose_gy <= s.max_dose_gy);
        CHECK(s.coverage >= 0.0);
        CHECK(s.coverage <= 1.0);
        CHECK((s.coverage == 1.0) == (s.min_dose_gy >= 20.0));
        CHECK(s.volume_cc > 0.0);
    }
}

TEST_CASE("lesion table round trip and validation") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "deltarad_dosimetry";
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "lesions.csv");
        os << "patient_id,lesion_id,roi_name,target_kind,machine,prescription_gy,mask_path,dose_path\n";
        os << "P1,L1,GTV_1,GTV,GammaKnife,24,masks/l1.nii.gz,dose/p1.nii.gz\n";
        os << "P2,L2,PTV_1,PTV,LINAC,20,masks/l2.nii.gz,dose/p2.nii.gz\n";
    }
    const auto lesions = load_lesions((dir / "lesions.csv").string());
    REQUIRE(lesions.size() == 2);
    CHECK(lesions[0].target_kind == TargetKind::GTV);
    CHECK(lesions[1].machine == Machine::LINAC);
    CHECK(lesions[0].mask_path == (dir / "masks/l1.nii.gz").string());

    {
        std::ofstream os(dir / "bad.csv");
        os << "patient_id,lesion_id,roi_name,target_kind,machine,prescription_gy,mask_path,dose_path\n";
        os << "P1,L1,GTV_1,PTV,GammaKnife,24,a,b\n";  // PTV under Gamma Knife
    }
    CHECK_THROWS(load_lesions((dir / "bad.csv").string()));

    LesionDoseSummary s;
    s.lesion_id = "L1";
    s.volume_cc = 1.234567;
    s.mean_dose_gy = 20.0;
    write_lesion_summaries({s}, (dir / "summary.csv").string(), "config_hash=dead seed=1");
    std::ifstream in(dir / "summary.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.find("config_hash") != std::string::npos);
    std::getline(in, line);
    CHECK(line == "lesion_id,volume_cc,mean_dose_gy,max_dose_gy,min_dose_gy,coverage,discrepancy");
    std::getline(in, line);
    CHECK(line.substr(0, 12) == "L1,1.234567,");
}
