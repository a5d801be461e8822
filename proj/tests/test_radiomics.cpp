#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "deltarad/radiomics.hpp"
#include "deltarad/rng.hpp"
#include "oracles.hpp"
#include "phantoms.hpp"

using namespace deltarad;

namespace {

Volume make_volume(int nx, int ny, int nz, const std::vector<double>& vals) {
    Geometry g;
    g.dims = {nx, ny, nz};
    return Volume(g, vals);
}

BinaryMask full_mask(const Geometry& g) {
    return BinaryMask(g, std::vector<std::uint8_t>(g.voxel_count(), 1));
}

DiscretizationConfig bins_cfg(int bins) {
    DiscretizationConfig cfg;
    cfg.mode = DiscretizationMode::FixedBinCount;
    cfg.bins = bins;
    return cfg;
}

}  // namespace

TEST_CASE("discretize: uniform spread, constant region, width mode, oracle") {
    const Volume v = make_volume(4, 1, 1, {0, 1, 2, 3});
    const BinaryMask m = full_mask(v.geom);
    const DiscretizedGrid d = discretize(v, m, bins_cfg(4));
    CHECK(d.level_count == 4);
    CHECK(d.labels == std::vector<int>{1, 2, 3, 4});

    const Volume c = make_volume(3, 1, 1, {5, 5, 5});
    const DiscretizedGrid dc = discretize(c, full_mask(c.geom), bins_cfg(8));
    CHECK(dc.level_count == 1);
    CHECK(dc.labels == std::vector<int>{1, 1, 1});

    DiscretizationConfig wcfg;
    wcfg.mode = DiscretizationMode::FixedBinWidth;
    wcfg.bin_width = 1.5;
    const DiscretizedGrid dw = discretize(v, m, wcfg);
    CHECK(dw.labels == std::vector<int>{1, 1, 2, 3});  // floor((x-0)/1.5)+1
    CHECK(dw.level_count == 3);

    Rng rng(2);
    std::vector<double> vals(5 * 4 * 3);
    for (double& x : vals) x = rng.uniform(-10.0, 10.0);
    const Volume rv = make_volume(5, 4, 3, vals);
    const BinaryMask rm = full_mask(rv.geom);
    const DiscretizedGrid dr = discretize(rv, rm, bins_cfg(8));
    CHECK(dr.labels == oracle::discretize_ref(rv, rm, 8));

    CHECK_THROWS(discretize(v, BinaryMask::empty_like(v.geom), bins_cfg(4)));
    CHECK_THROWS(discretize(v, m, bins_cfg(1)));
}

TEST_CASE("first-order features: hand values and degenerate conventions") {
    const Volume v = make_volume(4, 1, 1, {1, 2, 3, 4});
    const FeatureVector f = first_order_features(v, full_mask(v.geom));
    CHECK(f.value("firstorder.mean") == doctest::Approx(2.5));
    CHECK(f.value("firstorder.variance") == doctest::Approx(1.25));
    CHECK(f.value("firstorder.range") == doctest::Approx(3.0));
    CHECK(f.value("firstorder.median") == doctest::Approx(2.5));
    CHECK(f.value("firstorder.energy") == doctest::Approx(30.0));

    const Volume c = make_volume(3, 3, 1, std::vector<double>(9, 7.0));
    const FeatureVector fc = first_order_features(c, full_mask(c.geom));
    CHECK(fc.value("firstorder.variance") == 0.0);
    CHECK(fc.value("firstorder.entropy") == 0.0);
    CHECK(fc.value("firstorder.skewness") == 0.0);
    CHECK(fc.value("firstorder.kurtosis") == 0.0);
}

TEST_CASE("first-order features match the brute-force oracle on 1000 random values") {
    Rng rng(41);
    std::vector<double> vals(1000);
    for (double& x : vals) x = rng.uniform(-50.0, 150.0);
    const Volume v = make_volume(10, 10, 10, vals);
    const FeatureVector f = first_order_features(v, full_mask(v.geom));
    const oracle::FirstOrderRef r = oracle::first_order_ref(vals);

    CHECK(oracle::rel_close(f.value("firstorder.mean"), r.mean));
    CHECK(oracle::rel_close(f.value("firstorder.median"), r.median));
    CHECK(oracle::rel_close(f.value("firstorder.minimum"), r.minimum));
    CHECK(oracle::rel_close(f.value("firstorder.maximum"), r.maximum));
    CHECK(oracle::rel_close(f.value("firstorder.range"), r.range));
    CHECK(oracle::rel_close(f.value("firstorder.variance"), r.variance));
    CHECK(oracle::rel_close(f.value("firstorder.stddev"), r.stddev));
    CHECK(oracle::rel_close(f.value("firstorder.skewness"), r.skewness));
    CHECK(oracle::rel_close(f.value("firstorder.kurtosis"), r.kurtosis));
    CHECK(oracle::rel_close(f.value("firstorder.energy"), r.energy));
    CHECK(oracle::rel_close(f.value("firstorder.rms"), r.rms));
    CHECK(oracle::rel_close(f.value("firstorder.entropy"), r.entropy));
    CHECK(oracle::rel_close(f.value("firstorder.p10"), r.p10));
    CHECK(oracle::rel_close(f.value("firstorder.p90"), r.p90));
    CHECK(oracle::rel_close(f.value("firstorder.iqr"), r.iqr));
    CHECK(oracle::rel_close(f.value("firstorder.mad"), r.mad));
}

TEST_CASE("first-order features are invariant under voxel permutation") {
    Rng rng(43);
    std::vector<double> vals(60);
    for (double& x : vals) x = rng.uniform(0.0, 9.0);
    const FeatureVector a =
        first_order_features(make_volume(60, 1, 1, vals), full_mask(Geometry{{60, 1, 1}}));
    rng.shuffle(vals);
    const FeatureVector b =
        first_order_features(make_volume(60, 1, 1, vals), full_mask(Geometry{{60, 1, 1}}));
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
}

TEST_CASE("shape: single voxel unit cube") {
    Geometry g;
    g.dims = {3, 3, 3};
    BinaryMask m = BinaryMask::empty_like(g);
    m.set(1, 1, 1, true);
    const FeatureVector f = shape_features(m);
    CHECK(f.value("shape.volume_cc") == doctest::Approx(0.001));
    CHECK(f.value("shape.surface_area_cm2") == doctest::Approx(0.06));
    CHECK(f.value("shape.max_diameter_mm") == 0.0);
    CHECK(f.value("shape.elongation") == 1.0);
    CHECK(f.value("shape.flatness") == 1.0);
}

TEST_CASE("shape: digital sphere r=25 has near-unit sphericity and the right volume") {
    const BinaryMask sphere = deltarad::testing::make_sphere_mask(54, 25.0);
    const FeatureVector f = shape_features(sphere);
    CHECK(f.value("shape.sphericity") >= 0.95);
    CHECK(f.value("shape.sphericity") <= 1.02);
    const double expected_cc = 4.0 / 3.0 * M_PI * 25.0 * 25.0 * 25.0 / 1000.0;
    CHECK(std::abs(f.value("shape.volume_cc") - expected_cc) / expected_cc <= 0.02);
    CHECK(f.value("shape.max_diameter_mm") == doctest::Approx(50.0).epsilon(0.05));
    CHECK(f.value("shape.elongation") == doctest::Approx(1.0).epsilon(0.02));
    CHECK(f.value("shape.flatness") == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("shape: 1x1x10 rod is maximally anisotropic with verified eigenvalues") {
    Geometry g;
    g.dims = {1, 1, 10};
    const BinaryMask rod = full_mask(g);
    const FeatureVector f = shape_features(rod);
    CHECK(f.value("shape.elongation") == 1.0);  // both minor axes are degenerate
    CHECK(f.value("shape.flatness") <= 0.05);

    // covariance oracle: coordinates (0,0,k), k=0..9 -> eigenvalues {8.25, 0, 0}
    double zsum = 0.0;
    for (int k = 0; k < 10; ++k) zsum += k;
    const double zmean = zsum / 10.0;
    double zvar = 0.0;
    for (int k = 0; k < 10; ++k) zvar += (k - zmean) * (k - zmean);
    zvar /= 10.0;
    CHECK(zvar == doctest::Approx(8.25));
    CHECK(f.value("shape.flatness") == doctest::Approx(std::sqrt(0.0 / zvar)));
    CHECK(f.value("shape.max_diameter_mm") == doctest::Approx(9.0));
}

TEST_CASE("shape features ignore intensity entirely") {
    Rng rng(5);
    const BinaryMask sphere = deltarad::testing::make_sphere_mask(16, 5.0);
    const FeatureVector f = shape_features(sphere);
    CHECK(f.size() == 7);
    CHECK_THROWS(shape_features(BinaryMask::empty_like(sphere.geom)));
    (void)rng;
}

TEST_CASE("glcm: hand-enumerated 2x2x1 example gives contrast 0.5 exactly") {
    const Volume v = make_volume(2, 2, 1, {1, 1, 1, 2});
    const BinaryMask m = full_mask(v.geom);
    // intensities {1,1,1,2} under 2 bins discretize to levels {1,1,1,2}
    int L = 0;
    const std::vector<Offset3> xdir = {{1, 0, 0}};
    const std::vector<double> p = glcm_matrix(v, m, bins_cfg(2), 1, xdir, L);
    REQUIRE(L == 2);
    CHECK(p[0] == 0.5);   // p(1,1)
    CHECK(p[1] == 0.25);  // p(1,2)
    CHECK(p[2] == 0.25);  // p(2,1)
    CHECK(p[3] == 0.0);

    double contrast = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) contrast += p[a * 2 + b] * (a - b) * (a - b);
    CHECK(contrast == 0.5);

    // the full 13-direction aggregate lands on the same value for this grid
    const FeatureVector f = glcm_features(v, m, bins_cfg(2), 1);
    CHECK(f.value("glcm.contrast") == 0.5);
}

TEST_CASE("glcm: constant region conventions") {
    const Volume c = make_volume(3, 3, 1, std::vector<double>(9, 4.0));
    const FeatureVector f = glcm_features(c, full_mask(c.geom), bins_cfg(8), 1);
    CHECK(f.value("glcm.contrast") == 0.0);
    CHECK(f.value("glcm.energy") == 1.0);
    CHECK(f.value("glcm.entropy") == 0.0);
    CHECK(f.value("glcm.homogeneity") == 1.0);
    CHECK(f.value("glcm.correlation") == 0.0);

    // isolated voxel: no pairs at all -> all features zero
    Geometry g;
    g.dims = {5, 5, 5};
    BinaryMask lone = BinaryMask::empty_like(g);
    lone.set(2, 2, 2, true);
    const Volume v(g, std::vector<double>(g.voxel_count(), 1.0));
    const FeatureVector fl = glcm_features(v, lone, bins_cfg(8), 1);
    for (double x : fl.values) CHECK(x == 0.0);
}

TEST_CASE("glcm matches the pair-enumeration oracle on random volumes") {
    Rng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        Geometry g;
        g.dims = {6, 6, 6};
        std::vector<double> vals(g.voxel_count());
        for (double& x : vals) x = rng.uniform(0.0, 100.0);
        std::vector<std::uint8_t> bits(g.voxel_count());
        for (auto& b : bits) b = rng.uniform01() < 0.7 ? 1 : 0;
        const Volume v(g, vals);
        const BinaryMask m(g, bits);
        if (m.voxel_count() < 2) continue;

        const FeatureVector f = glcm_features(v, m, bins_cfg(8), 1);
        const oracle::GlcmRef r = oracle::glcm_ref(v, m, 8, 1, texture_directions());
        CHECK(oracle::rel_close(f.value("glcm.contrast"), r.contrast));
        CHECK(oracle::rel_close(f.value("glcm.dissimilarity"), r.dissimilarity));
        CHECK(oracle::rel_close(f.value("glcm.energy"), r.energy));
        CHECK(oracle::rel_close(f.value("glcm.entropy"), r.entropy));
        CHECK(oracle::rel_close(f.value("glcm.homogeneity"), r.homogeneity));
        CHECK(oracle::rel_close(f.value("glcm.correlation"), r.correlation));
        CHECK(f.value("glcm.correlation") >= -1.0 - 1e-12);
        CHECK(f.value("glcm.correlation") <= 1.0 + 1e-12);

        CHECK(f.value("glcm.entropy") >= 0.0);
        CHECK(f.value("glcm.energy") > 0.0);
        CHECK(f.value("glcm.energy") <= 1.0);

        int L = 0;
        const std::vector<double> p = glcm_matrix(v, m, bins_cfg(8), 1, texture_directions(), L);
        double total = 0.0;
        for (double x : p) total += x;
        CHECK(std::abs(total - 1.0) <= 1e-12);
        for (int a = 0; a < L; ++a)
            for (int b = 0; b < L; ++b) CHECK(p[a * L + b] == p[b * L + a]);
    }
}

TEST_CASE("glrlm: constant rod and alternating line hand enumerations") {
    const Volume rod = make_volume(4, 1, 1, {3, 3, 3, 3});
    const BinaryMask m = full_mask(rod.geom);
    int L = 0, max_len = 0;
    const std::vector<Offset3> xdir = {{1, 0, 0}};
    const std::vector<double> runs = glrlm_matrix(rod, m, bins_cfg(4), xdir, L, max_len);
    REQUIRE(L == 1);
    double total_runs = 0.0;
    for (double c : runs) total_runs += c;
    CHECK(total_runs == 1.0);
    CHECK(runs[3] == 1.0);  // one run of length 4
    // run percentage on the single-direction matrix: 1 run / 4 voxels
    CHECK(total_runs / (4.0 * 1.0) == 0.25);

    const Volume alt = make_volume(4, 1, 1, {1, 2, 1, 2});
    const FeatureVector f = glrlm_features(alt, m, bins_cfg(2));
    CHECK(f.value("glrlm.sre") == 1.0);  // every run has length 1
    CHECK(f.value("glrlm.lre") == 1.0);
}

TEST_CASE("glrlm matches the run-enumeration oracle on random grids") {
    Rng rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        Geometry g;
        g.dims = {5, 5, 4};
        std::vector<double> vals(g.voxel_count());
        for (double& x : vals) x = rng.uniform(0.0, 3.0);
        std::vector<std::uint8_t> bits(g.voxel_count());
        for (auto& b : bits) b = rng.uniform01() < 0.75 ? 1 : 0;
        const Volume v(g, vals);
        const BinaryMask m(g, bits);
        if (m.voxel_count() == 0) continue;

        const FeatureVector f = glrlm_features(v, m, bins_cfg(3));
        const oracle::GlrlmRef r = oracle::glrlm_ref(v, m, 3, texture_directions());
        CHECK(oracle::rel_close(f.value("glrlm.sre"), r.sre));
        CHECK(oracle::rel_close(f.value("glrlm.lre"), r.lre));
        CHECK(oracle::rel_close(f.value("glrlm.gln"), r.gln));
        CHECK(oracle::rel_close(f.value("glrlm.rln"), r.rln));
        CHECK(oracle::rel_close(f.value("glrlm.run_percentage"), r.run_percentage));
    }
}

TEST_CASE("extract_features: fixed schema, 34 features, deterministic") {
    Rng rng(31);
    Geometry g;
    g.dims = {8, 8, 8};
    std::vector<double> vals(g.voxel_count());
    for (double& x : vals) x = rng.uniform(0.0, 40.0);
    const Volume v(g, vals);
    const BinaryMask m = deltarad::testing::make_sphere_mask(8, 3.0);

    const FeatureVector f1 = extract_features(v, m, bins_cfg(32));
    const FeatureVector f2 = extract_features(v, m, bins_cfg(32));
    CHECK(f1.size() == 34);
    CHECK(f1.names == feature_schema());
    CHECK(f1.names == f2.names);
    for (std::size_t i = 0; i < f1.size(); ++i) CHECK(f1.values[i] == f2.values[i]);
}

TEST_CASE("delta features: identity, absolute difference, symmetry, mismatch") {
    Rng rng(62);
    Geometry g;
    g.dims = {6, 6, 6};
    std::vector<double> vals(g.voxel_count());
    for (double& x : vals) x = rng.uniform(0.0, 10.0);
    const Volume v(g, vals);
    const BinaryMask m = deltarad::testing::make_sphere_mask(6, 2.2);

    const FeatureVector f = extract_features(v, m, bins_cfg(16));
    const FeatureVector zero = delta_features(f, f);
    for (double x : zero.values) CHECK(x == 0.0);
    CHECK(zero.names[0] == "delta.firstorder.mean");

    FeatureVector a, b;
    a.push("x", 3.0);
    b.push("x", 5.0);
    CHECK(delta_features(a, b).values[0] == 2.0);

    std::vector<double> vals2(g.voxel_count());
    for (double& x : vals2) x = rng.uniform(0.0, 10.0);
    const FeatureVector f2 = extract_features(Volume(g, vals2), m, bins_cfg(16));
    const FeatureVector d12 = delta_features(f, f2);
    const FeatureVector d21 = delta_features(f2, f);
    for (std::size_t i = 0; i < d12.size(); ++i) CHECK(d12.values[i] == d21.values[i]);

    FeatureVector other;
    other.push("y", 1.0);
    CHECK_THROWS(delta_features(a, other));
}
