#include <doctest.h>

#include <filesystem>
#include <set>

#include "crophybrid/features.hpp"
#include "crophybrid/rng.hpp"

using namespace crophybrid;

namespace {

SceneStack constant_stack(std::size_t h, std::size_t w, std::size_t months, float value) {
    SceneStack s;
    s.h = h;
    s.w = w;
    for (std::size_t m = 0; m < months; ++m) {
        s.months.push_back(static_cast<int>(3 + m));
        std::array<Tensor<float>, kBandCount> comp;
        for (auto& plane : comp) plane = Tensor<float>(Shape{h, w}, value);
        s.bands.push_back(std::move(comp));
    }
    return s;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("band map matches the satellite tables") {
    const auto s2 = band_map(SatelliteId::Sentinel2);
    const auto l8 = band_map(SatelliteId::Landsat8);
    CHECK(s2.size() == 6);
    CHECK(l8.size() == 6);

    auto find_role = [](const std::vector<std::pair<std::string, std::string>>& m, const std::string& role) {
        for (const auto& [band, r] : m)
            if (r == role) return band;
        return std::string();
    };
    CHECK(find_role(s2, "nir") == "B8");
    CHECK(find_role(l8, "nir") == "B5");
    CHECK(find_role(s2, "blue") == "B2");
    CHECK(find_role(s2, "swir1") == "B11");
    CHECK(find_role(s2, "swir2") == "B12");
    CHECK(find_role(l8, "swir1") == "B6");
    CHECK(find_role(l8, "swir2") == "B7");

    std::set<std::string> roles;
    for (const auto& [band, role] : s2) roles.insert(role);
    CHECK(roles == std::set<std::string>{"blue", "green", "red", "nir", "swir1", "swir2"});
}

TEST_CASE("nir == red zeroes the red-difference indices") {
    BandSet b{0.1, 0.2, 0.4, 0.4, 0.3, 0.25};
    const FeatureVector f = compute_indices(b);
    CHECK(f.v[6] == 0.0);  // ndvi
    CHECK(f.v[9] == 0.0);  // savi
}

TEST_CASE("hand-evaluated index table") {
    BandSet b;
    b.nir = 0.8;
    b.red = 0.2;
    b.green = 0.2;
    b.blue = 0.1;
    b.swir1 = 0.3;
    b.swir2 = 0.25;
    const FeatureVector f = compute_indices(b);
    CHECK(f.v[0] == doctest::Approx(0.1).epsilon(1e-12));  // raw bands pass through
    CHECK(f.v[3] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(f.v[6] == doctest::Approx(0.6).epsilon(1e-9));               // ndvi
    CHECK(f.v[7] == doctest::Approx(0.6).epsilon(1e-9));               // gndvi
    CHECK(f.v[8] == doctest::Approx(2.5 * 0.6 / 2.25).epsilon(1e-9));  // evi = 0.666...
    CHECK(f.v[9] == doctest::Approx(0.6).epsilon(1e-9));               // savi
    CHECK(f.v[10] == doctest::Approx(-0.4 / 1.4).epsilon(1e-9));       // bsi = -0.2857...
    CHECK(f.v[11] == doctest::Approx(-0.6).epsilon(1e-9));             // ndwi
    CHECK(f.v[12] == doctest::Approx(-0.5 / 1.1).epsilon(1e-9));       // ndbi = -0.4545...
}

TEST_CASE("all-equal bands zero the symmetric indices") {
    BandSet b{0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
    const FeatureVector f = compute_indices(b);
    for (std::size_t idx : {6, 7, 8, 9, 11, 12}) CHECK(f.v[idx] == 0.0);
}

TEST_CASE("non-finite input is an invalid-pixel error") {
    BandSet b{0.1, 0.2, std::numeric_limits<double>::quiet_NaN(), 0.4, 0.3, 0.2};
    CHECK_THROWS_WITH_AS((void)compute_indices(b), doctest::Contains("invalid_pixel"), Error);
}

TEST_CASE("near-zero denominator yields 0 plus a flag") {
    BandSet b{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};  // every normalized denominator is 0
    std::uint8_t flags = 0;
    const FeatureVector f = compute_indices(b, &flags);
    CHECK(f.v[6] == 0.0);
    CHECK((flags & kFlagDegenerateDenominator) != 0);

    BandSet range{2.0, 0.2, 0.2, 0.4, 0.3, 0.2};  // blue out of [-0.1, 1.5]
    flags = 0;
    (void)compute_indices(range, &flags);
    CHECK((flags & kFlagReflectanceRange) != 0);
}

TEST_CASE("normalized indices stay in [-1, 1] for positive denominators") {
    Rng rng(21);
    for (int trial = 0; trial < 500; ++trial) {
        BandSet b;
        b.blue = rng.uniform(0.01, 1.0);
        b.green = rng.uniform(0.01, 1.0);
        b.red = rng.uniform(0.01, 1.0);
        b.nir = rng.uniform(0.01, 1.0);
        b.swir1 = rng.uniform(0.01, 1.0);
        b.swir2 = rng.uniform(0.01, 1.0);
        const FeatureVector f = compute_indices(b);
        for (std::size_t idx : {6, 7, 11, 12}) {  // ndvi, gndvi, ndwi, ndbi
            CHECK(f.v[idx] >= -1.0);
            CHECK(f.v[idx] <= 1.0);
        }
        // algebraic identity of the formulas, exact in floating point
        CHECK(f.v[11] == -f.v[7]);
    }
}

TEST_CASE("compute_indices is bit-stable") {
    BandSet b{0.11, 0.22, 0.33, 0.44, 0.55, 0.66};
    const FeatureVector a = compute_indices(b);
    const FeatureVector c = compute_indices(b);
    CHECK(std::memcmp(a.v.data(), c.v.data(), sizeof(a.v)) == 0);
}

TEST_CASE("nine monthly scenes on a 64x64 grid give a (64,64,9,13) cube") {
    const SceneStack s = constant_stack(64, 64, 9, 0.25f);
    const FeatureCube cube = build_feature_cube(s, SatelliteId::Sentinel2);
    CHECK(cube.values.shape() == Shape{64, 64, 9, 13});
    CHECK(cube.months.size() == 9);
}

TEST_CASE("single all-equal scene zeroes the symmetric channels") {
    const SceneStack s = constant_stack(1, 1, 1, 0.4f);
    const FeatureCube cube = build_feature_cube(s, SatelliteId::Landsat8);
    CHECK(cube.values.shape() == Shape{1, 1, 1, 13});
    for (std::size_t idx : {6, 7, 8, 9, 11, 12}) CHECK(cube.values[idx] == 0.0f);
}

TEST_CASE("cube equals pointwise compute_indices on a random grid") {
    Rng rng(31);
    SceneStack s;
    s.h = 11;
    s.w = 13;
    s.months = {3, 5, 8};
    for (std::size_t m = 0; m < 3; ++m) {
        std::array<Tensor<float>, kBandCount> comp;
        for (auto& plane : comp) {
            plane = Tensor<float>(Shape{s.h, s.w});
            for (std::size_t i = 0; i < plane.size(); ++i)
                plane[i] = static_cast<float>(rng.uniform(0.01, 0.9));
        }
        s.bands.push_back(std::move(comp));
    }
    const FeatureCube cube = build_feature_cube(s, SatelliteId::Sentinel2);
    for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x)
            for (std::size_t m = 0; m < 3; ++m) {
                BandSet b;
                b.blue = s.bands[m][0][y * s.w + x];
                b.green = s.bands[m][1][y * s.w + x];
                b.red = s.bands[m][2][y * s.w + x];
                b.nir = s.bands[m][3][y * s.w + x];
                b.swir1 = s.bands[m][4][y * s.w + x];
                b.swir2 = s.bands[m][5][y * s.w + x];
                const FeatureVector f = compute_indices(b);
                for (std::size_t c = 0; c < kFeatureCount; ++c)
                    CHECK(cube.values[((y * s.w + x) * 3 + m) * kFeatureCount + c] ==
                          static_cast<float>(f.v[c]));
            }
}

TEST_CASE("mismatched composite grids are a grid error") {
    SceneStack s = constant_stack(4, 4, 2, 0.2f);
    s.bands[1][2] = Tensor<float>(Shape{4, 5}, 0.2f);
    CHECK_THROWS_WITH_AS((void)build_feature_cube(s, SatelliteId::Sentinel2), doctest::Contains("grid"),
                         Error);
}

TEST_CASE("cube sidecar round trip") {
    const SceneStack s = constant_stack(5, 6, 2, 0.3f);
    FeatureCube cube = build_feature_cube(s, SatelliteId::Landsat8);
    const auto prefix = (std::filesystem::temp_directory_path() / "crophybrid_cube_rt").string();
    save_feature_cube(cube, prefix, nlohmann::json{{"tool_version", kToolVersion}});
    const FeatureCube back = load_feature_cube(prefix);
    CHECK(back.values.shape() == cube.values.shape());
    CHECK(std::memcmp(back.values.data(), cube.values.data(), cube.values.size() * sizeof(float)) == 0);
    CHECK(back.months == cube.months);
    CHECK(back.satellite == SatelliteId::Landsat8);
    for (const auto* suffix : {".ctns", ".json", ".quality.ctns"})
        std::filesystem::remove(prefix + suffix);
}

}  // TEST_SUITE
