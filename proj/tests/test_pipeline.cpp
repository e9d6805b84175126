#include <doctest.h>

#include "crophybrid/pipeline.hpp"
#include "crophybrid/rng.hpp"
#include "reference_ops.hpp"

using namespace crophybrid;

namespace {

Scene make_scene(std::size_t h, std::size_t w, int month, double cloud, float value) {
    Scene s;
    s.h = h;
    s.w = w;
    s.month = month;
    char date[16];
    std::snprintf(date, sizeof(date), "2016-%02d-10", month);
    s.date = date;
    s.cloud_fraction = cloud;
    for (auto& b : s.bands) b = Tensor<float>(Shape{h, w}, value);
    s.valid.assign(h * w, 1);
    return s;
}

bool stacks_bitwise_equal(const SceneStack& a, const SceneStack& b) {
    if (a.months != b.months || a.h != b.h || a.w != b.w) return false;
    for (std::size_t m = 0; m < a.bands.size(); ++m)
        for (std::size_t band = 0; band < kBandCount; ++band)
            if (std::memcmp(a.bands[m][band].data(), b.bands[m][band].data(),
                            a.bands[m][band].size() * sizeof(float)) != 0)
                return false;
    return true;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("cloud filter keeps scenes strictly below the threshold") {
    std::vector<Scene> scenes = {make_scene(2, 2, 3, 0.05, 0.1f), make_scene(2, 2, 4, 0.2, 0.1f),
                                 make_scene(2, 2, 5, 0.09, 0.1f)};
    const auto kept = filter_by_cloud(scenes, 0.10);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].month == 3);
    CHECK(kept[1].month == 5);

    CHECK(filter_by_cloud(scenes, 1.0).size() == 3);

    // the boundary value is excluded: "less than", not "at most"
    std::vector<Scene> boundary = {make_scene(2, 2, 3, 0.10, 0.1f)};
    Warnings w;
    CHECK(filter_by_cloud(boundary, 0.10, &w).empty());
    CHECK(w.size() == 1);

    CHECK_THROWS_AS((void)filter_by_cloud(scenes, 0.0), Error);
}

TEST_CASE("cloud mask") {
    Scene s = make_scene(2, 2, 3, 0.0, 0.5f);

    SUBCASE("all-true mask is the identity") {
        const Scene out = apply_cloud_mask(s, Tensor<float>(Shape{2, 2}, 1.0f));
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(out.valid[i] == 1);
            CHECK(out.bands[0][i] == 0.5f);
        }
    }
    SUBCASE("all-false mask leaves zero valid pixels") {
        const Scene out = apply_cloud_mask(s, Tensor<float>(Shape{2, 2}, 0.0f));
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(out.valid[i] == 0);
            CHECK(std::isnan(out.bands[3][i]));
        }
    }
    SUBCASE("checkerboard keeps exactly two pixels on a 2x2 grid") {
        Tensor<float> mask(Shape{2, 2}, 0.0f);
        mask[0] = 1.0f;
        mask[3] = 1.0f;
        const Scene out = apply_cloud_mask(s, mask);
        int valid = 0;
        for (std::size_t i = 0; i < 4; ++i) valid += out.valid[i];
        CHECK(valid == 2);
    }
    SUBCASE("grid mismatch is a grid error") {
        CHECK_THROWS_WITH_AS((void)apply_cloud_mask(s, Tensor<float>(Shape{2, 3}, 1.0f)),
                             doctest::Contains("grid"), Error);
    }
}

TEST_CASE("monthly median") {
    SUBCASE("single scene per month is the identity") {
        std::vector<Scene> scenes = {make_scene(2, 2, 4, 0.0, 0.37f)};
        const SceneStack stack = monthly_median(scenes, {4});
        for (std::size_t b = 0; b < kBandCount; ++b)
            for (std::size_t i = 0; i < 4; ++i) CHECK(stack.bands[0][b][i] == 0.37f);
    }
    SUBCASE("odd count picks the middle value") {
        std::vector<Scene> scenes = {make_scene(1, 1, 4, 0.0, 0.2f), make_scene(1, 1, 4, 0.0, 0.9f),
                                     make_scene(1, 1, 4, 0.0, 0.4f)};
        const SceneStack stack = monthly_median(scenes, {4});
        CHECK(stack.bands[0][0][0] == 0.4f);
    }
    SUBCASE("even count averages the two middle values") {
        std::vector<Scene> scenes = {make_scene(1, 1, 4, 0.0, 0.2f), make_scene(1, 1, 4, 0.0, 0.4f)};
        const SceneStack stack = monthly_median(scenes, {4});
        CHECK(stack.bands[0][0][0] == doctest::Approx(0.3).epsilon(1e-7));
        CHECK(stack.bands[0][0][0] == refops::median_sorted({0.2f, 0.4f}));
    }
    SUBCASE("months must be strictly increasing") {
        std::vector<Scene> scenes = {make_scene(1, 1, 4, 0.0, 0.2f)};
        CHECK_THROWS_AS((void)monthly_median(scenes, {4, 4}), Error);
    }
    SUBCASE("matches the brute-force sort oracle on random stacks") {
        Rng rng(77);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t h = 2 + rng.below(7), w = 2 + rng.below(7);
            const std::size_t nscenes = 1 + rng.below(5);
            std::vector<Scene> scenes;
            for (std::size_t i = 0; i < nscenes; ++i) {
                Scene s = make_scene(h, w, 6, 0.0, 0.0f);
                for (auto& band : s.bands)
                    for (std::size_t p = 0; p < h * w; ++p) band[p] = static_cast<float>(rng.uniform());
                for (std::size_t p = 0; p < h * w; ++p)
                    if (rng.uniform() < 0.3) {
                        s.valid[p] = 0;
                        for (auto& band : s.bands) band[p] = std::numeric_limits<float>::quiet_NaN();
                    }
                scenes.push_back(std::move(s));
            }
            const SceneStack stack = monthly_median(scenes, {6});
            for (std::size_t b = 0; b < kBandCount; ++b)
                for (std::size_t p = 0; p < h * w; ++p) {
                    std::vector<float> vals;
                    for (const auto& s : scenes)
                        if (s.valid[p]) vals.push_back(s.bands[b][p]);
                    if (vals.empty())
                        CHECK(std::isnan(stack.bands[0][b][p]));
                    else
                        CHECK(stack.bands[0][b][p] == refops::median_sorted(vals));
                }
        }
    }
}

TEST_CASE("gap filling") {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    auto single_pixel_stack = [&](std::vector<float> series, std::vector<int> months) {
        SceneStack s;
        s.h = 1;
        s.w = 1;
        s.months = std::move(months);
        for (float v : series) {
            std::array<Tensor<float>, kBandCount> comp;
            for (auto& b : comp) b = Tensor<float>(Shape{1, 1}, v);
            s.bands.push_back(std::move(comp));
        }
        return s;
    };

    SUBCASE("interior gap is linearly interpolated") {
        const SceneStack filled = fill_gaps(single_pixel_stack({0.2f, nan, 0.6f}, {3, 4, 5}));
        CHECK(filled.bands[0][0][0] == doctest::Approx(0.2).epsilon(1e-7));
        CHECK(filled.bands[1][0][0] == doctest::Approx(0.4).epsilon(1e-7));
        CHECK(filled.bands[2][0][0] == doctest::Approx(0.6).epsilon(1e-7));
    }
    SUBCASE("interpolation uses month labels as the time coordinate") {
        const SceneStack filled = fill_gaps(single_pixel_stack({0.2f, nan, 0.8f}, {3, 4, 6}));
        CHECK(filled.bands[1][0][0] == doctest::Approx(0.4).epsilon(1e-6));  // (4-3)/(6-3) of the way
    }
    SUBCASE("leading and trailing gaps take the nearest valid value") {
        const SceneStack filled = fill_gaps(single_pixel_stack({nan, nan, 0.5f}, {3, 4, 5}));
        for (std::size_t m = 0; m < 3; ++m) CHECK(filled.bands[m][0][0] == 0.5f);
    }
    SUBCASE("complete series is unchanged and filling is idempotent") {
        SceneStack s;
        s.h = 3;
        s.w = 3;
        s.months = {3, 4, 5, 6};
        Rng rng(12);
        for (std::size_t m = 0; m < 4; ++m) {
            std::array<Tensor<float>, kBandCount> comp;
            for (auto& b : comp) {
                b = Tensor<float>(Shape{3, 3});
                for (std::size_t i = 0; i < 9; ++i)
                    b[i] = rng.uniform() < 0.25 ? nan : static_cast<float>(rng.uniform());
            }
            s.bands.push_back(std::move(comp));
        }
        const SceneStack once = fill_gaps(s);
        const SceneStack twice = fill_gaps(once);
        CHECK(stacks_bitwise_equal(once, twice));
        for (const auto& comp : once.bands)
            for (const auto& b : comp)
                for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::isfinite(b[i]));
    }
    SUBCASE("pixels with no observation take the monthly scene mean") {
        SceneStack s;
        s.h = 1;
        s.w = 3;
        s.months = {3, 4};
        for (std::size_t m = 0; m < 2; ++m) {
            std::array<Tensor<float>, kBandCount> comp;
            for (auto& b : comp) {
                b = Tensor<float>(Shape{1, 3});
                b[0] = 0.2f + 0.1f * static_cast<float>(m);
                b[1] = 0.4f + 0.1f * static_cast<float>(m);
                b[2] = nan;  // never observed
            }
            s.bands.push_back(std::move(comp));
        }
        const SceneStack filled = fill_gaps(s);
        CHECK(filled.bands[0][0][2] == doctest::Approx(0.3).epsilon(1e-6));
        CHECK(filled.bands[1][0][2] == doctest::Approx(0.4).epsilon(1e-6));
    }
    SUBCASE("a stack with no valid pixels anywhere is unfillable") {
        CHECK_THROWS_WITH_AS((void)fill_gaps(single_pixel_stack({nan, nan}, {3, 4})),
                             doctest::Contains("unfillable"), Error);
    }
}

TEST_CASE("default month range pins t = 9 (march through november)") {
    std::vector<Scene> scenes;
    for (int m = 3; m <= 11; ++m) scenes.push_back(make_scene(2, 2, m, 0.0, 0.1f * static_cast<float>(m)));
    std::vector<int> months;
    for (int m = 3; m <= 11; ++m) months.push_back(m);
    const SceneStack stack = fill_gaps(monthly_median(scenes, months));
    CHECK(stack.months.size() == 9);
    for (std::size_t i = 1; i < stack.months.size(); ++i) CHECK(stack.months[i] > stack.months[i - 1]);
}

TEST_CASE("scene manifest and stack directory round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "crophybrid_scene_io";
    fs::create_directories(dir);

    Scene s = make_scene(3, 4, 5, 0.04, 0.31f);
    nlohmann::json manifest;
    manifest["date"] = "2016-05-14";
    manifest["cloud_fraction"] = 0.04;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const std::string name = std::string(kBandRoles[b]) + ".ctns";
        save_tensor(s.bands[b], (dir / name).string());
        manifest["bands"][kBandRoles[b]] = name;
    }
    Tensor<float> mask(Shape{3, 4}, 1.0f);
    mask[5] = 0.0f;
    save_tensor(mask, (dir / "mask.ctns").string());
    manifest["mask"] = "mask.ctns";
    {
        std::ofstream f((dir / "scene.json").string());
        f << manifest.dump(2);
    }
    const Scene loaded = load_scene((dir / "scene.json").string(), {});
    CHECK(loaded.month == 5);
    CHECK(loaded.cloud_fraction == 0.04);
    CHECK(loaded.valid[5] == 0);
    CHECK(std::isnan(loaded.bands[0][5]));
    CHECK(loaded.bands[0][0] == 0.31f);

    const SceneStack stack = fill_gaps(monthly_median({loaded}, {5}));
    save_scene_stack(stack, (dir / "stack").string(), nlohmann::json::object());
    const SceneStack back = load_scene_stack((dir / "stack").string());
    CHECK(stacks_bitwise_equal(stack, back));
    fs::remove_all(dir);
}

}  // TEST_SUITE
