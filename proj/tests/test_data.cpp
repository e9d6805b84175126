#include <doctest.h>

#include <filesystem>

#include "crophybrid/data.hpp"

using namespace crophybrid;

namespace {

Parcel rect_parcel(int id, double x0, double y0, double x1, double y1, int class_id = 0) {
    Parcel p;
    p.id = id;
    p.class_id = class_id;
    p.class_name = "class_" + std::to_string(class_id);
    p.rings = {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}};
    return p;
}

FeatureCube tiny_cube(std::size_t h, std::size_t w, std::size_t t, std::uint64_t seed) {
    FeatureCube cube;
    cube.values = Tensor<float>(Shape{h, w, t, kFeatureCount});
    cube.quality = Tensor<float>(Shape{h, w, t});
    for (std::size_t m = 0; m < t; ++m) cube.months.push_back(static_cast<int>(3 + m));
    Rng rng(seed);
    for (std::size_t i = 0; i < cube.values.size(); ++i)
        cube.values[i] = static_cast<float>(rng.uniform());
    return cube;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("rasterize a full-grid rectangle") {
    const auto out = rasterize_parcels({rect_parcel(7, 0, 0, 4, 4, 2)}, 4, 4);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(out.parcel_ids[i] == 7.0f);
        CHECK(out.labels[i] == 2.0f);
    }
}

TEST_CASE("two disjoint rectangles cover exactly their areas") {
    const auto out = rasterize_parcels(
        {rect_parcel(1, 0, 0, 3, 2, 0), rect_parcel(2, 4, 3, 8, 6, 1)}, 8, 8, -1);
    int n1 = 0, n2 = 0, outside = 0;
    for (std::size_t i = 0; i < 64; ++i) {
        if (out.parcel_ids[i] == 1.0f) ++n1;
        else if (out.parcel_ids[i] == 2.0f) ++n2;
        else ++outside;
    }
    CHECK(n1 == 6);   // 3x2
    CHECK(n2 == 12);  // 4x3
    CHECK(outside == 64 - 18);
    CHECK(out.labels[0] == 0.0f);
    CHECK(out.labels[63] == -1.0f);  // outside stays at the outside class
}

TEST_CASE("point-in-polygon for the unit square") {
    const Parcel p = rect_parcel(1, 0, 0, 1, 1);
    CHECK(point_in_parcel(p, 0.5, 0.5));
    CHECK_FALSE(point_in_parcel(p, 1.5, 0.5));
    CHECK_FALSE(point_in_parcel(p, 0.5, -0.5));
}

TEST_CASE("unclosed ring is a geometry error") {
    Parcel p = rect_parcel(1, 0, 0, 2, 2);
    p.rings[0].pop_back();
    CHECK_THROWS_WITH_AS((void)rasterize_parcels({p}, 4, 4), doctest::Contains("geometry"), Error);
}

TEST_CASE("parcel split") {
    SUBCASE("10 parcels at ratio 0.6 split 6/4") {
        std::vector<Parcel> parcels;
        for (int i = 1; i <= 10; ++i) parcels.push_back(rect_parcel(i, 0, 0, 1, 1, 0));
        split_parcels(parcels, 0.6, 42);
        int train = 0, test = 0;
        for (const auto& p : parcels) (p.split == SplitTag::Train ? train : test) += 1;
        CHECK(train == 6);
        CHECK(test == 4);
    }
    SUBCASE("fixed seed reproduces the assignment") {
        auto make = [] {
            std::vector<Parcel> parcels;
            for (int i = 1; i <= 20; ++i) parcels.push_back(rect_parcel(i, 0, 0, 1, 1, i % 3));
            return parcels;
        };
        auto a = make(), b = make();
        split_parcels(a, 0.6, 7);
        split_parcels(b, 0.6, 7);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].split == b[i].split);
        auto c = make();
        split_parcels(c, 0.6, 8);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i].split != c[i].split;
        CHECK(any_diff);  // different seed, different shuffle
    }
    SUBCASE("a class with fewer than two parcels goes entirely to train") {
        std::vector<Parcel> parcels = {rect_parcel(1, 0, 0, 1, 1, 0), rect_parcel(2, 0, 0, 1, 1, 1),
                                       rect_parcel(3, 0, 0, 1, 1, 1), rect_parcel(4, 0, 0, 1, 1, 1)};
        Warnings w;
        split_parcels(parcels, 0.6, 3, &w);
        CHECK(parcels[0].split == SplitTag::Train);
        CHECK(w.size() == 1);
    }
    SUBCASE("stratification keeps per-class train fractions within one parcel of the ratio") {
        Rng rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            const int classes = 2 + static_cast<int>(rng.below(4));
            std::vector<Parcel> parcels;
            int id = 1;
            for (int c = 0; c < classes; ++c) {
                const int n = 2 + static_cast<int>(rng.below(30));
                for (int i = 0; i < n; ++i) parcels.push_back(rect_parcel(id++, 0, 0, 1, 1, c));
            }
            split_parcels(parcels, 0.6, rng.next_u64());
            std::map<int, std::pair<int, int>> counts;  // class -> (train, total)
            for (const auto& p : parcels) {
                counts[p.class_id].second += 1;
                if (p.split == SplitTag::Train) counts[p.class_id].first += 1;
                CHECK(p.split != SplitTag::None);  // partition: every parcel tagged
            }
            for (const auto& [cls, tc] : counts)
                CHECK(std::abs(tc.first - 0.6 * tc.second) <= 1.0);
        }
    }
}

TEST_CASE("patch sampling") {
    FeatureCube cube = tiny_cube(7, 7, 3, 1);
    std::vector<Parcel> parcels = {rect_parcel(1, 0, 0, 7, 7, 0)};
    parcels[0].split = SplitTag::Train;
    const auto planes = rasterize_parcels(parcels, 7, 7);

    SUBCASE("the interior center is a pure window, no padding involved") {
        const PatchSet set = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 7, 1);
        REQUIRE(set.train.size() == 49);
        // find the patch centered at (3,3): its window is the full grid
        for (std::size_t i = 0; i < set.train.size(); ++i) {
            if (set.train.center[i] != std::array<int, 2>{3, 3}) continue;
            const float* patch = set.train.x.data() + i * cube.values.size() / 1;
            CHECK(std::memcmp(patch, cube.values.data(), cube.values.size() * sizeof(float)) == 0);
        }
    }
    SUBCASE("corner patches replicate the edges") {
        const PatchSet set = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 3, 1);
        // patch at (0,0): rows/cols below 0 clamp to 0
        const std::size_t tc = cube.t() * kFeatureCount;
        const float* patch = set.train.x.data();  // scan order puts (0,0) first
        REQUIRE(set.train.center[0] == std::array<int, 2>{0, 0});
        auto cube_at = [&](std::size_t y, std::size_t x) { return cube.values.data() + (y * 7 + x) * tc; };
        const float* expect[3][3] = {{cube_at(0, 0), cube_at(0, 0), cube_at(0, 1)},
                                     {cube_at(0, 0), cube_at(0, 0), cube_at(0, 1)},
                                     {cube_at(1, 0), cube_at(1, 0), cube_at(1, 1)}};
        for (int dy = 0; dy < 3; ++dy)
            for (int dx = 0; dx < 3; ++dx)
                CHECK(std::memcmp(patch + (dy * 3 + dx) * tc, expect[dy][dx], tc * sizeof(float)) == 0);
    }
    SUBCASE("patch content is independent of the stride") {
        const PatchSet s1 = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 3, 1);
        const PatchSet s2 = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 3, 2);
        const std::size_t sample = 3 * 3 * cube.t() * kFeatureCount;
        for (std::size_t j = 0; j < s2.train.size(); ++j) {
            bool found = false;
            for (std::size_t i = 0; i < s1.train.size(); ++i) {
                if (s1.train.center[i] != s2.train.center[j]) continue;
                found = true;
                CHECK(std::memcmp(s1.train.x.data() + i * sample, s2.train.x.data() + j * sample,
                                  sample * sizeof(float)) == 0);
            }
            CHECK(found);
        }
    }
    SUBCASE("max_patches caps the total deterministically") {
        const PatchSet capped = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 3, 1, 10);
        CHECK(capped.train.size() == 10);
        const PatchSet again = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 3, 1, 10);
        CHECK(capped.train.center == again.train.center);
    }
    SUBCASE("oversized r is a shape error") {
        CHECK_THROWS_WITH_AS(
            (void)sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 9, 1),
            doctest::Contains("shape"), Error);
        CHECK_THROWS_AS((void)sample_patches(cube, planes.labels, planes.parcel_ids, parcels, 4, 1), Error);
    }
}

TEST_CASE("synthetic dataset") {
    SynthSpec spec;
    spec.classes = 3;
    spec.h = 24;
    spec.w = 24;
    spec.months = {3, 4, 5, 6, 7, 8};
    spec.parcel_min = 5;
    spec.parcel_max = 9;
    spec.phenology = {{2, 0.8, 1.0}, {4, 0.85, 1.1}, {6, 0.75, 0.9}};
    spec.seed = 77;

    SUBCASE("noise-free classes are exactly separable by their NDVI series") {
        SynthSpec clean = spec;
        clean.noise_sigma = 0.0;
        const SynthData d = synth_generate(clean);
        // all pixels of a class share one NDVI curve; distinct classes differ
        std::map<int, std::vector<float>> curve;
        const std::size_t t = clean.months.size();
        for (std::size_t y = 0; y < clean.h; ++y)
            for (std::size_t x = 0; x < clean.w; ++x) {
                const int cls = static_cast<int>(d.labels[y * clean.w + x]);
                std::vector<float> ndvi(t);
                for (std::size_t m = 0; m < t; ++m)
                    ndvi[m] = d.cube.values[((y * clean.w + x) * t + m) * kFeatureCount + 6];
                auto [it, fresh] = curve.emplace(cls, ndvi);
                if (!fresh) CHECK(it->second == ndvi);
            }
        CHECK(curve.size() == 3);
        for (auto a = curve.begin(); a != curve.end(); ++a)
            for (auto b = std::next(a); b != curve.end(); ++b) CHECK(a->second != b->second);
    }
    SUBCASE("class-mean NDVI peaks at the configured month when sigma is zero") {
        SynthSpec clean = spec;
        clean.noise_sigma = 0.0;
        const SynthData d = synth_generate(clean);
        const std::size_t t = clean.months.size();
        for (std::size_t cls = 0; cls < 3; ++cls) {
            std::vector<double> mean(t, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < clean.h * clean.w; ++i) {
                if (static_cast<std::size_t>(d.labels[i]) != cls) continue;
                ++count;
                for (std::size_t m = 0; m < t; ++m)
                    mean[m] += d.cube.values[(i * t + m) * kFeatureCount + 6];
            }
            REQUIRE(count > 0);
            const std::size_t argmax =
                static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
            CHECK(argmax + 1 == static_cast<std::size_t>(clean.phenology[cls].peak_month));
        }
    }
    SUBCASE("same seed gives a bitwise identical cube") {
        const SynthData a = synth_generate(spec);
        const SynthData b = synth_generate(spec);
        CHECK(std::memcmp(a.cube.values.data(), b.cube.values.data(),
                          a.cube.values.size() * sizeof(float)) == 0);
        CHECK(std::memcmp(a.labels.data(), b.labels.data(), a.labels.size() * sizeof(float)) == 0);
    }
    SUBCASE("the grid is fully tiled with labeled parcels") {
        const SynthData d = synth_generate(spec);
        for (std::size_t i = 0; i < spec.h * spec.w; ++i) {
            CHECK(d.labels[i] >= 0.0f);
            CHECK(d.parcel_ids[i] >= 1.0f);
        }
        CHECK(d.class_names.size() == 3);
    }
    SUBCASE("peak month outside the series is rejected") {
        SynthSpec bad = spec;
        bad.phenology[1].peak_month = 11;  // t = 6
        CHECK_THROWS_AS((void)synth_generate(bad), Error);
    }
}

TEST_CASE("no test patch center lies inside a train parcel") {
    SynthSpec spec;
    spec.classes = 3;
    spec.h = 32;
    spec.w = 32;
    spec.months = {3, 4, 5, 6};
    spec.parcel_min = 5;
    spec.parcel_max = 8;
    spec.noise_sigma = 0.02;
    spec.seed = 5;
    SynthData d = synth_generate(spec);
    split_parcels(d.parcels, 0.6, 99);
    const PatchSet set = sample_patches(d.cube, d.labels, d.parcel_ids, d.parcels, 5, 1);

    std::map<int, SplitTag> tag_of;
    for (const auto& p : d.parcels) tag_of[p.id] = p.split;
    CHECK(set.test.size() > 0);
    for (std::size_t i = 0; i < set.test.size(); ++i) {
        const auto [cy, cx] = set.test.center[i];
        const int pid = static_cast<int>(d.parcel_ids[static_cast<std::size_t>(cy) * spec.w +
                                                      static_cast<std::size_t>(cx)]);
        CHECK(tag_of.at(pid) == SplitTag::Test);
        // and the membership check against the polygon itself
        for (const auto& p : d.parcels)
            if (p.split == SplitTag::Train)
                CHECK_FALSE(point_in_parcel(p, cx + 0.5, cy + 0.5));
    }
}

TEST_CASE("patch set disk round trip") {
    SynthSpec spec;
    spec.classes = 2;
    spec.h = 16;
    spec.w = 16;
    spec.months = {3, 4, 5};
    spec.parcel_min = 4;
    spec.parcel_max = 7;
    spec.seed = 31;
    SynthData d = synth_generate(spec);
    split_parcels(d.parcels, 0.6, 32);
    PatchSet set = sample_patches(d.cube, d.labels, d.parcel_ids, d.parcels, 3, 1, 60);
    set.seed = 32;
    set.class_names = d.class_names;

    const auto dir = (std::filesystem::temp_directory_path() / "crophybrid_patches_rt").string();
    save_patch_set(set, dir, nlohmann::json{{"tool_version", kToolVersion}});
    const PatchSet back = load_patch_set(dir);
    CHECK(back.r == set.r);
    CHECK(back.class_names == set.class_names);
    CHECK(back.train.size() == set.train.size());
    CHECK(back.test.size() == set.test.size());
    CHECK(back.train.y == set.train.y);
    CHECK(back.test.center == set.test.center);
    CHECK(std::memcmp(back.train.x.data(), set.train.x.data(),
                      set.train.x.size() * sizeof(float)) == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("parcel json and labels csv round trip") {
    std::vector<Parcel> parcels = {rect_parcel(3, 0, 0, 2, 2), rect_parcel(8, 2, 0, 4, 2)};
    parcels[0].class_name = "Alfalfa";
    parcels[1].class_name = "";
    const auto dir = std::filesystem::temp_directory_path() / "crophybrid_parcel_rt";
    std::filesystem::create_directories(dir);
    save_parcels(parcels, (dir / "parcels.json").string());
    {
        std::ofstream f((dir / "labels.csv").string());
        f << "parcel_id,class_name\n8,Others\n";
    }
    auto loaded = load_parcels((dir / "parcels.json").string());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].class_name == "Alfalfa");
    const auto csv = load_labels_csv((dir / "labels.csv").string());
    for (auto& p : loaded)
        if (csv.count(p.id)) p.class_name = csv.at(p.id);
    const auto table = assign_class_ids(loaded);
    REQUIRE(table.size() == 2);
    CHECK(table[0] == "Others");  // Others pinned to class 0
    CHECK(table[1] == "Alfalfa");
    CHECK(loaded[0].class_id == 1);
    CHECK(loaded[1].class_id == 0);
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
