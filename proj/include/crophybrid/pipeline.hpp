#pragma once

#include <array>
#include <filesystem>
#include <json.hpp>
#include <map>

#include "crophybrid/tensor.hpp"

namespace crophybrid {

// Five-step preprocessing on raw scenes: select by cloud cover, mask, composite
// per month by pixelwise median, fill the remaining gaps along time. Invalid
// pixels carry NaN in the band planes until gap filling removes them.

inline constexpr std::size_t kBandCount = 6;  // blue, green, red, nir, swir1, swir2
inline constexpr std::array<const char*, kBandCount> kBandRoles = {"blue", "green", "red",
                                                                   "nir", "swir1", "swir2"};

struct Scene {
    std::size_t h = 0, w = 0;
    std::array<Tensor<float>, kBandCount> bands;  // (h, w) each, NaN where invalid
    std::vector<std::uint8_t> valid;              // h*w, 1 = observed and cloud-free
    std::string date;                             // "YYYY-MM-DD"
    int month = 0;
    double cloud_fraction = 0.0;
};

struct SceneStack {
    std::size_t h = 0, w = 0;
    std::vector<int> months;  // strictly increasing labels
    std::vector<std::array<Tensor<float>, kBandCount>> bands;  // one composite per month
};

inline int month_of_date(const std::string& date) {
    if (date.size() < 7 || date[4] != '-') fail("config", "date must be YYYY-MM-DD, got \"" + date + "\"");
    const int m = std::stoi(date.substr(5, 2));
    if (m < 1 || m > 12) fail("config", "month out of range in date \"" + date + "\"");
    return m;
}

// Keeps exactly the scenes with cloud_fraction strictly below the threshold.
inline std::vector<Scene> filter_by_cloud(const std::vector<Scene>& scenes, double threshold,
                                          Warnings* warnings = nullptr) {
    if (!(threshold > 0.0 && threshold <= 1.0)) fail("config", "cloud threshold must be in (0, 1]");
    std::vector<Scene> kept;
    for (const auto& s : scenes)
        if (s.cloud_fraction < threshold) kept.push_back(s);
    if (kept.empty())
        warn(warnings, "cloud filter removed every scene (threshold " + std::to_string(threshold) + ")");
    return kept;
}

// mask: (h, w) plane, nonzero = keep. Masked pixels become NaN and the scene
// validity plane is ANDed.
inline Scene apply_cloud_mask(const Scene& scene, const Tensor<float>& mask) {
    if (mask.rank() != 2 || mask.shape()[0] != scene.h || mask.shape()[1] != scene.w)
        fail("grid", "mask grid " + shape_str(mask.shape()) + " does not match scene " +
                         std::to_string(scene.h) + "x" + std::to_string(scene.w));
    Scene out = scene;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (std::size_t i = 0; i < scene.h * scene.w; ++i) {
        if (mask[i] != 0.0f) continue;
        out.valid[i] = 0;
        for (auto& b : out.bands) b[i] = nan;
    }
    return out;
}

// Per month, per pixel, per band: median over the scenes where the pixel is
// valid; even counts average the two middle values; no valid observation
// leaves NaN for the gap filler.
inline SceneStack monthly_median(const std::vector<Scene>& scenes, const std::vector<int>& months,
                                 Warnings* warnings = nullptr) {
    if (months.empty()) fail("config", "no months requested");
    for (std::size_t i = 1; i < months.size(); ++i)
        if (months[i] <= months[i - 1]) fail("config", "month labels must be strictly increasing");
    if (scenes.empty()) fail("grid", "no scenes to composite");
    SceneStack stack;
    stack.h = scenes.front().h;
    stack.w = scenes.front().w;
    for (const auto& s : scenes)
        if (s.h != stack.h || s.w != stack.w)
            fail("grid", "scene grids differ: " + std::to_string(s.h) + "x" + std::to_string(s.w));
    stack.months = months;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (int month : months) {
        std::vector<const Scene*> group;
        for (const auto& s : scenes)
            if (s.month == month) group.push_back(&s);
        if (group.empty())
            warn(warnings, "month " + std::to_string(month) + " has no scenes; left for gap filling");
        std::array<Tensor<float>, kBandCount> comp;
        for (auto& b : comp) b = Tensor<float>(Shape{stack.h, stack.w}, nan);
        std::vector<float> vals;
        for (std::size_t i = 0; i < stack.h * stack.w; ++i)
            for (std::size_t b = 0; b < kBandCount; ++b) {
                vals.clear();
                for (const Scene* s : group) {
                    const float v = s->bands[b][i];
                    if (s->valid[i] && std::isfinite(v)) vals.push_back(v);
                }
                if (vals.empty()) continue;
                std::sort(vals.begin(), vals.end());
                const std::size_t n = vals.size();
                comp[b][i] = n % 2 ? vals[n / 2] : 0.5f * (vals[n / 2 - 1] + vals[n / 2]);
            }
        stack.bands.push_back(std::move(comp));
    }
    return stack;
}

// Linear interpolation along time between nearest valid neighbours; constant
// extrapolation at either end; pixels with no valid observation at all take
// the per-band monthly scene mean. The month label value is the time
// coordinate. Output is fully finite (idempotent on complete stacks).
inline SceneStack fill_gaps(const SceneStack& stack, Warnings* warnings = nullptr) {
    const std::size_t nm = stack.months.size();
    const std::size_t np = stack.h * stack.w;
    if (nm == 0 || np == 0) fail("unfillable", "empty scene stack");
    SceneStack out = stack;

    // monthly per-band means over valid pixels, interpolated across months
    // where a whole month is empty
    std::array<std::vector<double>, kBandCount> month_mean;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        auto& mm = month_mean[b];
        mm.assign(nm, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t m = 0; m < nm; ++m) {
            double sum = 0.0;
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < np; ++i) {
                const float v = stack.bands[m][b][i];
                if (std::isfinite(v)) {
                    sum += v;
                    ++cnt;
                }
            }
            if (cnt) mm[m] = sum / static_cast<double>(cnt);
        }
        bool any = false;
        for (double v : mm) any |= std::isfinite(v);
        if (!any) fail("unfillable", std::string("band ") + kBandRoles[b] + " has no valid pixel in any month");
    }
    auto interp_series = [&](auto&& get, auto&& set) {
        for (std::size_t m = 0; m < nm; ++m) {
            if (std::isfinite(get(m))) continue;
            std::ptrdiff_t prev = -1, next = -1;
            for (std::ptrdiff_t p = static_cast<std::ptrdiff_t>(m) - 1; p >= 0; --p)
                if (std::isfinite(get(p))) { prev = p; break; }
            for (std::size_t q = m + 1; q < nm; ++q)
                if (std::isfinite(get(q))) { next = static_cast<std::ptrdiff_t>(q); break; }
            if (prev >= 0 && next >= 0) {
                const double t0 = stack.months[prev], t1 = stack.months[next], t = stack.months[m];
                const double v0 = get(prev), v1 = get(next);
                set(m, v0 + (v1 - v0) * (t - t0) / (t1 - t0));
            } else if (prev >= 0) {
                set(m, get(prev));
            } else if (next >= 0) {
                set(m, get(next));
            }
        }
    };
    for (std::size_t b = 0; b < kBandCount; ++b) {
        auto& mm = month_mean[b];
        interp_series([&](std::size_t m) { return mm[m]; }, [&](std::size_t m, double v) { mm[m] = v; });
    }

    std::size_t mean_filled = 0;
    for (std::size_t i = 0; i < np; ++i)
        for (std::size_t b = 0; b < kBandCount; ++b) {
            bool any_valid = false;
            for (std::size_t m = 0; m < nm; ++m) any_valid |= std::isfinite(out.bands[m][b][i]);
            if (!any_valid) {
                for (std::size_t m = 0; m < nm; ++m)
                    out.bands[m][b][i] = static_cast<float>(month_mean[b][m]);
                ++mean_filled;
                continue;
            }
            interp_series([&](std::size_t m) { return static_cast<double>(out.bands[m][b][i]); },
                          [&](std::size_t m, double v) { out.bands[m][b][i] = static_cast<float>(v); });
        }
    if (mean_filled)
        warn(warnings, std::to_string(mean_filled) + " pixel/band series had no observation; used monthly scene means");

    for (std::size_t m = 0; m < nm; ++m)
        for (std::size_t b = 0; b < kBandCount; ++b)
            for (std::size_t i = 0; i < np; ++i)
                if (!std::isfinite(out.bands[m][b][i])) fail("unfillable", "gap filling left non-finite values");
    return out;
}

// ---------------------------------------------------------------------------
// Disk formats. A scene is a JSON manifest naming per-band tensor files and a
// mask tensor:
//   {"date": "2016-03-14", "cloud_fraction": 0.05,
//    "bands": {"blue": "b02.ctns", ...}, "mask": "qa.ctns"}
// Band keys may be role names or satellite band codes (resolved by caller).
// A scene-stack directory holds month_<MM>_<role>.ctns planes + stack.json.
// ---------------------------------------------------------------------------

inline Scene load_scene(const std::string& manifest_path,
                        const std::map<std::string, std::string>& band_name_to_role) {
    namespace fs = std::filesystem;
    std::ifstream f(manifest_path);
    if (!f) fail("io", "cannot open scene manifest: " + manifest_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        fail("io", "bad JSON in " + manifest_path + ": " + e.what());
    }
    Scene s;
    s.date = j.at("date").get<std::string>();
    s.month = month_of_date(s.date);
    s.cloud_fraction = j.at("cloud_fraction").get<double>();
    if (s.cloud_fraction < 0.0 || s.cloud_fraction > 1.0)
        fail("config", "cloud_fraction out of [0,1] in " + manifest_path);

    const fs::path base = fs::path(manifest_path).parent_path();
    std::array<bool, kBandCount> seen{};
    for (const auto& [name, rel] : j.at("bands").items()) {
        std::string role = name;
        if (auto it = band_name_to_role.find(name); it != band_name_to_role.end()) role = it->second;
        std::size_t bi = kBandCount;
        for (std::size_t b = 0; b < kBandCount; ++b)
            if (role == kBandRoles[b]) bi = b;
        if (bi == kBandCount) fail("config", "unknown band \"" + name + "\" in " + manifest_path);
        s.bands[bi] = load_tensor<float>((base / rel.get<std::string>()).string());
        if (s.bands[bi].rank() != 2) fail("grid", "band plane must be rank 2 in " + manifest_path);
        seen[bi] = true;
    }
    for (std::size_t b = 0; b < kBandCount; ++b)
        if (!seen[b]) fail("config", std::string("missing band \"") + kBandRoles[b] + "\" in " + manifest_path);
    s.h = s.bands[0].shape()[0];
    s.w = s.bands[0].shape()[1];
    for (const auto& b : s.bands)
        if (b.shape() != s.bands[0].shape()) fail("grid", "band grids differ in " + manifest_path);

    s.valid.assign(s.h * s.w, 1);
    if (j.contains("mask")) {
        Tensor<float> mask = load_tensor<float>((base / j["mask"].get<std::string>()).string());
        Scene masked = apply_cloud_mask(s, mask);
        return masked;
    }
    return s;
}

inline void save_scene_stack(const SceneStack& stack, const std::string& dir, const nlohmann::json& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json j;
    j["months"] = stack.months;
    j["grid"] = {{"h", stack.h}, {"w", stack.w}};
    j["meta"] = meta;
    nlohmann::json files = nlohmann::json::object();
    for (std::size_t m = 0; m < stack.months.size(); ++m) {
        char mm[8];
        std::snprintf(mm, sizeof(mm), "%02d", stack.months[m]);
        for (std::size_t b = 0; b < kBandCount; ++b) {
            const std::string name = "month_" + std::string(mm) + "_" + kBandRoles[b] + ".ctns";
            save_tensor(stack.bands[m][b], (fs::path(dir) / name).string());
            files[std::to_string(stack.months[m])][kBandRoles[b]] = name;
        }
    }
    j["files"] = files;
    std::ofstream f((fs::path(dir) / "stack.json").string(), std::ios::trunc);
    if (!f) fail("io", "cannot write stack.json in " + dir);
    f << j.dump(2) << "\n";
}

inline SceneStack load_scene_stack(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream f((fs::path(dir) / "stack.json").string());
    if (!f) fail("io", "cannot open stack.json in " + dir);
    nlohmann::json j;
    f >> j;
    SceneStack stack;
    stack.months = j.at("months").get<std::vector<int>>();
    stack.h = j.at("grid").at("h").get<std::size_t>();
    stack.w = j.at("grid").at("w").get<std::size_t>();
    for (int month : stack.months) {
        std::array<Tensor<float>, kBandCount> comp;
        for (std::size_t b = 0; b < kBandCount; ++b) {
            const std::string name = j.at("files").at(std::to_string(month)).at(kBandRoles[b]).get<std::string>();
            comp[b] = load_tensor<float>((fs::path(dir) / name).string());
            if (comp[b].shape() != Shape{stack.h, stack.w}) fail("grid", "stack plane grid mismatch in " + dir);
        }
        stack.bands.push_back(std::move(comp));
    }
    return stack;
}

}  // namespace crophybrid
