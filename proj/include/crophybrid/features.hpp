#pragma once

#include "crophybrid/pipeline.hpp"

namespace crophybrid {

// 13 channels per pixel per timestamp: the six surface-reflectance bands plus
// seven derived indices, in this fixed order (part of the on-disk and model
// contract):
//   blue green red nir swir1 swir2 ndvi gndvi evi savi bsi ndwi ndbi
//
//   NDVI  = (NIR - RED) / (NIR + RED)
//   GNDVI = (NIR - GREEN) / (NIR + GREEN)
//   EVI   = 2.5 (NIR - RED) / (NIR + 6 RED - 7.5 BLUE + 1)
//   SAVI  = 1.5 (NIR - RED) / (NIR + RED + 0.5)
//   BSI   = ((SWIR1 + RED) - (NIR + BLUE)) / ((SWIR1 + RED) + (NIR + BLUE))
//   NDBI  = (SWIR1 - NIR) / (SWIR1 + NIR)
//   NDWI  = (GREEN - NIR) / (GREEN + NIR)

inline constexpr std::size_t kFeatureCount = 13;

enum class SatelliteId { Sentinel2, Landsat8 };

inline std::string to_string(SatelliteId s) { return s == SatelliteId::Sentinel2 ? "sentinel2" : "landsat8"; }

inline SatelliteId parse_satellite(const std::string& s) {
    if (s == "sentinel2" || s == "sentinel-2") return SatelliteId::Sentinel2;
    if (s == "landsat8" || s == "landsat-8") return SatelliteId::Landsat8;
    fail("config", "unknown satellite \"" + s + "\" (expected sentinel2 or landsat8)");
}

// (band name, role) pairs in canonical role order.
inline std::vector<std::pair<std::string, std::string>> band_map(SatelliteId sat) {
    if (sat == SatelliteId::Sentinel2)
        return {{"B2", "blue"}, {"B3", "green"}, {"B4", "red"},
                {"B8", "nir"}, {"B11", "swir1"}, {"B12", "swir2"}};
    return {{"B2", "blue"}, {"B3", "green"}, {"B4", "red"},
            {"B5", "nir"}, {"B6", "swir1"}, {"B7", "swir2"}};
}

// Surface reflectance per pixel, already scaled to [0, 1] by the ingester.
struct BandSet {
    double blue = 0, green = 0, red = 0, nir = 0, swir1 = 0, swir2 = 0;
};

struct FeatureVector {
    std::array<double, kFeatureCount> v{};
};

enum PixelFlag : std::uint8_t {
    kFlagDegenerateDenominator = 1,  // |denominator| < 1e-9, index forced to 0
    kFlagReflectanceRange = 2,       // band outside [-0.1, 1.5]
};

// Pure and deterministic. Near-zero denominators produce 0 plus a flag rather
// than NaN; non-finite inputs are a hard error.
inline FeatureVector compute_indices(const BandSet& b, std::uint8_t* flags = nullptr) {
    const std::array<double, kBandCount> bands = {b.blue, b.green, b.red, b.nir, b.swir1, b.swir2};
    std::uint8_t fl = 0;
    for (double v : bands) {
        if (!std::isfinite(v)) fail("invalid_pixel", "non-finite reflectance");
        if (v < -0.1 || v > 1.5) fl |= kFlagReflectanceRange;
    }
    auto safe_div = [&fl](double num, double den) {
        if (std::abs(den) < 1e-9) {
            fl |= kFlagDegenerateDenominator;
            return 0.0;
        }
        return num / den;
    };
    FeatureVector f;
    for (std::size_t i = 0; i < kBandCount; ++i) f.v[i] = bands[i];
    f.v[6] = safe_div(b.nir - b.red, b.nir + b.red);                                        // ndvi
    f.v[7] = safe_div(b.nir - b.green, b.nir + b.green);                                    // gndvi
    f.v[8] = 2.5 * safe_div(b.nir - b.red, b.nir + 6.0 * b.red - 7.5 * b.blue + 1.0);       // evi
    f.v[9] = 1.5 * safe_div(b.nir - b.red, b.nir + b.red + 0.5);                            // savi
    f.v[10] = safe_div((b.swir1 + b.red) - (b.nir + b.blue), (b.swir1 + b.red) + (b.nir + b.blue));  // bsi
    f.v[11] = safe_div(b.green - b.nir, b.green + b.nir);                                   // ndwi
    f.v[12] = safe_div(b.swir1 - b.nir, b.swir1 + b.nir);                                   // ndbi
    if (flags) *flags = fl;
    return f;
}

// Per-pixel 13-channel time series over the raster grid, plus a quality plane
// marking pixels whose indices were flagged at any timestamp.
struct FeatureCube {
    Tensor<float> values;   // (H, W, t, 13)
    Tensor<float> quality;  // (H, W, t), 1 = flagged
    std::vector<int> months;
    SatelliteId satellite = SatelliteId::Sentinel2;

    std::size_t h() const { return values.shape()[0]; }
    std::size_t w() const { return values.shape()[1]; }
    std::size_t t() const { return values.shape()[2]; }
};

inline FeatureCube build_feature_cube(const SceneStack& stack, SatelliteId sat) {
    const std::size_t nm = stack.months.size();
    if (nm == 0) fail("grid", "empty scene stack");
    for (const auto& comp : stack.bands)
        for (const auto& plane : comp)
            if (plane.shape() != Shape{stack.h, stack.w})
                fail("grid", "composite grid mismatch: " + shape_str(plane.shape()));
    FeatureCube cube;
    cube.satellite = sat;
    cube.months = stack.months;
    cube.values = Tensor<float>(Shape{stack.h, stack.w, nm, kFeatureCount});
    cube.quality = Tensor<float>(Shape{stack.h, stack.w, nm});
    for (std::size_t y = 0; y < stack.h; ++y)
        for (std::size_t x = 0; x < stack.w; ++x) {
            const std::size_t pix = y * stack.w + x;
            for (std::size_t m = 0; m < nm; ++m) {
                BandSet b;
                b.blue = stack.bands[m][0][pix];
                b.green = stack.bands[m][1][pix];
                b.red = stack.bands[m][2][pix];
                b.nir = stack.bands[m][3][pix];
                b.swir1 = stack.bands[m][4][pix];
                b.swir2 = stack.bands[m][5][pix];
                std::uint8_t fl = 0;
                const FeatureVector f = compute_indices(b, &fl);
                float* dst = cube.values.data() + ((y * stack.w + x) * nm + m) * kFeatureCount;
                for (std::size_t c = 0; c < kFeatureCount; ++c) dst[c] = static_cast<float>(f.v[c]);
                cube.quality[(y * stack.w + x) * nm + m] = fl ? 1.0f : 0.0f;
            }
        }
    return cube;
}

// ---------------------------------------------------------------------------
// Cube files: tensor binary + JSON sidecar
//   {"satellite":, "months":[...], "channel_order":[13 names], "grid":{"h","w"}}
// ---------------------------------------------------------------------------

inline nlohmann::json channel_order_json() {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < kBandCount; ++i) arr.push_back(kBandRoles[i]);
    for (const char* name : {"ndvi", "gndvi", "evi", "savi", "bsi", "ndwi", "ndbi"}) arr.push_back(name);
    return arr;
}

inline void save_feature_cube(const FeatureCube& cube, const std::string& prefix, const nlohmann::json& meta) {
    save_tensor(cube.values, prefix + ".ctns");
    save_tensor(cube.quality, prefix + ".quality.ctns");
    nlohmann::json j;
    j["satellite"] = to_string(cube.satellite);
    j["months"] = cube.months;
    j["channel_order"] = channel_order_json();
    j["grid"] = {{"h", cube.h()}, {"w", cube.w()}};
    j["meta"] = meta;
    std::ofstream f(prefix + ".json", std::ios::trunc);
    if (!f) fail("io", "cannot write sidecar: " + prefix + ".json");
    f << j.dump(2) << "\n";
}

inline FeatureCube load_feature_cube(const std::string& prefix) {
    FeatureCube cube;
    cube.values = load_tensor<float>(prefix + ".ctns");
    if (cube.values.rank() != 4 || cube.values.shape()[3] != kFeatureCount)
        fail("shape", "feature cube must be (H,W,t,13), got " + shape_str(cube.values.shape()));
    std::ifstream f(prefix + ".json");
    if (!f) fail("io", "cannot open sidecar: " + prefix + ".json");
    nlohmann::json j;
    f >> j;
    cube.satellite = parse_satellite(j.at("satellite").get<std::string>());
    cube.months = j.at("months").get<std::vector<int>>();
    if (cube.months.size() != cube.t()) fail("config", "sidecar month count does not match cube");
    if (j.at("channel_order") != channel_order_json())
        fail("config", "sidecar channel order does not match this build");
    std::ifstream q(prefix + ".quality.ctns");
    if (q.good()) {
        q.close();
        cube.quality = load_tensor<float>(prefix + ".quality.ctns");
    } else {
        cube.quality = Tensor<float>(Shape{cube.h(), cube.w(), cube.t()});
    }
    return cube;
}

}  // namespace crophybrid
