#pragma once

#include <map>
#include <set>

#include "crophybrid/features.hpp"
#include "crophybrid/rng.hpp"

namespace crophybrid {

// ---------------------------------------------------------------------------
// Parcels: surveyed field polygons carrying one crop label each. Parcels are
// the unit of the train/test split (never pixels) and of majority voting.
// ---------------------------------------------------------------------------

enum class SplitTag { None, Train, Test };

struct Parcel {
    int id = 0;  // >= 1; pixel value 0 means "outside every parcel"
    std::vector<std::vector<std::array<double, 2>>> rings;  // closed (first == last)
    std::string class_name;
    int class_id = -1;
    SplitTag split = SplitTag::None;
};

struct RasterizedParcels {
    Tensor<float> parcel_ids;  // (H, W), 0 outside
    Tensor<float> labels;      // (H, W), class id, outside_class outside
};

// Even-odd rule at pixel centers (x + 0.5, y + 0.5). Pixels outside every
// parcel get id 0 and the caller's outside class ("Others" in the survey
// flow, -1 for unlabeled).
inline RasterizedParcels rasterize_parcels(const std::vector<Parcel>& parcels, std::size_t h, std::size_t w,
                                           int outside_class = -1) {
    RasterizedParcels out;
    out.parcel_ids = Tensor<float>(Shape{h, w}, 0.0f);
    out.labels = Tensor<float>(Shape{h, w}, static_cast<float>(outside_class));
    std::vector<double> xs;
    for (const auto& p : parcels) {
        if (p.id < 1) fail("geometry", "parcel ids must be >= 1, got " + std::to_string(p.id));
        double ymin = 1e300, ymax = -1e300;
        for (const auto& ring : p.rings) {
            if (ring.size() < 4 || ring.front() != ring.back())
                fail("geometry", "parcel " + std::to_string(p.id) + " has an unclosed or degenerate ring");
            for (const auto& pt : ring) {
                ymin = std::min(ymin, pt[1]);
                ymax = std::max(ymax, pt[1]);
            }
        }
        const std::size_t y0 = static_cast<std::size_t>(std::max(0.0, std::floor(ymin)));
        const std::size_t y1 = std::min(h, static_cast<std::size_t>(std::max(0.0, std::ceil(ymax))));
        for (std::size_t y = y0; y < y1; ++y) {
            const double yc = static_cast<double>(y) + 0.5;
            xs.clear();
            for (const auto& ring : p.rings)
                for (std::size_t e = 0; e + 1 < ring.size(); ++e) {
                    const double ya = ring[e][1], yb = ring[e + 1][1];
                    if ((ya <= yc && yc < yb) || (yb <= yc && yc < ya))
                        xs.push_back(ring[e][0] + (yc - ya) * (ring[e + 1][0] - ring[e][0]) / (yb - ya));
                }
            std::sort(xs.begin(), xs.end());
            for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
                const double a = xs[i], b = xs[i + 1];
                std::ptrdiff_t x = static_cast<std::ptrdiff_t>(std::ceil(a - 0.5));
                if (x < 0) x = 0;
                for (; x < static_cast<std::ptrdiff_t>(w) && static_cast<double>(x) + 0.5 < b; ++x) {
                    out.parcel_ids[y * w + static_cast<std::size_t>(x)] = static_cast<float>(p.id);
                    out.labels[y * w + static_cast<std::size_t>(x)] = static_cast<float>(p.class_id);
                }
            }
        }
    }
    return out;
}

// Point-in-polygon by the same even-odd rule (test helper and API surface).
inline bool point_in_parcel(const Parcel& p, double px, double py) {
    bool inside = false;
    for (const auto& ring : p.rings)
        for (std::size_t e = 0; e + 1 < ring.size(); ++e) {
            const double ya = ring[e][1], yb = ring[e + 1][1];
            if ((ya <= py && py < yb) || (yb <= py && py < ya)) {
                const double xint = ring[e][0] + (py - ya) * (ring[e + 1][0] - ring[e][0]) / (yb - ya);
                if (px < xint) inside = !inside;
            }
        }
    return inside;
}

// Per-class stratified shuffle of whole parcels; pixels inherit the parcel
// tag downstream. Classes with fewer than two parcels go wholly to train.
inline void split_parcels(std::vector<Parcel>& parcels, double ratio, std::uint64_t seed,
                          Warnings* warnings = nullptr) {
    if (!(ratio > 0.0 && ratio < 1.0)) fail("config", "split ratio must be in (0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < parcels.size(); ++i) {
        if (parcels[i].class_id < 0)
            fail("config", "parcel " + std::to_string(parcels[i].id) + " has no class id");
        by_class[parcels[i].class_id].push_back(i);
    }
    Rng rng(seed);
    for (auto& [cls, idx] : by_class) {
        if (idx.size() < 2) {
            for (std::size_t i : idx) parcels[i].split = SplitTag::Train;
            warn(warnings, "class " + std::to_string(cls) + " has fewer than 2 parcels; all assigned to train");
            continue;
        }
        rng.shuffle(idx);
        const std::size_t n = idx.size();
        std::size_t ntrain = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
        ntrain = std::min(std::max<std::size_t>(ntrain, 1), n - 1);
        for (std::size_t i = 0; i < n; ++i)
            parcels[idx[i]].split = i < ntrain ? SplitTag::Train : SplitTag::Test;
    }
}

// ---------------------------------------------------------------------------
// Patch sampling: sliding (r, r) window over labeled pixels, edge-replication
// padding at the borders, center-pixel label and parcel id per patch.
// ---------------------------------------------------------------------------

struct PatchSplit {
    Tensor<float> x;  // (N, r, r, t, c); default-empty when N == 0
    std::vector<int> y;
    std::vector<int> parcel;
    std::vector<std::array<int, 2>> center;  // (row, col)

    std::size_t size() const { return y.size(); }
};

struct PatchSet {
    PatchSplit train, test;
    std::size_t r = 7, stride = 1;
    std::uint64_t seed = 0;
    double ratio = 0.6;
    std::vector<std::string> class_names;
};

inline void extract_patch(const FeatureCube& cube, std::size_t cy, std::size_t cx, std::size_t r, float* dst) {
    const std::size_t H = cube.h(), W = cube.w();
    const std::size_t tc = cube.t() * kFeatureCount;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(r / 2);
    for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
        for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
            const std::size_t sy = static_cast<std::size_t>(
                std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cy) + dy, 0, static_cast<std::ptrdiff_t>(H) - 1));
            const std::size_t sx = static_cast<std::size_t>(
                std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cx) + dx, 0, static_cast<std::ptrdiff_t>(W) - 1));
            std::memcpy(dst, cube.values.data() + (sy * W + sx) * tc, tc * sizeof(float));
            dst += tc;
        }
}

// max_patches = 0 keeps every labeled center; otherwise a systematic
// subsample over the scan order keeps the class/split mix.
inline PatchSet sample_patches(const FeatureCube& cube, const Tensor<float>& labels,
                               const Tensor<float>& parcel_ids, const std::vector<Parcel>& parcels,
                               std::size_t r, std::size_t stride, std::size_t max_patches = 0) {
    const std::size_t H = cube.h(), W = cube.w();
    if (r % 2 == 0) fail("config", "patch size r must be odd, got " + std::to_string(r));
    if (r > H || r > W)
        fail("shape", "patch size " + std::to_string(r) + " exceeds grid " + std::to_string(H) + "x" + std::to_string(W));
    if (stride < 1) fail("config", "stride must be >= 1");
    if (labels.shape() != Shape{H, W} || parcel_ids.shape() != Shape{H, W})
        fail("grid", "label/parcel planes must match the cube grid");

    std::map<int, SplitTag> tag_of;
    for (const auto& p : parcels) tag_of[p.id] = p.split;

    struct Center {
        std::size_t y, x;
        int label, parcel;
        SplitTag tag;
    };
    std::vector<Center> centers;
    for (std::size_t y = 0; y < H; y += stride)
        for (std::size_t x = 0; x < W; x += stride) {
            const int label = static_cast<int>(labels[y * W + x]);
            if (label < 0) continue;
            const int pid = static_cast<int>(parcel_ids[y * W + x]);
            const auto it = tag_of.find(pid);
            if (it == tag_of.end() || it->second == SplitTag::None) continue;
            centers.push_back({y, x, label, pid, it->second});
        }

    std::vector<Center> chosen;
    if (max_patches > 0 && centers.size() > max_patches) {
        chosen.reserve(max_patches);
        for (std::size_t i = 0; i < max_patches; ++i)
            chosen.push_back(centers[i * centers.size() / max_patches]);
    } else {
        chosen = std::move(centers);
    }

    std::size_t ntrain = 0, ntest = 0;
    for (const auto& c : chosen) (c.tag == SplitTag::Train ? ntrain : ntest) += 1;

    PatchSet set;
    set.r = r;
    set.stride = stride;
    auto fill_split = [&](PatchSplit& split, SplitTag tag, std::size_t count) {
        if (count == 0) return;
        split.x = Tensor<float>(Shape{count, r, r, cube.t(), kFeatureCount});
        const std::size_t sample = r * r * cube.t() * kFeatureCount;
        std::size_t i = 0;
        for (const auto& c : chosen) {
            if (c.tag != tag) continue;
            extract_patch(cube, c.y, c.x, r, split.x.data() + i * sample);
            split.y.push_back(c.label);
            split.parcel.push_back(c.parcel);
            split.center.push_back({static_cast<int>(c.y), static_cast<int>(c.x)});
            ++i;
        }
    };
    fill_split(set.train, SplitTag::Train, ntrain);
    fill_split(set.test, SplitTag::Test, ntest);
    return set;
}

// ---------------------------------------------------------------------------
// Synthetic phenology dataset: the grid is tiled into rectangular parcels,
// each class follows a Gaussian NDVI bump over the months (peaking at its
// configured month index), bands carry i.i.d. Gaussian noise on top. The
// desk-scale stand-in for survey data.
// ---------------------------------------------------------------------------

struct PhenologyParams {
    double peak_month = 5;  // 1-based month index within the series
    double amplitude = 0.8;
    double width = 1.0;
};

struct SynthSpec {
    std::size_t classes = 5;
    std::size_t h = 64, w = 64;
    std::vector<int> months = {3, 4, 5, 6, 7, 8, 9, 10, 11};
    double noise_sigma = 0.05;
    std::size_t parcel_min = 8, parcel_max = 14;
    std::vector<PhenologyParams> phenology;  // one per class; defaulted if empty
    std::uint64_t seed = 42;
};

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = nlohmann::json::object();
    j["classes"] = s.classes;
    j["grid"] = {{"h", s.h}, {"w", s.w}};
    j["months"] = s.months;
    j["noise_sigma"] = s.noise_sigma;
    j["parcel_size"] = {{"min", s.parcel_min}, {"max", s.parcel_max}};
    j["seed"] = s.seed;
    j["phenology"] = nlohmann::json::array();
    for (const auto& p : s.phenology)
        j["phenology"].push_back({{"peak_month", p.peak_month}, {"amplitude", p.amplitude}, {"width", p.width}});
}

inline void from_json(const nlohmann::json& j, SynthSpec& s) {
    s = SynthSpec{};
    s.classes = j.value("classes", s.classes);
    if (j.contains("grid")) {
        s.h = j["grid"].value("h", s.h);
        s.w = j["grid"].value("w", s.w);
    }
    s.months = j.value("months", s.months);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    if (j.contains("parcel_size")) {
        s.parcel_min = j["parcel_size"].value("min", s.parcel_min);
        s.parcel_max = j["parcel_size"].value("max", s.parcel_max);
    }
    s.seed = j.value("seed", s.seed);
    s.phenology.clear();
    for (const auto& p : j.value("phenology", nlohmann::json::array()))
        s.phenology.push_back({p.at("peak_month").get<double>(), p.value("amplitude", 0.8), p.value("width", 1.0)});
}

// Distinct integer peak months spread across the season.
inline std::vector<PhenologyParams> default_phenology(std::size_t classes, std::size_t t) {
    std::vector<PhenologyParams> ph(classes);
    const double amps[] = {0.80, 0.85, 0.75, 0.90, 0.70, 0.82, 0.78, 0.88};
    const double widths[] = {1.0, 1.2, 0.9, 1.1, 1.3, 1.0, 1.2, 0.9};
    for (std::size_t k = 0; k < classes; ++k) {
        const double peak = classes == 1 ? (1.0 + t) / 2.0
                                         : 1.0 + std::round(static_cast<double>(k) *
                                                            static_cast<double>(t - 1) /
                                                            static_cast<double>(classes - 1));
        ph[k] = {peak, amps[k % 8], widths[k % 8]};
    }
    return ph;
}

struct SynthData {
    FeatureCube cube;
    Tensor<float> labels;      // (H, W) class ids
    Tensor<float> parcel_ids;  // (H, W)
    std::vector<Parcel> parcels;
    std::vector<std::string> class_names;
};

inline void validate(const SynthSpec& s) {
    if (s.classes < 2) fail("config", "synthetic spec needs at least 2 classes");
    if (s.noise_sigma < 0) fail("config", "noise sigma must be >= 0");
    if (s.months.empty()) fail("config", "synthetic spec needs at least one month");
    for (std::size_t i = 1; i < s.months.size(); ++i)
        if (s.months[i] <= s.months[i - 1]) fail("config", "months must be strictly increasing");
    if (s.parcel_min < 2 || s.parcel_max < s.parcel_min)
        fail("config", "parcel size range invalid");
    if (s.parcel_max > s.h || s.parcel_max > s.w)
        fail("config", "parcel_max exceeds the grid");
}

inline SynthData synth_generate(const SynthSpec& spec_in) {
    SynthSpec spec = spec_in;
    validate(spec);
    const std::size_t t = spec.months.size();
    if (spec.phenology.empty()) spec.phenology = default_phenology(spec.classes, t);
    if (spec.phenology.size() != spec.classes)
        fail("config", "phenology entries must match class count");
    for (const auto& p : spec.phenology)
        if (p.peak_month < 1.0 || p.peak_month > static_cast<double>(t))
            fail("config", "peak month " + std::to_string(p.peak_month) + " outside [1, t]");

    Rng rng(spec.seed);
    auto cut = [&](std::size_t total) {
        std::vector<std::size_t> sizes;
        std::size_t used = 0;
        while (used < total) {
            std::size_t s = spec.parcel_min + static_cast<std::size_t>(rng.below(spec.parcel_max - spec.parcel_min + 1));
            if (total - used < spec.parcel_min + s) s = total - used;  // absorb the remainder
            sizes.push_back(s);
            used += s;
        }
        return sizes;
    };

    SynthData out;
    const auto row_sizes = cut(spec.h);
    std::size_t y0 = 0;
    int next_id = 1;
    for (std::size_t bh : row_sizes) {
        const auto col_sizes = cut(spec.w);
        std::size_t x0 = 0;
        for (std::size_t bw : col_sizes) {
            Parcel p;
            p.id = next_id++;
            const double xa = static_cast<double>(x0), xb = static_cast<double>(x0 + bw);
            const double ya = static_cast<double>(y0), yb = static_cast<double>(y0 + bh);
            p.rings = {{{xa, ya}, {xb, ya}, {xb, yb}, {xa, yb}, {xa, ya}}};
            out.parcels.push_back(std::move(p));
            x0 += bw;
        }
        y0 += bh;
    }

    // near-balanced classes over a shuffled parcel order
    std::vector<std::size_t> order(out.parcels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    out.class_names.resize(spec.classes);
    for (std::size_t k = 0; k < spec.classes; ++k) out.class_names[k] = "class_" + std::to_string(k);
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.parcels[order[i]].class_id = static_cast<int>(i % spec.classes);
        out.parcels[order[i]].class_name = out.class_names[i % spec.classes];
    }

    auto raster = rasterize_parcels(out.parcels, spec.h, spec.w);
    out.labels = std::move(raster.labels);
    out.parcel_ids = std::move(raster.parcel_ids);

    // per-class NDVI bump at month index mi (1-based)
    auto bump = [&](int k, std::size_t mi) {
        const auto& p = spec.phenology[static_cast<std::size_t>(k)];
        const double d = (static_cast<double>(mi) - p.peak_month) / p.width;
        return p.amplitude * std::exp(-0.5 * d * d);
    };

    SceneStack stack;
    stack.h = spec.h;
    stack.w = spec.w;
    stack.months = spec.months;
    stack.bands.resize(t);
    for (auto& comp : stack.bands)
        for (auto& plane : comp) plane = Tensor<float>(Shape{spec.h, spec.w});

    for (std::size_t y = 0; y < spec.h; ++y)
        for (std::size_t x = 0; x < spec.w; ++x) {
            const int k = static_cast<int>(out.labels[y * spec.w + x]);
            for (std::size_t m = 0; m < t; ++m) {
                const double g = bump(k, m + 1);
                const double nir = 0.3 * (1.0 + g);
                const double red = 0.3 * (1.0 - g);
                const double bands[kBandCount] = {
                    0.7 * red,               // blue
                    0.8 * red + 0.04 * g,    // green
                    red,
                    nir,
                    0.25 * (1.0 - 0.5 * g),  // swir1
                    0.20 * (1.0 - 0.5 * g),  // swir2
                };
                for (std::size_t b = 0; b < kBandCount; ++b) {
                    const double noisy = bands[b] + (spec.noise_sigma > 0 ? spec.noise_sigma * rng.normal() : 0.0);
                    stack.bands[m][b][y * spec.w + x] = static_cast<float>(noisy);
                }
            }
        }

    out.cube = build_feature_cube(stack, SatelliteId::Sentinel2);
    return out;
}

// ---------------------------------------------------------------------------
// Disk formats.
// Parcels: JSON list of {id, class, rings: [[[x, y], ...]]}.
// Labels CSV: "parcel_id,class_name" rows (supplies or overrides classes).
// Patch sets: tensor-binary shards + JSON index.
// ---------------------------------------------------------------------------

inline void save_parcels(const std::vector<Parcel>& parcels, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : parcels) {
        nlohmann::json rings = nlohmann::json::array();
        for (const auto& ring : p.rings) {
            nlohmann::json r = nlohmann::json::array();
            for (const auto& pt : ring) r.push_back({pt[0], pt[1]});
            rings.push_back(r);
        }
        arr.push_back({{"id", p.id}, {"class", p.class_name}, {"rings", rings}});
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("io", "cannot write parcels: " + path);
    f << arr.dump(2) << "\n";
}

inline std::vector<Parcel> load_parcels(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("io", "cannot open parcels: " + path);
    nlohmann::json arr;
    try {
        f >> arr;
    } catch (const std::exception& e) {
        fail("io", "bad JSON in " + path + ": " + e.what());
    }
    std::vector<Parcel> parcels;
    for (const auto& j : arr) {
        Parcel p;
        p.id = j.at("id").get<int>();
        p.class_name = j.value("class", "");
        for (const auto& ring : j.at("rings")) {
            std::vector<std::array<double, 2>> r;
            for (const auto& pt : ring) r.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
            p.rings.push_back(std::move(r));
        }
        parcels.push_back(std::move(p));
    }
    return parcels;
}

inline std::map<int, std::string> load_labels_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("io", "cannot open labels csv: " + path);
    std::map<int, std::string> out;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) fail("io", "labels csv row without comma: \"" + line + "\"");
        const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
        if (first && a == "parcel_id") {  // optional header
            first = false;
            continue;
        }
        first = false;
        try {
            out[std::stoi(a)] = b;
        } catch (const std::exception&) {
            fail("io", "bad parcel id \"" + a + "\" in labels csv");
        }
    }
    return out;
}

// Builds the class table and assigns class ids. "Others" (when present) is
// class 0; remaining names follow in sorted order.
inline std::vector<std::string> assign_class_ids(std::vector<Parcel>& parcels) {
    std::set<std::string> names;
    for (const auto& p : parcels) {
        if (p.class_name.empty()) fail("config", "parcel " + std::to_string(p.id) + " has no class name");
        names.insert(p.class_name);
    }
    std::vector<std::string> table;
    if (names.count("Others")) table.push_back("Others");
    for (const auto& n : names)
        if (n != "Others") table.push_back(n);
    for (auto& p : parcels)
        p.class_id = static_cast<int>(std::find(table.begin(), table.end(), p.class_name) - table.begin());
    return table;
}

inline void save_patch_set(const PatchSet& set, const std::string& dir, const nlohmann::json& meta) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json index;
    index["r"] = set.r;
    index["stride"] = set.stride;
    index["seed"] = set.seed;
    index["ratio"] = set.ratio;
    index["class_names"] = set.class_names;
    index["meta"] = meta;
    auto dump_split = [&](const PatchSplit& split, const std::string& name) {
        nlohmann::json js;
        js["count"] = split.size();
        std::map<std::string, std::size_t> per_class;
        for (int y : split.y) per_class[set.class_names.at(static_cast<std::size_t>(y))] += 1;
        js["per_class"] = per_class;
        if (split.size() > 0) {
            save_tensor(split.x, (fs::path(dir) / ("patches_" + name + ".ctns")).string());
            const std::size_t n = split.size();
            Tensor<float> yt(Shape{n}), pt(Shape{n}), ct(Shape{n, 2});
            for (std::size_t i = 0; i < n; ++i) {
                yt[i] = static_cast<float>(split.y[i]);
                pt[i] = static_cast<float>(split.parcel[i]);
                ct[i * 2] = static_cast<float>(split.center[i][0]);
                ct[i * 2 + 1] = static_cast<float>(split.center[i][1]);
            }
            save_tensor(yt, (fs::path(dir) / ("labels_" + name + ".ctns")).string());
            save_tensor(pt, (fs::path(dir) / ("parcels_" + name + ".ctns")).string());
            save_tensor(ct, (fs::path(dir) / ("centers_" + name + ".ctns")).string());
        }
        index["splits"][name] = js;
    };
    dump_split(set.train, "train");
    dump_split(set.test, "test");
    std::ofstream f((fs::path(dir) / "index.json").string(), std::ios::trunc);
    if (!f) fail("io", "cannot write index.json in " + dir);
    f << index.dump(2) << "\n";
}

inline PatchSet load_patch_set(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream f((fs::path(dir) / "index.json").string());
    if (!f) fail("io", "cannot open index.json in " + dir);
    nlohmann::json index;
    f >> index;
    PatchSet set;
    set.r = index.at("r").get<std::size_t>();
    set.stride = index.at("stride").get<std::size_t>();
    set.seed = index.value("seed", std::uint64_t(0));
    set.ratio = index.value("ratio", 0.6);
    set.class_names = index.at("class_names").get<std::vector<std::string>>();
    auto read_split = [&](PatchSplit& split, const std::string& name) {
        const std::size_t count = index.at("splits").at(name).at("count").get<std::size_t>();
        if (count == 0) return;
        split.x = load_tensor<float>((fs::path(dir) / ("patches_" + name + ".ctns")).string());
        Tensor<float> yt = load_tensor<float>((fs::path(dir) / ("labels_" + name + ".ctns")).string());
        Tensor<float> pt = load_tensor<float>((fs::path(dir) / ("parcels_" + name + ".ctns")).string());
        Tensor<float> ct = load_tensor<float>((fs::path(dir) / ("centers_" + name + ".ctns")).string());
        if (split.x.shape()[0] != count || yt.size() != count)
            fail("io", "patch shard sizes disagree with index in " + dir);
        for (std::size_t i = 0; i < count; ++i) {
            split.y.push_back(static_cast<int>(yt[i]));
            split.parcel.push_back(static_cast<int>(pt[i]));
            split.center.push_back({static_cast<int>(ct[i * 2]), static_cast<int>(ct[i * 2 + 1])});
        }
    };
    read_split(set.train, "train");
    read_split(set.test, "test");
    return set;
}

}  // namespace crophybrid
