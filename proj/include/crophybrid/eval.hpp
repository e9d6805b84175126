#pragma once

#include <iomanip>
#include <ostream>
#include <set>

#include "crophybrid/tensor.hpp"

#include <json.hpp>

namespace crophybrid {

// ---------------------------------------------------------------------------
// Confusion counts and the derived metric bundle. Rows are truth, columns are
// prediction. Per-class F1 = 2PR/(P+R), defined as 0 when P+R = 0; weighted
// F1 averages per-class F1 with truth-support weights.
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::int64_t> counts;  // k*k, row-major (truth, pred)

    explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}

    std::int64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * k + pred]; }
    std::int64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }

    std::int64_t total() const {
        std::int64_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
};

struct ClassMetrics {
    double precision = 0, recall = 0, f1 = 0;
    std::int64_t support = 0;
};

struct MetricsReport {
    double accuracy = 0, weighted_f1 = 0;
    std::vector<ClassMetrics> per_class;
    ConfusionMatrix confusion;
    std::int64_t evaluated = 0;
};

inline MetricsReport compute_metrics(const std::vector<int>& pred, const std::vector<int>& truth,
                                     std::size_t classes) {
    if (pred.size() != truth.size()) fail("metrics", "prediction/truth length mismatch");
    if (pred.empty()) fail("metrics", "zero evaluated samples");
    MetricsReport r;
    r.confusion = ConfusionMatrix(classes);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
            pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= classes)
            fail("metrics", "label out of range at sample " + std::to_string(i));
        r.confusion.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i])) += 1;
    }
    r.evaluated = static_cast<std::int64_t>(pred.size());
    std::int64_t trace = 0;
    for (std::size_t c = 0; c < classes; ++c) trace += r.confusion.at(c, c);
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.evaluated);

    r.per_class.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        std::int64_t tp = r.confusion.at(c, c), fn = 0, fp = 0;
        for (std::size_t o = 0; o < classes; ++o) {
            if (o != c) {
                fn += r.confusion.at(c, o);
                fp += r.confusion.at(o, c);
            }
        }
        auto& m = r.per_class[c];
        m.support = tp + fn;
        m.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        m.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        r.weighted_f1 += static_cast<double>(m.support) / static_cast<double>(r.evaluated) * m.f1;
    }
    return r;
}

// Planes hold integer class ids; mask (same grid, nonzero = evaluate) excludes
// unlabeled pixels. An empty mask evaluates everything.
inline MetricsReport pixel_metrics(const Tensor<float>& pred, const Tensor<float>& truth,
                                   const std::vector<std::uint8_t>& mask, std::size_t classes) {
    if (!pred.same_shape(truth)) fail("grid", "prediction and truth planes differ: " + shape_str(pred.shape()));
    if (!mask.empty() && mask.size() != pred.size()) fail("grid", "mask size does not match planes");
    std::vector<int> p, t;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        p.push_back(static_cast<int>(pred[i]));
        t.push_back(static_cast<int>(truth[i]));
    }
    if (p.empty()) fail("metrics", "zero evaluated pixels");
    return compute_metrics(p, t, classes);
}

// ---------------------------------------------------------------------------
// Majority vote per parcel; ties break to the lowest class index. Evaluated
// pixels must carry a parcel id (> 0). Expected parcels with no evaluated
// pixel are skipped with a warning.
// ---------------------------------------------------------------------------
inline std::map<int, int> parcel_vote(const Tensor<float>& pred, const Tensor<float>& parcel_ids,
                                      const std::vector<std::uint8_t>& mask,
                                      const std::vector<int>& expected_parcels = {},
                                      Warnings* warnings = nullptr) {
    if (!pred.same_shape(parcel_ids)) fail("grid", "prediction and parcel planes differ");
    if (!mask.empty() && mask.size() != pred.size()) fail("grid", "mask size does not match planes");
    std::map<int, std::map<int, std::int64_t>> hist;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        const int pid = static_cast<int>(parcel_ids[i]);
        if (pid <= 0) fail("metrics", "evaluated pixel without parcel id at index " + std::to_string(i));
        hist[pid][static_cast<int>(pred[i])] += 1;
    }
    std::map<int, int> voted;
    for (const auto& [pid, h] : hist) {
        int best_label = -1;
        std::int64_t best_count = -1;
        for (const auto& [label, count] : h)  // ascending label order: first max wins
            if (count > best_count) {
                best_count = count;
                best_label = label;
            }
        voted[pid] = best_label;
    }
    for (int pid : expected_parcels)
        if (!voted.count(pid))
            warn(warnings, "parcel " + std::to_string(pid) + " has no predicted pixels; skipped");
    return voted;
}

// Mode of truth labels per parcel over the evaluated pixels.
inline std::map<int, int> parcel_truth(const Tensor<float>& truth, const Tensor<float>& parcel_ids,
                                       const std::vector<std::uint8_t>& mask) {
    return parcel_vote(truth, parcel_ids, mask);
}

// One sample per parcel.
inline MetricsReport parcel_metrics(const std::map<int, int>& voted, const std::map<int, int>& truth,
                                    std::size_t classes) {
    std::vector<int> p, t;
    for (const auto& [pid, label] : voted) {
        const auto it = truth.find(pid);
        if (it == truth.end()) fail("metrics", "no truth label for parcel " + std::to_string(pid));
        p.push_back(label);
        t.push_back(it->second);
    }
    if (p.empty()) fail("metrics", "zero evaluated parcels");
    return compute_metrics(p, t, classes);
}

// ---------------------------------------------------------------------------
// Class palette and P6 map rendering. "Others" is black by convention;
// unlabeled pixels (-1) render black as well.
// ---------------------------------------------------------------------------

struct ClassPalette {
    std::vector<std::string> names;
    std::vector<std::array<std::uint8_t, 3>> colors;

    void validate() const {
        if (names.size() != colors.size()) fail("palette", "palette names/colors length mismatch");
        std::set<std::uint32_t> seen;
        for (const auto& c : colors) {
            const std::uint32_t key = (std::uint32_t(c[0]) << 16) | (std::uint32_t(c[1]) << 8) | c[2];
            if (!seen.insert(key).second) fail("palette", "duplicate color in palette");
        }
    }

    static ClassPalette default_for(const std::vector<std::string>& class_names) {
        static constexpr std::array<std::array<std::uint8_t, 3>, 20> base = {{
            {230, 159, 0},  {86, 180, 233},  {0, 158, 115},  {240, 228, 66},  {0, 114, 178},
            {213, 94, 0},   {204, 121, 167}, {148, 103, 189}, {44, 160, 44},  {255, 127, 14},
            {31, 119, 180}, {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207},
            {174, 199, 232}, {255, 152, 150}, {197, 176, 213}, {196, 156, 148}, {247, 182, 210},
        }};
        ClassPalette p;
        p.names = class_names;
        std::size_t next = 0;
        for (const auto& name : class_names) {
            if (name == "Others") {
                p.colors.push_back({0, 0, 0});
            } else if (next < base.size()) {
                p.colors.push_back(base[next++]);
            } else {
                // golden-ratio hue walk past the fixed table
                const double h = std::fmod(0.618033988749895 * static_cast<double>(next++), 1.0) * 6.0;
                const int i = static_cast<int>(h);
                const double f = h - i;
                const auto q = static_cast<std::uint8_t>(230.0 * (1.0 - f));
                const auto tt = static_cast<std::uint8_t>(230.0 * f);
                std::array<std::uint8_t, 3> c{};
                switch (i % 6) {
                    case 0: c = {230, tt, 25}; break;
                    case 1: c = {q, 230, 25}; break;
                    case 2: c = {25, 230, tt}; break;
                    case 3: c = {25, q, 230}; break;
                    case 4: c = {tt, 25, 230}; break;
                    default: c = {230, 25, q}; break;
                }
                p.colors.push_back(c);
            }
        }
        p.validate();
        return p;
    }
};

inline void to_json(nlohmann::json& j, const ClassPalette& p) {
    j = nlohmann::json::object();
    for (std::size_t i = 0; i < p.names.size(); ++i) j[p.names[i]] = p.colors[i];
}

inline ClassPalette palette_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names) {
    ClassPalette p;
    p.names = class_names;
    for (const auto& name : class_names) {
        if (!j.contains(name)) fail("palette", "no palette entry for class \"" + name + "\"");
        p.colors.push_back(j.at(name).get<std::array<std::uint8_t, 3>>());
    }
    p.validate();
    return p;
}

// One pixel per raster cell, binary PPM (P6).
inline void render_map(const Tensor<float>& labels, const ClassPalette& palette, const std::string& path) {
    if (labels.rank() != 2) fail("shape", "label plane must be rank 2, got " + shape_str(labels.shape()));
    palette.validate();
    const std::size_t h = labels.shape()[0], w = labels.shape()[1];
    std::vector<std::uint8_t> rgb(h * w * 3, 0);
    for (std::size_t i = 0; i < h * w; ++i) {
        const int label = static_cast<int>(labels[i]);
        if (label < 0) continue;  // unlabeled -> black
        if (static_cast<std::size_t>(label) >= palette.colors.size())
            fail("palette", "no palette entry for class id " + std::to_string(label));
        const auto& c = palette.colors[static_cast<std::size_t>(label)];
        rgb[i * 3] = c[0];
        rgb[i * 3 + 1] = c[1];
        rgb[i * 3 + 2] = c[2];
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open for write: " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!f) fail("io", "short write: " + path);
}

struct PpmImage {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> rgb;
};

inline PpmImage load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("io", "cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") fail("io", "not a P6 file: " + path);
    std::size_t w, h, maxval;
    f >> w >> h >> maxval;
    f.get();  // single whitespace after header
    if (maxval != 255) fail("io", "unsupported maxval in " + path);
    PpmImage img;
    img.h = h;
    img.w = w;
    img.rgb.resize(h * w * 3);
    f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!f) fail("io", "truncated P6 payload: " + path);
    return img;
}

// ---------------------------------------------------------------------------
// Report serialization: JSON bundle plus a human-readable table.
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_json(const MetricsReport& r, const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["weighted_f1"] = r.weighted_f1;
    j["evaluated"] = r.evaluated;
    nlohmann::json pc = nlohmann::json::object();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        pc[class_names.at(c)] = {{"p", m.precision}, {"r", m.recall}, {"f1", m.f1}, {"support", m.support}};
    }
    j["per_class"] = pc;
    nlohmann::json conf = nlohmann::json::array();
    for (std::size_t t = 0; t < r.confusion.k; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < r.confusion.k; ++p) row.push_back(r.confusion.at(t, p));
        conf.push_back(row);
    }
    j["confusion"] = conf;
    return j;
}

inline void print_metrics_table(std::ostream& os, const std::string& title, const MetricsReport& r,
                                const std::vector<std::string>& class_names) {
    os << title << ": accuracy " << std::fixed << std::setprecision(4) << r.accuracy
       << ", weighted F1 " << r.weighted_f1 << " (" << r.evaluated << " samples)\n";
    os << "  " << std::left << std::setw(16) << "class" << std::right << std::setw(10) << "precision"
       << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << "\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        os << "  " << std::left << std::setw(16) << class_names.at(c) << std::right << std::setw(10)
           << std::setprecision(4) << m.precision << std::setw(10) << m.recall << std::setw(10) << m.f1
           << std::setw(10) << m.support << "\n";
    }
    os.unsetf(std::ios::fixed);
}

}  // namespace crophybrid
