#pragma once

#include <chrono>
#include <fstream>
#include <json.hpp>

#include "crophybrid/nn.hpp"

namespace crophybrid {

// ---------------------------------------------------------------------------
// Declarative architecture description. The hybrid network is
//   [conv3d + BN + ReLU]*  -> squeeze spatial -> [conv1d + BN + ReLU]* ->
//   flatten -> [dense + ReLU]* -> dense(K) -> softmax head,
// the 3-D baseline is the same with no conv1d blocks (flatten follows the
// 3-D part directly, no squeeze requirement).
// ---------------------------------------------------------------------------

struct Conv3dBlockCfg {
    std::size_t filters = 32;
    std::array<std::size_t, 3> kernel{3, 3, 3};  // (kt, kh, kw)
    bool spatial_same = false;
    bool temporal_same = true;
    bool batchnorm = true;
};

struct Conv1dBlockCfg {
    std::size_t filters = 128;
    std::size_t kernel = 3;
    bool same = true;
    bool batchnorm = true;
};

struct ArchitectureConfig {
    std::size_t r = 7, t = 9, c = 13;
    std::size_t classes = 2;
    std::vector<Conv3dBlockCfg> conv3d;
    std::vector<Conv1dBlockCfg> conv1d;
    std::vector<std::size_t> dense;  // hidden widths before the class layer
};

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch = 128;
    double lr = 0.001;
    std::uint64_t seed = 42;
    bool shuffle = true;
};

inline void to_json(nlohmann::json& j, const ArchitectureConfig& a) {
    j = nlohmann::json::object();
    j["input"] = {{"r", a.r}, {"t", a.t}, {"c", a.c}};
    j["classes"] = a.classes;
    j["conv3d"] = nlohmann::json::array();
    for (const auto& b : a.conv3d)
        j["conv3d"].push_back({{"filters", b.filters},
                               {"kernel", b.kernel},
                               {"spatial_padding", b.spatial_same ? "same" : "valid"},
                               {"temporal_padding", b.temporal_same ? "same" : "valid"},
                               {"batchnorm", b.batchnorm}});
    j["conv1d"] = nlohmann::json::array();
    for (const auto& b : a.conv1d)
        j["conv1d"].push_back({{"filters", b.filters},
                               {"kernel", b.kernel},
                               {"padding", b.same ? "same" : "valid"},
                               {"batchnorm", b.batchnorm}});
    j["dense"] = a.dense;
}

inline bool parse_padding(const nlohmann::json& j, const char* key, bool dflt) {
    if (!j.contains(key)) return dflt;
    const std::string v = j.at(key).get<std::string>();
    if (v == "same") return true;
    if (v == "valid") return false;
    fail("config", std::string("padding must be \"same\" or \"valid\", got \"") + v + "\"");
}

inline void from_json(const nlohmann::json& j, ArchitectureConfig& a) {
    a = ArchitectureConfig{};
    if (j.contains("input")) {
        a.r = j["input"].value("r", a.r);
        a.t = j["input"].value("t", a.t);
        a.c = j["input"].value("c", a.c);
    }
    a.classes = j.value("classes", a.classes);
    a.conv3d.clear();
    for (const auto& b : j.value("conv3d", nlohmann::json::array())) {
        Conv3dBlockCfg c;
        c.filters = b.at("filters").get<std::size_t>();
        if (b.contains("kernel")) c.kernel = b["kernel"].get<std::array<std::size_t, 3>>();
        c.spatial_same = parse_padding(b, "spatial_padding", c.spatial_same);
        c.temporal_same = parse_padding(b, "temporal_padding", c.temporal_same);
        c.batchnorm = b.value("batchnorm", true);
        a.conv3d.push_back(c);
    }
    a.conv1d.clear();
    for (const auto& b : j.value("conv1d", nlohmann::json::array())) {
        Conv1dBlockCfg c;
        c.filters = b.at("filters").get<std::size_t>();
        c.kernel = b.value("kernel", c.kernel);
        c.same = parse_padding(b, "padding", c.same);
        c.batchnorm = b.value("batchnorm", true);
        a.conv1d.push_back(c);
    }
    a.dense = j.value("dense", std::vector<std::size_t>{});
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
    j = {{"epochs", t.epochs}, {"batch_size", t.batch}, {"learning_rate", t.lr},
         {"seed", t.seed}, {"shuffle", t.shuffle}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
    t = TrainConfig{};
    t.epochs = j.value("epochs", t.epochs);
    t.batch = j.value("batch_size", t.batch);
    t.lr = j.value("learning_rate", t.lr);
    t.seed = j.value("seed", t.seed);
    t.shuffle = j.value("shuffle", t.shuffle);
    if (t.epochs < 1) fail("config", "epochs must be >= 1");
    if (t.batch < 1) fail("config", "batch size must be >= 1");
}

// Stand-in filter counts for the figure's unlabeled blocks; lands in the
// published parameter regime while preserving the stated structure
// (3-D part keeps t, spatial collapses to 1x1, squeeze feeds the 1-D part).
inline ArchitectureConfig default_hybrid_config(std::size_t classes) {
    ArchitectureConfig a;
    a.classes = classes;
    a.conv3d = {{32, {3, 3, 3}, false, true, true},
                {64, {3, 3, 3}, false, true, true},
                {64, {3, 3, 3}, false, true, true}};
    a.conv1d = {{128, 3, true, true}, {128, 3, true, true}};
    a.dense = {128};
    return a;
}

// Two 3-D blocks with 64 and 128 filters, then the dense head.
inline ArchitectureConfig default_baseline_config(std::size_t classes) {
    ArchitectureConfig a;
    a.classes = classes;
    a.conv3d = {{64, {3, 3, 3}, false, true, true},
                {128, {3, 3, 3}, false, true, true}};
    a.conv1d = {};
    a.dense = {128};
    return a;
}

// ---------------------------------------------------------------------------

template <typename T>
struct Dataset {
    Tensor<T> x;         // (N, r, r, t, c)
    std::vector<int> y;  // class ids

    std::size_t size() const { return y.size(); }
};

template <typename T>
class Model {
public:
    LayerStack<T> stack;
    ArchitectureConfig arch;
    std::string model_kind;  // "hybrid" or "baseline3d"
    std::uint64_t seed = 0;
    std::size_t best_epoch = 0;
    std::vector<std::string> class_names;
    std::vector<T> feat_mean, feat_std;  // per input channel, from the training split

    struct EpochRow {
        std::size_t epoch;
        double loss, train_acc, val_acc;
    };
    std::vector<EpochRow> history;

    Shape input_shape(std::size_t batch = 1) const { return Shape{batch, arch.r, arch.r, arch.t, arch.c}; }

    void set_pool(ThreadPool* p) { stack.set_pool(p); }
};

namespace detail {

template <typename T>
void assemble(Model<T>& m, std::uint64_t seed) {
    const ArchitectureConfig& a = m.arch;
    if (a.r % 2 == 0) fail("architecture", "spatial input extent r must be odd, got " + std::to_string(a.r));
    if (a.classes < 2) fail("architecture", "need at least 2 classes");
    Rng rng(seed);
    Shape cur{1, a.r, a.r, a.t, a.c};
    std::size_t cin = a.c;
    for (const auto& b : a.conv3d) {
        auto conv = std::make_unique<Conv3d<T>>(cin, b.filters, b.kernel[0], b.kernel[1], b.kernel[2],
                                                b.spatial_same, b.temporal_same, rng);
        cur = conv->output_shape(cur);
        cin = b.filters;
        m.stack.add(std::move(conv));
        if (b.batchnorm) m.stack.add(std::make_unique<BatchNorm<T>>(b.filters));
        m.stack.add(std::make_unique<ReLU<T>>());
    }
    if (!a.conv1d.empty()) {
        if (cur[1] != 1 || cur[2] != 1)
            fail("architecture", "spatial extents must reduce to 1x1 before the temporal block, got " +
                                     std::to_string(cur[1]) + "x" + std::to_string(cur[2]) +
                                     " after the 3d blocks");
        m.stack.add(std::make_unique<SqueezeSpatial<T>>());
        cur = Shape{cur[0], cur[3], cur[4]};
        for (const auto& b : a.conv1d) {
            auto conv = std::make_unique<Conv1d<T>>(cin, b.filters, b.kernel, b.same, rng);
            cur = conv->output_shape(cur);
            cin = b.filters;
            m.stack.add(std::move(conv));
            if (b.batchnorm) m.stack.add(std::make_unique<BatchNorm<T>>(b.filters));
            m.stack.add(std::make_unique<ReLU<T>>());
        }
    }
    m.stack.add(std::make_unique<Flatten<T>>());
    std::size_t width = 1;
    for (std::size_t i = 1; i < cur.size(); ++i) width *= cur[i];
    for (std::size_t hidden : a.dense) {
        m.stack.add(std::make_unique<Dense<T>>(width, hidden, rng));
        m.stack.add(std::make_unique<ReLU<T>>());
        width = hidden;
    }
    m.stack.add(std::make_unique<Dense<T>>(width, a.classes, rng));
    m.seed = seed;

    // config -> layer-chain consistency: symbolic shapes end at (1, K)
    const Shape out = m.stack.output_shape(m.input_shape());
    if (out != Shape{1, a.classes}) fail("architecture", "layer chain ends at " + shape_str(out));

    m.class_names.resize(a.classes);
    for (std::size_t k = 0; k < a.classes; ++k)
        if (m.class_names[k].empty()) m.class_names[k] = "class_" + std::to_string(k);
}

}  // namespace detail

template <typename T>
Model<T> build_hybrid(const ArchitectureConfig& cfg, std::uint64_t seed) {
    if (cfg.conv1d.empty()) fail("architecture", "hybrid model requires at least one conv1d block");
    Model<T> m;
    m.arch = cfg;
    m.model_kind = "hybrid";
    detail::assemble(m, seed);
    return m;
}

template <typename T>
Model<T> build_3d_baseline(const ArchitectureConfig& cfg, std::uint64_t seed) {
    Model<T> m;
    m.arch = cfg;
    m.arch.conv1d.clear();
    m.model_kind = "baseline3d";
    detail::assemble(m, seed);
    return m;
}

template <typename T>
Model<T> build_from_config(const ArchitectureConfig& cfg, std::uint64_t seed) {
    return cfg.conv1d.empty() ? build_3d_baseline<T>(cfg, seed) : build_hybrid<T>(cfg, seed);
}

// Trainable parameters only; BN running statistics are state, not parameters.
template <typename T>
std::int64_t count_params(Model<T>& m) {
    return m.stack.trainable_count();
}

struct LayerTableRow {
    std::string label;
    std::string out_shape;
    std::int64_t params = 0;
};

template <typename T>
std::vector<LayerTableRow> param_table(Model<T>& m) {
    std::vector<LayerTableRow> rows;
    Shape cur = m.input_shape();
    for (std::size_t i = 0; i < m.stack.size(); ++i) {
        cur = m.stack.layer(i).output_shape(cur);
        std::int64_t p = 0;
        for (auto& pr : m.stack.layer(i).trainable()) p += static_cast<std::int64_t>(pr.value->size());
        rows.push_back({m.stack.label(i), shape_str(cur), p});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Training. Seeded shuffling, mini batches, Adam, per-epoch validation, and
// best-validation-accuracy checkpointing; the returned model carries the best
// epoch's weights. Bitwise deterministic for a fixed seed and any --threads.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void standardize_rows(Tensor<T>& x, const std::vector<T>& mean, const std::vector<T>& stdv) {
    const std::size_t c = mean.size();
    const std::size_t rows = x.size() / c;
    for (std::size_t r = 0; r < rows; ++r) {
        T* p = x.data() + r * c;
        for (std::size_t i = 0; i < c; ++i) p[i] = (p[i] - mean[i]) / stdv[i];
    }
}

template <typename T>
double accuracy_infer(Model<T>& m, const Tensor<T>& xs, const std::vector<int>& y, std::size_t batch) {
    const std::size_t n = y.size();
    const std::size_t sample = xs.size() / n;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
        const std::size_t b1 = std::min(n, b0 + batch);
        Shape bs = xs.shape();
        bs[0] = b1 - b0;
        Tensor<T> xb(bs);
        std::memcpy(xb.data(), xs.data() + b0 * sample, (b1 - b0) * sample * sizeof(T));
        Tensor<T> logits = m.stack.forward(xb, false);
        const std::size_t K = logits.shape()[1];
        for (std::size_t i = 0; i < b1 - b0; ++i) {
            const T* row = logits.data() + i * K;
            std::size_t am = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (row[k] > row[am]) am = k;
            if (static_cast<int>(am) == y[b0 + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace detail

template <typename T>
void fit_standardization(Model<T>& m, const Tensor<T>& x) {
    const std::size_t c = m.arch.c;
    const std::size_t rows = x.size() / c;
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = x.data() + r * c;
        for (std::size_t i = 0; i < c; ++i) mean[i] += static_cast<double>(p[i]);
    }
    for (auto& v : mean) v /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = x.data() + r * c;
        for (std::size_t i = 0; i < c; ++i) {
            const double d = static_cast<double>(p[i]) - mean[i];
            var[i] += d * d;
        }
    }
    m.feat_mean.resize(c);
    m.feat_std.resize(c);
    for (std::size_t i = 0; i < c; ++i) {
        m.feat_mean[i] = static_cast<T>(mean[i]);
        const double s = std::sqrt(var[i] / static_cast<double>(rows));
        m.feat_std[i] = s < 1e-6 ? T(1) : static_cast<T>(s);  // constant channels pass through
    }
}

template <typename T>
void train(Model<T>& m, const Dataset<T>& train_set, const Dataset<T>& val_set, const TrainConfig& cfg) {
    if (cfg.epochs < 1) fail("config", "epochs must be >= 1");
    if (cfg.batch < 1) fail("config", "batch size must be >= 1");
    if (train_set.size() == 0) fail("training", "empty training set");
    if (val_set.size() == 0) fail("training", "empty validation set");
    for (int y : train_set.y)
        if (y < 0 || static_cast<std::size_t>(y) >= m.arch.classes)
            fail("label", "training label " + std::to_string(y) + " out of range");

    fit_standardization(m, train_set.x);
    Tensor<T> xs_train = train_set.x;
    Tensor<T> xs_val = val_set.x;
    detail::standardize_rows(xs_train, m.feat_mean, m.feat_std);
    detail::standardize_rows(xs_val, m.feat_mean, m.feat_std);

    auto params = m.stack.trainable();
    std::vector<AdamState<T>> opt;
    opt.reserve(params.size());
    for (auto& p : params) opt.emplace_back(p.value->shape(), cfg.lr);

    const std::size_t n = train_set.size();
    const std::size_t sample = xs_train.size() / n;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(cfg.seed);

    double best_val = -1.0;
    std::vector<Tensor<T>> best_blocks;
    std::size_t best_epoch = 0;
    auto snapshot = [&] {
        best_blocks.clear();
        for (auto& b : m.stack.all_blocks()) best_blocks.push_back(*b.value);
    };

    m.history.clear();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle) rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0, batch_index = 0;
        for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch, ++batch_index) {
            const std::size_t b1 = std::min(n, b0 + cfg.batch);
            const std::size_t bn = b1 - b0;
            Shape bs = xs_train.shape();
            bs[0] = bn;
            Tensor<T> xb(bs);
            std::vector<int> yb(bn);
            for (std::size_t i = 0; i < bn; ++i) {
                std::memcpy(xb.data() + i * sample, xs_train.data() + order[b0 + i] * sample, sample * sizeof(T));
                yb[i] = train_set.y[order[b0 + i]];
            }
            Tensor<T> logits = m.stack.forward(xb, true);
            auto [loss, grad] = SoftmaxXent<T>::loss_and_grad(logits, yb);
            if (!std::isfinite(static_cast<double>(loss)))
                fail("training", "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                     std::to_string(batch_index));
            const std::size_t K = logits.shape()[1];
            for (std::size_t i = 0; i < bn; ++i) {
                const T* row = logits.data() + i * K;
                std::size_t am = 0;
                for (std::size_t k = 1; k < K; ++k)
                    if (row[k] > row[am]) am = k;
                if (static_cast<int>(am) == yb[i]) ++correct;
            }
            loss_sum += static_cast<double>(loss) * static_cast<double>(bn);
            m.stack.zero_grads();
            m.stack.backward(grad, false);
            for (std::size_t p = 0; p < params.size(); ++p)
                adam_step(*params[p].value, *params[p].grad, opt[p], params[p].name);
        }
        const double train_acc = static_cast<double>(correct) / static_cast<double>(n);
        const double val_acc = detail::accuracy_infer(m, xs_val, val_set.y, cfg.batch);
        m.history.push_back({epoch, loss_sum / static_cast<double>(n), train_acc, val_acc});
        if (val_acc > best_val) {
            best_val = val_acc;
            best_epoch = epoch;
            snapshot();
        }
    }

    // keep the best-validation weights
    auto blocks = m.stack.all_blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) *blocks[i].value = best_blocks[i];
    m.best_epoch = best_epoch;
}

template <typename T>
struct Prediction {
    Tensor<T> probs;          // (N, K)
    std::vector<int> labels;  // argmax per row
};

template <typename T>
Prediction<T> predict(Model<T>& m, const Tensor<T>& patches, std::size_t batch = 128) {
    if (patches.rank() != 5) fail("shape", "predict expects (N,r,r,t,c) patches, got " + shape_str(patches.shape()));
    const Shape want = m.input_shape(patches.shape()[0]);
    if (patches.shape() != want)
        fail("shape", "patch shape " + shape_str(patches.shape()) + " does not match model input " + shape_str(want));
    Tensor<T> xs = patches;
    if (!m.feat_mean.empty()) detail::standardize_rows(xs, m.feat_mean, m.feat_std);

    const std::size_t n = patches.shape()[0];
    const std::size_t sample = xs.size() / n;
    Prediction<T> out;
    out.probs = Tensor<T>(Shape{n, m.arch.classes});
    out.labels.resize(n);
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
        const std::size_t b1 = std::min(n, b0 + batch);
        Shape bs = xs.shape();
        bs[0] = b1 - b0;
        Tensor<T> xb(bs);
        std::memcpy(xb.data(), xs.data() + b0 * sample, (b1 - b0) * sample * sizeof(T));
        Tensor<T> logits = m.stack.forward(xb, false);
        Tensor<T> probs = SoftmaxXent<T>::probs(logits);
        std::memcpy(out.probs.data() + b0 * m.arch.classes, probs.data(), probs.size() * sizeof(T));
        for (std::size_t i = 0; i < b1 - b0; ++i) {
            const T* row = probs.data() + i * m.arch.classes;
            std::size_t am = 0;
            for (std::size_t k = 1; k < m.arch.classes; ++k)
                if (row[k] > row[am]) am = k;
            out.labels[b0 + i] = static_cast<int>(am);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inference latency harness. Report-only: numbers depend on the host.
// ---------------------------------------------------------------------------

struct LatencyReport {
    double mean_ms = 0, median_ms = 0, stddev_ms = 0, min_ms = 0;
    std::size_t batch = 1, iterations = 0;
};

template <typename T>
LatencyReport benchmark_inference(Model<T>& m, std::size_t batch = 1, std::size_t warmup = 10,
                                  std::size_t iterations = 50) {
    Rng rng(m.seed + 17);
    Tensor<T> x(m.input_shape(batch));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(rng.normal());
    for (std::size_t i = 0; i < warmup; ++i) (void)m.stack.forward(x, false);
    std::vector<double> per_sample_ms(iterations);
    for (std::size_t i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)m.stack.forward(x, false);
        const auto t1 = std::chrono::steady_clock::now();
        per_sample_ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(batch);
    }
    LatencyReport r;
    r.batch = batch;
    r.iterations = iterations;
    double sum = 0;
    for (double v : per_sample_ms) sum += v;
    r.mean_ms = sum / static_cast<double>(iterations);
    double sq = 0;
    for (double v : per_sample_ms) sq += (v - r.mean_ms) * (v - r.mean_ms);
    r.stddev_ms = std::sqrt(sq / static_cast<double>(iterations));
    std::vector<double> sorted = per_sample_ms;
    std::sort(sorted.begin(), sorted.end());
    r.min_ms = sorted.front();
    r.median_ms = iterations % 2 ? sorted[iterations / 2]
                                 : 0.5 * (sorted[iterations / 2 - 1] + sorted[iterations / 2]);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic "CMDL", u8 version, u32le header length, JSON header
// (architecture, seed, epoch, channel order, standardization), then the
// tensor-binary parameter blocks in declaration order (running stats
// included).
// ---------------------------------------------------------------------------

inline constexpr std::array<const char*, 13> kFeatureChannelOrder = {
    "blue", "green", "red", "nir", "swir1", "swir2", "ndvi",
    "gndvi", "evi", "savi", "bsi", "ndwi", "ndbi"};

template <typename T>
void save_checkpoint(Model<T>& m, const std::string& path) {
    nlohmann::json header;
    header["format"] = "crophybrid-checkpoint";
    header["format_version"] = 1;
    header["tool_version"] = kToolVersion;
    header["kind"] = m.model_kind;
    header["seed"] = m.seed;
    header["epoch"] = m.best_epoch;
    header["class_names"] = m.class_names;
    header["channel_order"] = kFeatureChannelOrder;
    header["standardization"] = {{"mean", m.feat_mean}, {"std", m.feat_std}};
    header["arch"] = m.arch;
    auto blocks = m.stack.all_blocks();
    std::vector<std::string> names;
    for (auto& b : blocks) names.push_back(b.name);
    header["param_blocks"] = names;
    header["meta"] = {{"tool_version", kToolVersion},
                      {"seed", m.seed},
                      {"config_hash", hash_hex(nlohmann::json(m.arch).dump())}};

    const std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open for write: " + path);
    f.write("CMDL", 4);
    const char ver = 1;
    f.write(&ver, 1);
    std::vector<std::uint8_t> len;
    put_u32le(len, static_cast<std::uint32_t>(hs.size()));
    f.write(reinterpret_cast<const char*>(len.data()), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (auto& b : blocks) write_tensor_stream(*b.value, f, path);
    if (!f) fail("io", "short write: " + path);
}

template <typename T>
Model<T> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("io", "cannot open: " + path);
    char magic[5] = {};
    f.read(magic, 5);
    if (!f || std::memcmp(magic, "CMDL\x01", 5) != 0) fail("io", "not a checkpoint file: " + path);
    std::uint8_t lb[4];
    f.read(reinterpret_cast<char*>(lb), 4);
    const std::uint32_t hlen = get_u32le(lb);
    std::string hs(hlen, '\0');
    f.read(hs.data(), hlen);
    if (!f) fail("io", "truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);

    ArchitectureConfig arch = header.at("arch").get<ArchitectureConfig>();
    Model<T> m = build_from_config<T>(arch, header.value("seed", std::uint64_t(0)));
    m.model_kind = header.value("kind", m.model_kind);
    m.best_epoch = header.value("epoch", std::size_t(0));
    m.class_names = header.value("class_names", m.class_names);
    m.feat_mean = header["standardization"]["mean"].get<std::vector<T>>();
    m.feat_std = header["standardization"]["std"].get<std::vector<T>>();

    auto blocks = m.stack.all_blocks();
    const auto names = header.at("param_blocks").get<std::vector<std::string>>();
    if (names.size() != blocks.size()) fail("io", "checkpoint block count mismatch in " + path);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (names[i] != blocks[i].name)
            fail("io", "checkpoint block order mismatch: " + names[i] + " vs " + blocks[i].name);
        Tensor<T> t = read_tensor_stream<T>(f, path + "#" + names[i]);
        if (t.shape() != blocks[i].value->shape())
            fail("io", "checkpoint block " + names[i] + " has shape " + shape_str(t.shape()));
        *blocks[i].value = std::move(t);
    }
    return m;
}

template <typename T>
void save_history_csv(const Model<T>& m, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("io", "cannot open for write: " + path);
    f << "epoch,loss,train_acc,val_acc\n";
    char buf[160];
    for (const auto& row : m.history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g\n", row.epoch, row.loss, row.train_acc, row.val_acc);
        f << buf;
    }
}

}  // namespace crophybrid
