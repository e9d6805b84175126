#pragma once

#include <CLI11.hpp>
#include <iostream>

#include "crophybrid/data.hpp"
#include "crophybrid/eval.hpp"
#include "crophybrid/model.hpp"

namespace crophybrid::cli {

namespace fs = std::filesystem;

// Every artifact sidecar embeds the tool version, the seed, and a hash of the
// effective configuration, so an experiment directory is self-describing.
inline nlohmann::json make_meta(std::uint64_t seed, const std::string& config_dump) {
    return {{"tool_version", kToolVersion}, {"seed", seed}, {"config_hash", hash_hex(config_dump)}};
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("io", "cannot open: " + path);
    try {
        nlohmann::json j;
        f >> j;
        return j;
    } catch (const std::exception& e) {
        fail("io", "bad JSON in " + path + ": " + e.what());
    }
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail("io", "cannot open for write: " + path);
    f << j.dump(2) << "\n";
}

inline std::vector<int> parse_months_arg(const std::string& arg) {
    std::vector<int> months;
    if (arg.empty()) return months;
    const auto colon = arg.find(':');
    if (colon != std::string::npos) {
        const int a = std::stoi(arg.substr(0, colon));
        const int b = std::stoi(arg.substr(colon + 1));
        if (a > b) fail("config", "bad month range \"" + arg + "\"");
        for (int m = a; m <= b; ++m) months.push_back(m);
        return months;
    }
    std::size_t pos = 0;
    while (pos < arg.size()) {
        const auto comma = arg.find(',', pos);
        const std::string tok = arg.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        months.push_back(std::stoi(tok));
        pos = comma == std::string::npos ? arg.size() : comma + 1;
    }
    return months;
}

// ---------------------------------------------------------------------------
// gradient-check suite shared by the `gradcheck` subcommand and the
// acceptance harness: every layer type on random micro shapes plus a full
// micro hybrid classifier, all in 64-bit.
// ---------------------------------------------------------------------------

struct GradSuiteResult {
    std::vector<GradCheckReport> reports;
    std::vector<std::string> names;
    double max_rel_err = 0.0;
    bool passed(double tol) const { return max_rel_err < tol; }
};

inline GradSuiteResult run_gradient_suite(std::uint64_t seed, bool include_full_model = true) {
    GradSuiteResult suite;
    Rng data_rng(seed * 2 + 1);
    auto randry = [&](const Shape& s) {
        Tensor<double> t(s);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = data_rng.normal();
        return t;
    };
    auto check = [&](const std::string& name, LayerStack<double>& stack, const Shape& in_shape) {
        const Tensor<double> x = randry(in_shape);
        const Tensor<double> r = randry(stack.output_shape(in_shape));
        suite.reports.push_back(grad_check_proj(stack, x, r));
        suite.names.push_back(name);
        suite.max_rel_err = std::max(suite.max_rel_err, suite.reports.back().max_rel_err);
    };

    {
        Rng rng(seed);
        LayerStack<double> s;
        s.add(std::make_unique<Conv3d<double>>(2, 3, 3, 3, 3, false, true, rng));
        check("conv3d valid/same", s, Shape{2, 5, 5, 5, 2});
    }
    {
        Rng rng(seed + 1);
        LayerStack<double> s;
        s.add(std::make_unique<Conv3d<double>>(2, 3, 3, 3, 3, true, false, rng));
        check("conv3d same/valid", s, Shape{2, 4, 4, 5, 2});
    }
    {
        Rng rng(seed + 2);
        LayerStack<double> s;
        s.add(std::make_unique<Conv1d<double>>(4, 5, 3, true, rng));
        check("conv1d same", s, Shape{3, 9, 4});
    }
    {
        Rng rng(seed + 3);
        LayerStack<double> s;
        s.add(std::make_unique<Conv1d<double>>(3, 4, 3, false, rng));
        check("conv1d valid", s, Shape{2, 7, 3});
    }
    {
        LayerStack<double> s;
        s.add(std::make_unique<BatchNorm<double>>(5));
        check("batchnorm", s, Shape{6, 3, 5});
    }
    {
        Rng rng(seed + 4);
        LayerStack<double> s;
        s.add(std::make_unique<Dense<double>>(7, 4, rng));
        check("dense", s, Shape{5, 7});
    }
    {
        LayerStack<double> s;
        s.add(std::make_unique<ReLU<double>>());
        check("relu", s, Shape{4, 6});
    }
    if (include_full_model) {
        ArchitectureConfig micro;
        micro.r = 3;
        micro.t = 3;
        micro.c = 2;
        micro.classes = 2;
        micro.conv3d = {{2, {3, 3, 3}, false, true, true}};
        micro.conv1d = {{3, 3, true, true}};
        micro.dense = {4};
        Model<double> m = build_hybrid<double>(micro, seed + 5);
        const Tensor<double> x = randry(m.input_shape(4));
        std::vector<int> labels = {0, 1, 1, 0};
        suite.reports.push_back(grad_check_xent(m.stack, x, labels));
        suite.names.push_back("micro hybrid model (xent)");
        suite.max_rel_err = std::max(suite.max_rel_err, suite.reports.back().max_rel_err);
    }
    return suite;
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string spec_path, out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

inline int cmd_synth(const SynthArgs& a) {
    SynthSpec spec = load_json_file(a.spec_path).get<SynthSpec>();
    if (a.seed_set) spec.seed = a.seed;
    SynthData data = synth_generate(spec);
    fs::create_directories(a.out_dir);
    nlohmann::json spec_echo = spec;
    const nlohmann::json meta = make_meta(spec.seed, spec_echo.dump());
    save_feature_cube(data.cube, (fs::path(a.out_dir) / "cube").string(), meta);
    save_tensor(data.labels, (fs::path(a.out_dir) / "labels.ctns").string());
    save_tensor(data.parcel_ids, (fs::path(a.out_dir) / "parcels.ctns").string());
    save_parcels(data.parcels, (fs::path(a.out_dir) / "parcels.json").string());
    nlohmann::json info;
    info["spec"] = spec_echo;
    info["class_names"] = data.class_names;
    info["parcel_count"] = data.parcels.size();
    info["meta"] = meta;
    write_json_file(info, (fs::path(a.out_dir) / "synth.json").string());
    std::cout << "synth: " << data.parcels.size() << " parcels, grid " << spec.h << "x" << spec.w
              << ", t=" << spec.months.size() << ", classes=" << spec.classes << "\n";
    return 0;
}

struct PreprocessArgs {
    std::string scenes_dir, out_dir, satellite = "sentinel2", months;
    double cloud_threshold = 0.1;
    std::uint64_t seed = 0;
};

inline int cmd_preprocess(const PreprocessArgs& a) {
    const SatelliteId sat = parse_satellite(a.satellite);
    std::map<std::string, std::string> name_to_role;
    for (const auto& [name, role] : band_map(sat)) name_to_role[name] = role;

    std::vector<std::string> manifests;
    for (const auto& e : fs::directory_iterator(a.scenes_dir))
        if (e.path().extension() == ".json") manifests.push_back(e.path().string());
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty()) fail("io", "no scene manifests (*.json) in " + a.scenes_dir);

    std::vector<Scene> scenes;
    for (const auto& m : manifests) scenes.push_back(load_scene(m, name_to_role));

    Warnings warnings;
    std::vector<Scene> kept = filter_by_cloud(scenes, a.cloud_threshold, &warnings);

    std::vector<int> months = parse_months_arg(a.months);
    if (months.empty()) {
        std::set<int> present;
        for (const auto& s : kept) present.insert(s.month);
        months.assign(present.begin(), present.end());
    }
    if (months.empty()) fail("config", "no months to composite (all scenes filtered out?)");

    SceneStack stack = monthly_median(kept, months, &warnings);
    SceneStack filled = fill_gaps(stack, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    nlohmann::json cfg = {{"satellite", a.satellite}, {"cloud_threshold", a.cloud_threshold}, {"months", months}};
    save_scene_stack(filled, a.out_dir, make_meta(a.seed, cfg.dump()));
    std::cout << "preprocess: " << kept.size() << "/" << scenes.size() << " scenes kept, "
              << months.size() << " monthly composites -> " << a.out_dir << "\n";
    return 0;
}

struct FeaturesArgs {
    std::string stack_dir, out_prefix, satellite = "sentinel2";
    std::uint64_t seed = 0;
};

inline int cmd_features(const FeaturesArgs& a) {
    const SatelliteId sat = parse_satellite(a.satellite);
    SceneStack stack = load_scene_stack(a.stack_dir);
    FeatureCube cube = build_feature_cube(stack, sat);
    nlohmann::json cfg = {{"satellite", a.satellite}, {"stack", a.stack_dir}};
    if (const auto parent = fs::path(a.out_prefix).parent_path(); !parent.empty())
        fs::create_directories(parent);
    save_feature_cube(cube, a.out_prefix, make_meta(a.seed, cfg.dump()));
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < cube.quality.size(); ++i) flagged += cube.quality[i] != 0.0f;
    std::cout << "features: cube " << shape_str(cube.values.shape()) << ", " << flagged
              << " flagged pixel/timestamps -> " << a.out_prefix << ".ctns\n";
    return 0;
}

struct SampleArgs {
    std::string cube_prefix, parcel_file, labels_csv, out_dir;
    double ratio = 0.6;
    std::size_t r = 7, stride = 1, max_patches = 0;
    std::uint64_t seed = 42;
};

inline int cmd_sample(const SampleArgs& a) {
    FeatureCube cube = load_feature_cube(a.cube_prefix);
    std::vector<Parcel> parcels = load_parcels(a.parcel_file);
    if (!a.labels_csv.empty()) {
        const auto names = load_labels_csv(a.labels_csv);
        for (auto& p : parcels) {
            const auto it = names.find(p.id);
            if (it != names.end()) p.class_name = it->second;
        }
    }
    const std::vector<std::string> class_names = assign_class_ids(parcels);
    int outside = -1;
    if (!class_names.empty() && class_names[0] == "Others") outside = 0;

    Warnings warnings;
    split_parcels(parcels, a.ratio, a.seed, &warnings);
    RasterizedParcels planes = rasterize_parcels(parcels, cube.h(), cube.w(), outside);
    PatchSet set = sample_patches(cube, planes.labels, planes.parcel_ids, parcels, a.r, a.stride, a.max_patches);
    set.seed = a.seed;
    set.ratio = a.ratio;
    set.class_names = class_names;
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    nlohmann::json cfg = {{"ratio", a.ratio}, {"r", a.r},       {"stride", a.stride},
                          {"max_patches", a.max_patches},        {"cube", a.cube_prefix},
                          {"parcel_file", a.parcel_file}};
    save_patch_set(set, a.out_dir, make_meta(a.seed, cfg.dump()));
    save_tensor(planes.labels, (fs::path(a.out_dir) / "labels.ctns").string());
    save_tensor(planes.parcel_ids, (fs::path(a.out_dir) / "parcels.ctns").string());
    std::cout << "sample: " << set.train.size() << " train / " << set.test.size() << " test patches (r="
              << a.r << ", stride=" << a.stride << ") -> " << a.out_dir << "\n";
    return 0;
}

struct TrainArgs {
    std::string patches_dir, arch_path, train_cfg_path, out_ckpt, history_path;
    bool baseline = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
    long epochs = -1, batch = -1;
    double lr = -1;
    unsigned threads = 1;
    bool quiet = false;
};

inline int cmd_train(const TrainArgs& a) {
    PatchSet set = load_patch_set(a.patches_dir);
    if (set.train.size() == 0) fail("training", "patch set has no training split");
    const std::size_t classes = set.class_names.size();

    ArchitectureConfig arch;
    if (!a.arch_path.empty()) {
        arch = load_json_file(a.arch_path).get<ArchitectureConfig>();
        if (arch.classes != classes)
            fail("config", "architecture expects " + std::to_string(arch.classes) + " classes but the patch set has " +
                               std::to_string(classes));
    } else {
        arch = a.baseline ? default_baseline_config(classes) : default_hybrid_config(classes);
    }
    // input extents come from the data, not the config file
    arch.r = set.r;
    arch.t = set.train.x.shape()[3];
    arch.c = set.train.x.shape()[4];

    TrainConfig cfg;
    if (!a.train_cfg_path.empty()) cfg = load_json_file(a.train_cfg_path).get<TrainConfig>();
    if (a.seed_set) cfg.seed = a.seed;
    if (a.epochs > 0) cfg.epochs = static_cast<std::size_t>(a.epochs);
    if (a.batch > 0) cfg.batch = static_cast<std::size_t>(a.batch);
    if (a.lr > 0) cfg.lr = a.lr;

    Model<float> model = a.baseline && !a.arch_path.empty() ? build_3d_baseline<float>(arch, cfg.seed)
                                                            : build_from_config<float>(arch, cfg.seed);
    model.class_names = set.class_names;
    ThreadPool pool(a.threads);
    model.set_pool(&pool);

    Dataset<float> train_set{set.train.x, set.train.y};
    Dataset<float> val_set{set.test.size() ? set.test.x : set.train.x, set.test.size() ? set.test.y : set.train.y};
    train(model, train_set, val_set, cfg);
    if (!a.quiet)
        for (const auto& row : model.history)
            std::cerr << "epoch " << row.epoch << "/" << cfg.epochs << ": loss " << row.loss << ", train "
                      << row.train_acc << ", val " << row.val_acc << "\n";

    if (const auto parent = fs::path(a.out_ckpt).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_checkpoint(model, a.out_ckpt);
    const std::string hist = a.history_path.empty() ? a.out_ckpt + ".history.csv" : a.history_path;
    save_history_csv(model, hist);
    std::cout << "train: " << model.model_kind << " (" << count_params(model) << " params), best epoch "
              << model.best_epoch << ", val acc " << model.history[model.best_epoch - 1].val_acc << " -> "
              << a.out_ckpt << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string checkpoint, patches_dir, out_path;
    unsigned threads = 1;
};

inline int cmd_evaluate(const EvaluateArgs& a) {
    Model<float> model = load_checkpoint<float>(a.checkpoint);
    ThreadPool pool(a.threads);
    model.set_pool(&pool);
    PatchSet set = load_patch_set(a.patches_dir);
    if (set.test.size() == 0) fail("metrics", "patch set has no test split");
    Tensor<float> labels_plane = load_tensor<float>((fs::path(a.patches_dir) / "labels.ctns").string());
    Tensor<float> parcel_plane = load_tensor<float>((fs::path(a.patches_dir) / "parcels.ctns").string());

    const Prediction<float> pred = predict(model, set.test.x);
    const MetricsReport pixel = compute_metrics(pred.labels, set.test.y, model.arch.classes);

    Tensor<float> pred_plane(labels_plane.shape(), -1.0f);
    std::vector<std::uint8_t> mask(labels_plane.size(), 0);
    const std::size_t w = labels_plane.shape()[1];
    std::set<int> test_parcels;
    for (std::size_t i = 0; i < set.test.size(); ++i) {
        const auto [cy, cx] = set.test.center[i];
        const std::size_t at = static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx);
        pred_plane[at] = static_cast<float>(pred.labels[i]);
        mask[at] = 1;
        test_parcels.insert(set.test.parcel[i]);
    }
    Warnings warnings;
    const std::vector<int> expected(test_parcels.begin(), test_parcels.end());
    const auto voted = parcel_vote(pred_plane, parcel_plane, mask, expected, &warnings);
    const auto truth = parcel_truth(labels_plane, parcel_plane, mask);
    const MetricsReport parcel = parcel_metrics(voted, truth, model.arch.classes);
    for (const auto& wmsg : warnings) std::cerr << "warning: " << wmsg << "\n";

    print_metrics_table(std::cout, "pixel-wise", pixel, model.class_names);
    print_metrics_table(std::cout, "parcel-wise", parcel, model.class_names);

    nlohmann::json out;
    out["pixel"] = metrics_json(pixel, model.class_names);
    out["parcel"] = metrics_json(parcel, model.class_names);
    out["classes"] = model.class_names;
    out["checkpoint"] = fs::path(a.checkpoint).filename().string();
    nlohmann::json cfg = {{"checkpoint", a.checkpoint}, {"patches", a.patches_dir}};
    out["meta"] = make_meta(model.seed, cfg.dump());
    if (const auto parent = fs::path(a.out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_json_file(out, a.out_path);
    return 0;
}

struct PredictMapArgs {
    std::string checkpoint, cube_prefix, out_path, palette_path;
    unsigned threads = 1;
    std::size_t batch = 512;
};

inline int cmd_predict_map(const PredictMapArgs& a) {
    Model<float> model = load_checkpoint<float>(a.checkpoint);
    ThreadPool pool(a.threads);
    model.set_pool(&pool);
    FeatureCube cube = load_feature_cube(a.cube_prefix);
    if (cube.t() != model.arch.t || kFeatureCount != model.arch.c)
        fail("shape", "cube " + shape_str(cube.values.shape()) + " does not match model input (t=" +
                          std::to_string(model.arch.t) + ", c=" + std::to_string(model.arch.c) + ")");
    const std::size_t H = cube.h(), W = cube.w(), r = model.arch.r;
    const std::size_t sample = r * r * cube.t() * kFeatureCount;

    Tensor<float> plane(Shape{H, W});
    std::vector<std::size_t> centers(H * W);
    for (std::size_t i = 0; i < H * W; ++i) centers[i] = i;
    for (std::size_t b0 = 0; b0 < centers.size(); b0 += a.batch) {
        const std::size_t b1 = std::min(centers.size(), b0 + a.batch);
        Tensor<float> batch(Shape{b1 - b0, r, r, cube.t(), kFeatureCount});
        for (std::size_t i = b0; i < b1; ++i)
            extract_patch(cube, centers[i] / W, centers[i] % W, r, batch.data() + (i - b0) * sample);
        const Prediction<float> pred = predict(model, batch);
        for (std::size_t i = b0; i < b1; ++i) plane[centers[i]] = static_cast<float>(pred.labels[i - b0]);
    }

    const ClassPalette palette = a.palette_path.empty()
                                     ? ClassPalette::default_for(model.class_names)
                                     : palette_from_json(load_json_file(a.palette_path), model.class_names);
    if (const auto parent = fs::path(a.out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
    render_map(plane, palette, a.out_path);
    save_tensor(plane, a.out_path + ".labels.ctns");
    nlohmann::json info;
    info["classes"] = model.class_names;
    info["palette"] = palette;
    info["grid"] = {{"h", H}, {"w", W}};
    nlohmann::json cfg = {{"checkpoint", a.checkpoint}, {"cube", a.cube_prefix}};
    info["meta"] = make_meta(model.seed, cfg.dump());
    write_json_file(info, a.out_path + ".json");
    std::cout << "predict-map: " << H << "x" << W << " map -> " << a.out_path << "\n";
    return 0;
}

struct ParamsArgs {
    std::string config_path;
    std::string preset = "hybrid";
    std::size_t classes = 10;
};

inline int cmd_params(const ParamsArgs& a) {
    ArchitectureConfig arch;
    if (!a.config_path.empty()) {
        arch = load_json_file(a.config_path).get<ArchitectureConfig>();
    } else if (a.preset == "hybrid") {
        arch = default_hybrid_config(a.classes);
    } else if (a.preset == "baseline") {
        arch = default_baseline_config(a.classes);
    } else {
        fail("config", "unknown preset \"" + a.preset + "\" (expected hybrid or baseline)");
    }
    Model<float> m = build_from_config<float>(arch, 1);
    std::cout << std::left << std::setw(16) << "layer" << std::setw(22) << "output shape" << std::right
              << std::setw(12) << "params" << "\n";
    for (const auto& row : param_table(m))
        std::cout << std::left << std::setw(16) << row.label << std::setw(22) << row.out_shape << std::right
                  << std::setw(12) << row.params << "\n";
    std::int64_t state = 0;
    for (auto& b : m.stack.all_blocks())
        if (!b.grad) state += static_cast<std::int64_t>(b.value->size());
    std::cout << "trainable parameters: " << count_params(m) << "\n";
    std::cout << "running statistics (not trained): " << state << "\n";
    return 0;
}

struct BenchArgs {
    std::string config_path, out_path;
    std::size_t classes = 10, batch = 1, iters = 50, warmup = 10;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

inline int cmd_bench(const BenchArgs& a) {
    struct Row {
        std::string name;
        std::int64_t params;
        LatencyReport lat;
    };
    std::vector<Row> rows;
    ThreadPool pool(a.threads);
    auto run_one = [&](const std::string& name, const ArchitectureConfig& arch) {
        Model<float> m = build_from_config<float>(arch, a.seed);
        m.set_pool(&pool);
        rows.push_back({name, count_params(m), benchmark_inference(m, a.batch, a.warmup, a.iters)});
    };
    if (!a.config_path.empty()) {
        run_one("configured", load_json_file(a.config_path).get<ArchitectureConfig>());
    } else {
        run_one("hybrid 3d-1d", default_hybrid_config(a.classes));
        run_one("3d baseline", default_baseline_config(a.classes));
    }
    std::cout << std::left << std::setw(16) << "model" << std::right << std::setw(12) << "params"
              << std::setw(12) << "mean ms" << std::setw(12) << "median ms" << std::setw(12) << "stddev ms"
              << std::setw(12) << "min ms" << "\n";
    for (const auto& r : rows)
        std::cout << std::left << std::setw(16) << r.name << std::right << std::setw(12) << r.params
                  << std::setw(12) << std::fixed << std::setprecision(3) << r.lat.mean_ms << std::setw(12)
                  << r.lat.median_ms << std::setw(12) << r.lat.stddev_ms << std::setw(12) << r.lat.min_ms
                  << "\n";
    std::cout.unsetf(std::ios::fixed);
    if (!a.out_path.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows)
            j.push_back({{"model", r.name},
                         {"params", r.params},
                         {"latency_ms",
                          {{"mean", r.lat.mean_ms}, {"median", r.lat.median_ms}, {"stddev", r.lat.stddev_ms},
                           {"min", r.lat.min_ms}}},
                         {"batch", r.lat.batch},
                         {"iterations", r.lat.iterations}});
        nlohmann::json out = {{"results", j}, {"meta", make_meta(a.seed, "bench")}};
        write_json_file(out, a.out_path);
    }
    return 0;
}

struct GradcheckArgs {
    double tolerance = 1e-4;
    std::uint64_t seed = 17;
};

inline int cmd_gradcheck(const GradcheckArgs& a) {
    const GradSuiteResult suite = run_gradient_suite(a.seed);
    for (std::size_t i = 0; i < suite.reports.size(); ++i) {
        std::cout << suite.names[i] << ": max rel err " << std::scientific << std::setprecision(3)
                  << suite.reports[i].max_rel_err << "\n";
        for (const auto& blk : suite.reports[i].blocks)
            std::cout << "    " << std::left << std::setw(28) << blk.name << std::right << std::scientific
                      << std::setprecision(3) << blk.max_rel_err << "\n";
    }
    std::cout.unsetf(std::ios::scientific);
    std::cout << (suite.passed(a.tolerance) ? "gradcheck PASS" : "gradcheck FAIL") << " (max "
              << std::scientific << std::setprecision(3) << suite.max_rel_err << ", tolerance "
              << a.tolerance << ")\n";
    std::cout.unsetf(std::ios::scientific);
    return suite.passed(a.tolerance) ? 0 : 1;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"hybrid 3d->1d convolutional crop classification over satellite image time series"};
    app.require_subcommand(1);

    const unsigned default_threads = ThreadPool::default_threads();

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic phenology dataset");
    synth_cmd->add_option("--spec", synth.spec_path, "synthetic spec JSON")->required();
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    auto* synth_seed = synth_cmd->add_option("--seed", synth.seed, "override the spec seed");

    PreprocessArgs prep;
    auto* prep_cmd = app.add_subcommand("preprocess", "cloud filter, mask, monthly median, gap fill");
    prep_cmd->add_option("--scenes", prep.scenes_dir, "directory of scene manifests")->required();
    prep_cmd->add_option("--out", prep.out_dir, "output scene-stack directory")->required();
    prep_cmd->add_option("--satellite", prep.satellite, "sentinel2 or landsat8");
    prep_cmd->add_option("--cloud-threshold", prep.cloud_threshold, "keep scenes strictly below (default 0.1)");
    prep_cmd->add_option("--months", prep.months, "month labels, e.g. 3:11 or 3,4,5");
    prep_cmd->add_option("--seed", prep.seed, "recorded in the sidecar");

    FeaturesArgs feat;
    auto* feat_cmd = app.add_subcommand("features", "compute the 13-channel feature cube");
    feat_cmd->add_option("--stack", feat.stack_dir, "scene-stack directory")->required();
    feat_cmd->add_option("--out", feat.out_prefix, "output cube prefix")->required();
    feat_cmd->add_option("--satellite", feat.satellite, "sentinel2 or landsat8");
    feat_cmd->add_option("--seed", feat.seed, "recorded in the sidecar");

    SampleArgs sample;
    auto* sample_cmd = app.add_subcommand("sample", "split parcels and extract labeled patches");
    sample_cmd->add_option("--cube", sample.cube_prefix, "feature cube prefix")->required();
    sample_cmd->add_option("--parcel-file", sample.parcel_file, "parcel polygon JSON")->required();
    sample_cmd->add_option("--labels-csv", sample.labels_csv, "parcel_id,class_name CSV");
    sample_cmd->add_option("--out", sample.out_dir, "output patch directory")->required();
    sample_cmd->add_option("--ratio", sample.ratio, "train fraction (default 0.6)");
    sample_cmd->add_option("--r", sample.r, "patch size (odd, default 7)");
    sample_cmd->add_option("--stride", sample.stride, "center stride (default 1)");
    sample_cmd->add_option("--max-patches", sample.max_patches, "cap on total patches (0 = all)");
    sample_cmd->add_option("--seed", sample.seed, "split seed");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model on a patch set");
    train_cmd->add_option("--patches", train_args.patches_dir, "patch directory")->required();
    train_cmd->add_option("--out", train_args.out_ckpt, "checkpoint output path")->required();
    train_cmd->add_option("--arch", train_args.arch_path, "architecture JSON (default: built-in hybrid)");
    train_cmd->add_option("--train-cfg", train_args.train_cfg_path, "training config JSON");
    train_cmd->add_option("--history", train_args.history_path, "history CSV path");
    train_cmd->add_flag("--baseline", train_args.baseline, "use the 3d baseline preset");
    auto* train_seed = train_cmd->add_option("--seed", train_args.seed, "override training seed");
    train_cmd->add_option("--epochs", train_args.epochs, "override epoch count");
    train_cmd->add_option("--batch", train_args.batch, "override batch size");
    train_cmd->add_option("--lr", train_args.lr, "override learning rate");
    train_cmd->add_option("--threads", train_args.threads, "worker threads")->default_val(default_threads);
    train_cmd->add_flag("--quiet", train_args.quiet, "suppress per-epoch progress");

    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "pixel and parcel metrics on the test split");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--patches", eval_args.patches_dir, "patch directory")->required();
    eval_cmd->add_option("--out", eval_args.out_path, "metrics JSON output")->required();
    eval_cmd->add_option("--threads", eval_args.threads, "worker threads")->default_val(default_threads);

    PredictMapArgs map_args;
    auto* map_cmd = app.add_subcommand("predict-map", "classify every pixel and render a P6 map");
    map_cmd->add_option("--checkpoint", map_args.checkpoint, "model checkpoint")->required();
    map_cmd->add_option("--cube", map_args.cube_prefix, "feature cube prefix")->required();
    map_cmd->add_option("--out", map_args.out_path, "output PPM path")->required();
    map_cmd->add_option("--palette", map_args.palette_path, "palette JSON (default: built-in)");
    map_cmd->add_option("--threads", map_args.threads, "worker threads")->default_val(default_threads);

    ParamsArgs params_args;
    auto* params_cmd = app.add_subcommand("params", "print the per-layer parameter table");
    params_cmd->add_option("--config", params_args.config_path, "architecture JSON");
    params_cmd->add_option("--preset", params_args.preset, "hybrid or baseline (when no --config)");
    params_cmd->add_option("--classes", params_args.classes, "class count for presets");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "inference latency report (params + per-sample ms)");
    bench_cmd->add_option("--config", bench_args.config_path, "architecture JSON (default: both presets)");
    bench_cmd->add_option("--classes", bench_args.classes, "class count for presets");
    bench_cmd->add_option("--batch", bench_args.batch, "inference batch size");
    bench_cmd->add_option("--iters", bench_args.iters, "timed iterations");
    bench_cmd->add_option("--warmup", bench_args.warmup, "discarded warmup iterations");
    bench_cmd->add_option("--out", bench_args.out_path, "also write a JSON report");
    bench_cmd->add_option("--seed", bench_args.seed, "weight init seed");
    bench_cmd->add_option("--threads", bench_args.threads, "worker threads")->default_val(default_threads);

    GradcheckArgs grad_args;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every layer (64-bit)");
    grad_cmd->add_option("--tolerance", grad_args.tolerance, "max relative error (default 1e-4)");
    grad_cmd->add_option("--seed", grad_args.seed, "probe seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        synth.seed_set = synth_seed->count() > 0;
        train_args.seed_set = train_seed->count() > 0;
        if (app.got_subcommand(synth_cmd)) return cmd_synth(synth);
        if (app.got_subcommand(prep_cmd)) return cmd_preprocess(prep);
        if (app.got_subcommand(feat_cmd)) return cmd_features(feat);
        if (app.got_subcommand(sample_cmd)) return cmd_sample(sample);
        if (app.got_subcommand(train_cmd)) return cmd_train(train_args);
        if (app.got_subcommand(eval_cmd)) return cmd_evaluate(eval_args);
        if (app.got_subcommand(map_cmd)) return cmd_predict_map(map_args);
        if (app.got_subcommand(params_cmd)) return cmd_params(params_args);
        if (app.got_subcommand(bench_cmd)) return cmd_bench(bench_args);
        if (app.got_subcommand(grad_cmd)) return cmd_gradcheck(grad_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace crophybrid::cli
