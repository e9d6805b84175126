#include <doctest.h>

#include <filesystem>

#include "crophybrid/model.hpp"

using namespace crophybrid;

namespace {

Tensor<float> random_patches(std::size_t n, const ArchitectureConfig& a, Rng& rng) {
    Tensor<float> x(Shape{n, a.r, a.r, a.t, a.c});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
    return x;
}

ArchitectureConfig micro_arch(std::size_t classes = 2) {
    ArchitectureConfig a;
    a.r = 3;
    a.t = 3;
    a.c = 2;
    a.classes = classes;
    a.conv3d = {{2, {3, 3, 3}, false, true, true}};
    a.conv1d = {{3, 3, true, true}};
    a.dense = {8};
    return a;
}

// two classes divided by which channel carries the seasonal bump: linearly
// separable by construction
Dataset<float> separable_set(std::size_t n, std::uint64_t seed) {
    const ArchitectureConfig a = micro_arch();
    Rng rng(seed);
    Dataset<float> d;
    d.x = Tensor<float>(Shape{n, a.r, a.r, a.t, a.c});
    const std::size_t sample = a.r * a.r * a.t * a.c;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        d.y.push_back(cls);
        for (std::size_t j = 0; j < sample; ++j) {
            const bool chan = j % 2 == static_cast<std::size_t>(cls);
            d.x[i * sample + j] = static_cast<float>((chan ? 1.0 : 0.1) + 0.05 * rng.normal());
        }
    }
    return d;
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

bool file_bytes_equal(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return !sa.empty() && sa == sb;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("default hybrid builds on the published input shape and ends at K logits") {
    Model<float> m = build_hybrid<float>(default_hybrid_config(10), 1);
    Rng rng(2);
    Tensor<float> x = random_patches(2, m.arch, rng);
    const Tensor<float> logits = m.stack.forward(x, false);
    CHECK(logits.shape() == Shape{2, 10});
}

TEST_CASE("symbolic shape chain equals running a real zero tensor through") {
    for (bool baseline : {false, true}) {
        Model<float> m = baseline ? build_3d_baseline<float>(default_baseline_config(5), 1)
                                  : build_hybrid<float>(default_hybrid_config(5), 1);
        const Shape symbolic = m.stack.output_shape(m.input_shape(3));
        Tensor<float> zeros(m.input_shape(3), 0.0f);
        CHECK(m.stack.forward(zeros, false).shape() == symbolic);
    }
}

TEST_CASE("a 3d block that leaves spatial extent 5 cannot feed the temporal part") {
    ArchitectureConfig a = default_hybrid_config(4);
    a.conv3d = {{32, {3, 3, 3}, false, true, true}};  // 7 -> 5, not 1
    CHECK_THROWS_WITH_AS((void)build_hybrid<float>(a, 1), doctest::Contains("5"), Error);
    CHECK_THROWS_WITH_AS((void)build_hybrid<float>(a, 1), doctest::Contains("architecture"), Error);
}

TEST_CASE("hybrid requires a temporal part") {
    ArchitectureConfig a = default_hybrid_config(4);
    a.conv1d.clear();
    CHECK_THROWS_AS((void)build_hybrid<float>(a, 1), Error);
}

TEST_CASE("parameter accounting closed forms") {
    Rng rng(1);
    Conv3d<float> conv(13, 64, 3, 3, 3, false, true, rng);
    std::int64_t conv_params = 0;
    for (auto p : conv.trainable()) conv_params += static_cast<std::int64_t>(p.value->size());
    CHECK(conv_params == 22528);  // 64*(27*13) + 64

    Dense<float> dense(128, 10, rng);
    std::int64_t dense_params = 0;
    for (auto p : dense.trainable()) dense_params += static_cast<std::int64_t>(p.value->size());
    CHECK(dense_params == 1290);  // 128*10 + 10

    BatchNorm<float> bn(64);
    std::int64_t bn_params = 0;
    for (auto p : bn.trainable()) bn_params += static_cast<std::int64_t>(p.value->size());
    CHECK(bn_params == 128);  // gamma + beta
    std::int64_t bn_state = 0;
    for (auto p : bn.state()) bn_state += static_cast<std::int64_t>(p.value->size());
    CHECK(bn_state == 128);  // running stats reported separately
}

TEST_CASE("default hybrid parameter count is in the published regime and below the baseline") {
    for (std::size_t k : {std::size_t(5), std::size_t(10), std::size_t(14)}) {
        Model<float> hybrid = build_hybrid<float>(default_hybrid_config(k), 1);
        Model<float> baseline = build_3d_baseline<float>(default_baseline_config(k), 1);
        const std::int64_t hp = count_params(hybrid);
        CHECK(hp >= 300000);
        CHECK(hp <= 420000);
        CHECK(hp < count_params(baseline));
    }
}

TEST_CASE("param table agrees with count_params") {
    Model<float> m = build_hybrid<float>(default_hybrid_config(7), 1);
    std::int64_t total = 0;
    for (const auto& row : param_table(m)) total += row.params;
    CHECK(total == count_params(m));
}

TEST_CASE("micro hybrid and micro baseline pass the gradient check") {
    ArchitectureConfig a = micro_arch();
    Model<double> hybrid = build_hybrid<double>(a, 3);
    Rng rng(4);
    Tensor<double> x(hybrid.input_shape(4));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
    CHECK(grad_check_xent(hybrid.stack, x, {0, 1, 1, 0}).max_rel_err < 1e-4);

    ArchitectureConfig b = micro_arch();
    b.conv1d.clear();
    Model<double> baseline = build_3d_baseline<double>(b, 3);
    CHECK(grad_check_xent(baseline.stack, x, {0, 1, 1, 0}).max_rel_err < 1e-4);
}

TEST_CASE("training reaches the separable optimum") {
    Dataset<float> train_set = separable_set(80, 5);
    Dataset<float> val_set = separable_set(40, 6);
    Model<float> m = build_hybrid<float>(micro_arch(), 7);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch = 16;
    cfg.seed = 8;
    train(m, train_set, val_set, cfg);
    REQUIRE(m.history.size() == 50);
    CHECK(m.history.back().train_acc >= 0.99);

    // loss is non-increasing over any 5-epoch window
    for (std::size_t i = 5; i < m.history.size(); ++i)
        CHECK(m.history[i].loss <= m.history[i - 5].loss + 1e-9);
}

TEST_CASE("lr = 0 leaves every trainable parameter bitwise unchanged") {
    Dataset<float> train_set = separable_set(32, 9);
    Model<float> m = build_hybrid<float>(micro_arch(), 10);
    std::vector<Tensor<float>> before;
    for (auto p : m.stack.trainable()) before.push_back(*p.value);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 8;
    cfg.lr = 0.0;
    train(m, train_set, train_set, cfg);
    auto params = m.stack.trainable();
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(std::memcmp(params[i].value->data(), before[i].data(),
                          before[i].size() * sizeof(float)) == 0);
}

TEST_CASE("training is bitwise reproducible under a fixed seed") {
    Dataset<float> train_set = separable_set(48, 11);
    Dataset<float> val_set = separable_set(16, 12);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch = 16;
    cfg.seed = 13;
    const std::string p1 = temp_file("crophybrid_det1.cmdl"), p2 = temp_file("crophybrid_det2.cmdl");
    for (const auto& path : {p1, p2}) {
        Model<float> m = build_hybrid<float>(micro_arch(), 14);
        train(m, train_set, val_set, cfg);
        save_checkpoint(m, path);
    }
    CHECK(file_bytes_equal(p1, p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("training results are independent of the thread count") {
    Dataset<float> train_set = separable_set(48, 21);
    Dataset<float> val_set = separable_set(16, 22);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 24;
    cfg.seed = 23;
    const std::string p1 = temp_file("crophybrid_thr1.cmdl"), p4 = temp_file("crophybrid_thr4.cmdl");
    {
        Model<float> m = build_hybrid<float>(micro_arch(), 24);
        ThreadPool pool(1);
        m.set_pool(&pool);
        train(m, train_set, val_set, cfg);
        save_checkpoint(m, p1);
    }
    {
        Model<float> m = build_hybrid<float>(micro_arch(), 24);
        ThreadPool pool(4);
        m.set_pool(&pool);
        train(m, train_set, val_set, cfg);
        save_checkpoint(m, p4);
    }
    CHECK(file_bytes_equal(p1, p4));
    std::filesystem::remove(p1);
    std::filesystem::remove(p4);
}

TEST_CASE("a non-finite loss aborts training with epoch/batch diagnostics") {
    Dataset<float> train_set = separable_set(16, 15);
    Model<float> m = build_hybrid<float>(micro_arch(), 16);
    auto head = m.stack.layer(m.stack.size() - 1).trainable();  // class layer
    for (auto p : head)
        if (p.name == "bias") (*p.value)[0] = std::numeric_limits<float>::infinity();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 8;
    CHECK_THROWS_WITH_AS(train(m, train_set, train_set, cfg), doctest::Contains("training"), Error);
    CHECK_THROWS_WITH_AS(train(m, train_set, train_set, cfg), doctest::Contains("epoch 1"), Error);
}

TEST_CASE("empty dataset is a training error") {
    Model<float> m = build_hybrid<float>(micro_arch(), 17);
    Dataset<float> empty;
    CHECK_THROWS_AS(train(m, empty, empty, TrainConfig{}), Error);
}

TEST_CASE("prediction") {
    SUBCASE("zeroed class layer gives uniform probabilities") {
        Model<float> m = build_hybrid<float>(micro_arch(5), 18);
        auto last = m.stack.layer(m.stack.size() - 1).trainable();
        for (auto p : last)
            std::fill(p.value->buffer().begin(), p.value->buffer().end(), 0.0f);
        Rng rng(19);
        const Prediction<float> pred = predict(m, random_patches(3, m.arch, rng));
        for (std::size_t i = 0; i < pred.probs.size(); ++i)
            CHECK(pred.probs[i] == doctest::Approx(0.2).epsilon(1e-6));
    }
    SUBCASE("probabilities sum to one") {
        Model<float> m = build_hybrid<float>(micro_arch(3), 20);
        Rng rng(21);
        const Prediction<float> pred = predict(m, random_patches(9, m.arch, rng));
        for (std::size_t n = 0; n < 9; ++n) {
            float s = 0;
            for (std::size_t k = 0; k < 3; ++k) s += pred.probs[n * 3 + k];
            CHECK(std::abs(s - 1.0f) < 1e-6f);
        }
    }
    SUBCASE("batch-of-1 equals the matching row of a larger batch bitwise") {
        Model<float> m = build_hybrid<float>(micro_arch(3), 22);
        Rng rng(23);
        Tensor<float> patches = random_patches(5, m.arch, rng);
        const Prediction<float> full = predict(m, patches);
        const std::size_t sample = patches.size() / 5;
        for (std::size_t n = 0; n < 5; ++n) {
            Tensor<float> one(m.input_shape(1));
            std::memcpy(one.data(), patches.data() + n * sample, sample * sizeof(float));
            const Prediction<float> single = predict(m, one);
            CHECK(std::memcmp(single.probs.data(), full.probs.data() + n * 3, 3 * sizeof(float)) == 0);
        }
    }
    SUBCASE("wrong patch shape is a shape error") {
        Model<float> m = build_hybrid<float>(micro_arch(3), 24);
        Tensor<float> bad(Shape{2, 5, 5, 3, 2});
        CHECK_THROWS_WITH_AS((void)predict(m, bad), doctest::Contains("shape"), Error);
    }
}

TEST_CASE("checkpoint round trip preserves predictions bitwise") {
    Dataset<float> train_set = separable_set(32, 25);
    Model<float> m = build_hybrid<float>(micro_arch(), 26);
    m.class_names = {"alfalfa", "rice"};
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 16;
    train(m, train_set, train_set, cfg);

    const std::string path = temp_file("crophybrid_ckpt_rt.cmdl");
    save_checkpoint(m, path);
    Model<float> back = load_checkpoint<float>(path);
    CHECK(back.model_kind == "hybrid");
    CHECK(back.class_names == m.class_names);
    CHECK(back.best_epoch == m.best_epoch);

    Rng rng(27);
    Tensor<float> probe = random_patches(4, m.arch, rng);
    const Prediction<float> a = predict(m, probe);
    const Prediction<float> b = predict(back, probe);
    CHECK(std::memcmp(a.probs.data(), b.probs.data(), a.probs.size() * sizeof(float)) == 0);

    // save -> load -> save is byte-stable
    const std::string path2 = temp_file("crophybrid_ckpt_rt2.cmdl");
    save_checkpoint(back, path2);
    CHECK(file_bytes_equal(path, path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("history csv") {
    Dataset<float> train_set = separable_set(32, 28);
    Model<float> m = build_hybrid<float>(micro_arch(), 29);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 16;
    train(m, train_set, train_set, cfg);
    const std::string path = temp_file("crophybrid_hist.csv");
    save_history_csv(m, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "epoch,loss,train_acc,val_acc");
    int rows = 0;
    while (std::getline(f, line)) rows += !line.empty();
    CHECK(rows == 3);
    std::filesystem::remove(path);
}

TEST_CASE("inference benchmark report carries the four statistics") {
    Model<float> m = build_hybrid<float>(micro_arch(), 30);
    const LatencyReport r = benchmark_inference(m, 1, 2, 9);
    CHECK(r.mean_ms > 0.0);
    CHECK(r.median_ms > 0.0);
    CHECK(r.min_ms > 0.0);
    CHECK(r.stddev_ms >= 0.0);
    CHECK(r.iterations == 9);
    CHECK(r.batch == 1);
}

TEST_CASE("architecture config json round trip") {
    const ArchitectureConfig a = default_hybrid_config(12);
    nlohmann::json j = a;
    const auto b = j.get<ArchitectureConfig>();
    CHECK(b.classes == 12);
    CHECK(b.conv3d.size() == 3);
    CHECK(b.conv3d[0].filters == 32);
    CHECK_FALSE(b.conv3d[0].spatial_same);
    CHECK(b.conv3d[0].temporal_same);
    CHECK(b.conv1d.size() == 2);
    CHECK(b.conv1d[1].filters == 128);
    CHECK(b.dense == std::vector<std::size_t>{128});
    nlohmann::json j2 = b;
    CHECK(j == j2);

    nlohmann::json bad = j;
    bad["conv3d"][0]["spatial_padding"] = "sideways";
    CHECK_THROWS_AS((void)bad.get<ArchitectureConfig>(), Error);
}

}  // TEST_SUITE
