#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "crophybrid/kernels.hpp"
#include "crophybrid/rng.hpp"
#include "crophybrid/tensor.hpp"
#include "crophybrid/threadpool.hpp"

namespace crophybrid {

// Layers operate on channels-last tensors:
//   conv3d: (N, H, W, T, C) -> (N, H', W', T', F)
//   conv1d: (N, T, C)       -> (N, T', F)
// Convolution is cross-correlation (no kernel flip), stride 1, with padding
// selectable per axis as same/valid. Backward passes are hand-derived; the
// finite-difference checker at the bottom of this header validates them.

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;  // null for running statistics
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual const char* kind() const = 0;
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
    // want_input_grad=false lets the first layer of a network skip the
    // input-gradient pass entirely.
    virtual Tensor<T> backward(const Tensor<T>& go, bool want_input_grad) = 0;
    virtual std::vector<ParamRef<T>> trainable() { return {}; }
    virtual std::vector<ParamRef<T>> state() { return {}; }
    virtual void set_pool(ThreadPool*) {}
};

namespace detail {

// Samples are processed in fixed blocks of 16 regardless of thread count, and
// per-block weight-gradient buffers are reduced in block order, so results
// are bit-identical for any --threads value.
inline constexpr std::size_t kChunkSamples = 16;

inline void run_chunks(ThreadPool* pool, std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (pool) {
        pool->run(n, fn);
    } else {
        for (std::size_t i = 0; i < n; ++i) fn(i);
    }
}

template <typename T>
void he_uniform_init(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 3-D convolution over (H, W, T) with channels last.
// Weights: (F, kt, kh, kw, Cin); odd kernel extents only.
// ---------------------------------------------------------------------------
template <typename T>
class Conv3d final : public Layer<T> {
public:
    Conv3d(std::size_t cin, std::size_t filters, std::size_t kt, std::size_t kh, std::size_t kw,
           bool spatial_same, bool temporal_same, Rng& rng)
        : cin_(cin), f_(filters), kt_(kt), kh_(kh), kw_(kw),
          spatial_same_(spatial_same), temporal_same_(temporal_same),
          w_(Shape{filters, kt, kh, kw, cin}), b_(Shape{filters}),
          gw_(Shape{filters, kt, kh, kw, cin}), gb_(Shape{filters}) {
        if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
            fail("architecture", "conv3d kernel extents must be odd, got " + std::to_string(kt) + "x" +
                                     std::to_string(kh) + "x" + std::to_string(kw));
        detail::he_uniform_init(w_, kt * kh * kw * cin, rng);
    }

    const char* kind() const override { return "conv3d"; }

    Shape output_shape(const Shape& in) const override {
        check_input_shape(in);
        const auto [oh, ow, ot] = out_extents(in);
        return Shape{in[0], oh, ow, ot, f_};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        check_input_shape(x.shape());
        const std::size_t N = x.shape()[0], H = x.shape()[1], W = x.shape()[2], Tt = x.shape()[3];
        const auto [oh, ow, ot] = out_extents(x.shape());
        const std::size_t J = oh * ow * ot;
        const std::size_t K = kt_ * kh_ * kw_ * cin_;

        wt_.assign(K * f_, T(0));
        detail::transpose_to(w_.data(), f_, K, wt_.data());

        Tensor<T> out(Shape{N, oh, ow, ot, f_});
        for (std::size_t row = 0; row < N * J; ++row)
            std::memcpy(out.data() + row * f_, b_.data(), f_ * sizeof(T));

        const std::size_t nchunks = (N + detail::kChunkSamples - 1) / detail::kChunkSamples;
        ensure_ws(col_ws_, nchunks);
        detail::run_chunks(pool_, nchunks, [&](std::size_t c) {
            const std::size_t s0 = c * detail::kChunkSamples;
            const std::size_t s1 = std::min(N, s0 + detail::kChunkSamples);
            auto& col = col_ws_[c];
            col.resize((s1 - s0) * J * K);
            for (std::size_t n = s0; n < s1; ++n)
                detail::im2col3d(x.data() + n * H * W * Tt * cin_, H, W, Tt, cin_, kt_, kh_, kw_,
                                 pad_h(), pad_w(), pad_t(), col.data() + (n - s0) * J * K);
            detail::gemm_jkf(out.data() + s0 * J * f_, col.data(), wt_.data(), (s1 - s0) * J, K, f_);
        });

        if (train) x_ = x;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& go, bool want_input_grad) override {
        if (x_.size() == 0) fail("shape", "conv3d backward before forward");
        const std::size_t N = x_.shape()[0], H = x_.shape()[1], W = x_.shape()[2], Tt = x_.shape()[3];
        const auto [oh, ow, ot] = out_extents(x_.shape());
        const std::size_t J = oh * ow * ot;
        const std::size_t K = kt_ * kh_ * kw_ * cin_;
        if (go.shape() != Shape{N, oh, ow, ot, f_})
            fail("shape", "conv3d upstream gradient has shape " + shape_str(go.shape()));

        for (std::size_t row = 0; row < N * J; ++row) {
            const T* g = go.data() + row * f_;
            for (std::size_t f = 0; f < f_; ++f) gb_[f] += g[f];
        }

        const std::size_t nchunks = (N + detail::kChunkSamples - 1) / detail::kChunkSamples;
        ensure_ws(col_ws_, nchunks);
        ensure_ws(gcol_ws_, nchunks);
        ensure_ws(gw_ws_, nchunks);
        Tensor<T> gx = want_input_grad ? Tensor<T>(x_.shape()) : Tensor<T>();
        detail::run_chunks(pool_, nchunks, [&](std::size_t c) {
            const std::size_t s0 = c * detail::kChunkSamples;
            const std::size_t s1 = std::min(N, s0 + detail::kChunkSamples);
            const std::size_t rows = (s1 - s0) * J;
            auto& col = col_ws_[c];
            col.resize(rows * K);
            for (std::size_t n = s0; n < s1; ++n)
                detail::im2col3d(x_.data() + n * H * W * Tt * cin_, H, W, Tt, cin_, kt_, kh_, kw_,
                                 pad_h(), pad_w(), pad_t(), col.data() + (n - s0) * J * K);
            auto& gwc = gw_ws_[c];
            gwc.assign(f_ * K, T(0));
            detail::gemm_fk(gwc.data(), go.data() + s0 * J * f_, col.data(), rows, K, f_);
            if (want_input_grad) {
                auto& gcol = gcol_ws_[c];
                gcol.assign(rows * K, T(0));
                detail::gemm_jkf(gcol.data(), go.data() + s0 * J * f_, w_.data(), rows, f_, K);
                for (std::size_t n = s0; n < s1; ++n)
                    detail::col2im3d(gcol.data() + (n - s0) * J * K, H, W, Tt, cin_, kt_, kh_, kw_,
                                     pad_h(), pad_w(), pad_t(), gx.data() + n * H * W * Tt * cin_);
            }
        });
        for (std::size_t c = 0; c < nchunks; ++c) {
            const auto& gwc = gw_ws_[c];
            for (std::size_t i = 0; i < gw_.size(); ++i) gw_[i] += gwc[i];
        }
        return gx;
    }

    std::vector<ParamRef<T>> trainable() override {
        return {{"weight", &w_, &gw_}, {"bias", &b_, &gb_}};
    }

    void set_pool(ThreadPool* p) override { pool_ = p; }

    std::size_t filters() const { return f_; }

private:
    void check_input_shape(const Shape& in) const {
        if (in.size() != 5) fail("shape", "conv3d expects rank-5 input (N,H,W,T,C), got " + shape_str(in));
        if (in[4] != cin_)
            fail("shape", "conv3d channel mismatch: input has " + std::to_string(in[4]) + ", layer expects " +
                              std::to_string(cin_));
        if (!spatial_same_ && (in[1] < kh_ || in[2] < kw_))
            fail("shape", "conv3d valid padding needs spatial extents >= kernel, got " + shape_str(in));
        if (!temporal_same_ && in[3] < kt_)
            fail("shape", "conv3d valid padding needs temporal extent >= kernel, got " + shape_str(in));
    }

    std::tuple<std::size_t, std::size_t, std::size_t> out_extents(const Shape& in) const {
        return {in[1] + 2 * pad_h() - kh_ + 1, in[2] + 2 * pad_w() - kw_ + 1, in[3] + 2 * pad_t() - kt_ + 1};
    }

    std::size_t pad_h() const { return spatial_same_ ? (kh_ - 1) / 2 : 0; }
    std::size_t pad_w() const { return spatial_same_ ? (kw_ - 1) / 2 : 0; }
    std::size_t pad_t() const { return temporal_same_ ? (kt_ - 1) / 2 : 0; }

    static void ensure_ws(std::vector<std::vector<T>>& ws, std::size_t n) {
        if (ws.size() < n) ws.resize(n);
    }

    std::size_t cin_, f_, kt_, kh_, kw_;
    bool spatial_same_, temporal_same_;
    Tensor<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
    std::vector<T> wt_;
    std::vector<std::vector<T>> col_ws_, gcol_ws_, gw_ws_;
    ThreadPool* pool_ = nullptr;
};

// ---------------------------------------------------------------------------
// 1-D convolution over T with channels last. Weights: (F, k, Cin).
// ---------------------------------------------------------------------------
template <typename T>
class Conv1d final : public Layer<T> {
public:
    Conv1d(std::size_t cin, std::size_t filters, std::size_t k, bool same, Rng& rng)
        : cin_(cin), f_(filters), k_(k), same_(same),
          w_(Shape{filters, k, cin}), b_(Shape{filters}),
          gw_(Shape{filters, k, cin}), gb_(Shape{filters}) {
        if (k % 2 == 0) fail("architecture", "conv1d kernel extent must be odd, got " + std::to_string(k));
        detail::he_uniform_init(w_, k * cin, rng);
    }

    const char* kind() const override { return "conv1d"; }

    Shape output_shape(const Shape& in) const override {
        check_input_shape(in);
        return Shape{in[0], in[1] + 2 * pad() - k_ + 1, f_};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        check_input_shape(x.shape());
        const std::size_t N = x.shape()[0], Tt = x.shape()[1];
        const std::size_t ot = Tt + 2 * pad() - k_ + 1;
        const std::size_t K = k_ * cin_;

        wt_.assign(K * f_, T(0));
        detail::transpose_to(w_.data(), f_, K, wt_.data());

        Tensor<T> out(Shape{N, ot, f_});
        for (std::size_t row = 0; row < N * ot; ++row)
            std::memcpy(out.data() + row * f_, b_.data(), f_ * sizeof(T));

        const std::size_t nchunks = (N + detail::kChunkSamples - 1) / detail::kChunkSamples;
        if (col_ws_.size() < nchunks) col_ws_.resize(nchunks);
        detail::run_chunks(pool_, nchunks, [&](std::size_t c) {
            const std::size_t s0 = c * detail::kChunkSamples;
            const std::size_t s1 = std::min(N, s0 + detail::kChunkSamples);
            auto& col = col_ws_[c];
            col.resize((s1 - s0) * ot * K);
            for (std::size_t n = s0; n < s1; ++n)
                detail::im2col1d(x.data() + n * Tt * cin_, Tt, cin_, k_, pad(), col.data() + (n - s0) * ot * K);
            detail::gemm_jkf(out.data() + s0 * ot * f_, col.data(), wt_.data(), (s1 - s0) * ot, K, f_);
        });

        if (train) x_ = x;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& go, bool want_input_grad) override {
        if (x_.size() == 0) fail("shape", "conv1d backward before forward");
        const std::size_t N = x_.shape()[0], Tt = x_.shape()[1];
        const std::size_t ot = Tt + 2 * pad() - k_ + 1;
        const std::size_t K = k_ * cin_;
        if (go.shape() != Shape{N, ot, f_})
            fail("shape", "conv1d upstream gradient has shape " + shape_str(go.shape()));

        for (std::size_t row = 0; row < N * ot; ++row) {
            const T* g = go.data() + row * f_;
            for (std::size_t f = 0; f < f_; ++f) gb_[f] += g[f];
        }

        const std::size_t nchunks = (N + detail::kChunkSamples - 1) / detail::kChunkSamples;
        if (col_ws_.size() < nchunks) col_ws_.resize(nchunks);
        if (gcol_ws_.size() < nchunks) gcol_ws_.resize(nchunks);
        if (gw_ws_.size() < nchunks) gw_ws_.resize(nchunks);
        Tensor<T> gx = want_input_grad ? Tensor<T>(x_.shape()) : Tensor<T>();
        detail::run_chunks(pool_, nchunks, [&](std::size_t c) {
            const std::size_t s0 = c * detail::kChunkSamples;
            const std::size_t s1 = std::min(N, s0 + detail::kChunkSamples);
            const std::size_t rows = (s1 - s0) * ot;
            auto& col = col_ws_[c];
            col.resize(rows * K);
            for (std::size_t n = s0; n < s1; ++n)
                detail::im2col1d(x_.data() + n * Tt * cin_, Tt, cin_, k_, pad(), col.data() + (n - s0) * ot * K);
            auto& gwc = gw_ws_[c];
            gwc.assign(f_ * K, T(0));
            detail::gemm_fk(gwc.data(), go.data() + s0 * ot * f_, col.data(), rows, K, f_);
            if (want_input_grad) {
                auto& gcol = gcol_ws_[c];
                gcol.assign(rows * K, T(0));
                detail::gemm_jkf(gcol.data(), go.data() + s0 * ot * f_, w_.data(), rows, f_, K);
                for (std::size_t n = s0; n < s1; ++n)
                    detail::col2im1d(gcol.data() + (n - s0) * ot * K, Tt, cin_, k_, pad(),
                                     gx.data() + n * Tt * cin_);
            }
        });
        for (std::size_t c = 0; c < nchunks; ++c) {
            const auto& gwc = gw_ws_[c];
            for (std::size_t i = 0; i < gw_.size(); ++i) gw_[i] += gwc[i];
        }
        return gx;
    }

    std::vector<ParamRef<T>> trainable() override {
        return {{"weight", &w_, &gw_}, {"bias", &b_, &gb_}};
    }

    void set_pool(ThreadPool* p) override { pool_ = p; }

private:
    void check_input_shape(const Shape& in) const {
        if (in.size() != 3) fail("shape", "conv1d expects rank-3 input (N,T,C), got " + shape_str(in));
        if (in[2] != cin_)
            fail("shape", "conv1d channel mismatch: input has " + std::to_string(in[2]) + ", layer expects " +
                              std::to_string(cin_));
        if (!same_ && in[1] < k_) fail("shape", "conv1d valid padding needs T >= kernel, got " + shape_str(in));
    }

    std::size_t pad() const { return same_ ? (k_ - 1) / 2 : 0; }

    std::size_t cin_, f_, k_;
    bool same_;
    Tensor<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
    std::vector<T> wt_;
    std::vector<std::vector<T>> col_ws_, gcol_ws_, gw_ws_;
    ThreadPool* pool_ = nullptr;
};

// ---------------------------------------------------------------------------
// Batch normalization over the last (channel) axis. Train mode normalizes
// with batch statistics over all other axes and decays the running stats as
//   running = momentum * running + (1 - momentum) * batch.
// Infer mode is a pure per-channel affine map from the running stats.
// ---------------------------------------------------------------------------
template <typename T>
class BatchNorm final : public Layer<T> {
public:
    explicit BatchNorm(std::size_t channels, T momentum = T(0.9), T epsilon = T(1e-5))
        : c_(channels), momentum_(momentum), eps_(epsilon),
          gamma_(Shape{channels}, T(1)), beta_(Shape{channels}),
          ggamma_(Shape{channels}), gbeta_(Shape{channels}),
          run_mean_(Shape{channels}), run_var_(Shape{channels}) {
        if (!(epsilon > T(0))) fail("architecture", "batchnorm epsilon must be positive");
    }

    const char* kind() const override { return "batchnorm"; }

    Shape output_shape(const Shape& in) const override {
        check_input_shape(in);
        return in;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        check_input_shape(x.shape());
        const std::size_t rows = x.size() / c_;
        Tensor<T> out(x.shape());
        if (!train) {
            // precomputed per-channel affine: same bits regardless of batch
            std::vector<T> scale(c_), shift(c_);
            for (std::size_t c = 0; c < c_; ++c) {
                scale[c] = gamma_[c] / std::sqrt(run_var_[c] + eps_);
                shift[c] = beta_[c] - run_mean_[c] * scale[c];
            }
            for (std::size_t r = 0; r < rows; ++r) {
                const T* src = x.data() + r * c_;
                T* dst = out.data() + r * c_;
                for (std::size_t c = 0; c < c_; ++c) dst[c] = src[c] * scale[c] + shift[c];
            }
            return out;
        }

        // batch statistics accumulated in double, fixed row order
        std::vector<double> mean(c_, 0.0), var(c_, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* src = x.data() + r * c_;
            for (std::size_t c = 0; c < c_; ++c) mean[c] += static_cast<double>(src[c]);
        }
        for (std::size_t c = 0; c < c_; ++c) mean[c] /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* src = x.data() + r * c_;
            for (std::size_t c = 0; c < c_; ++c) {
                const double d = static_cast<double>(src[c]) - mean[c];
                var[c] += d * d;
            }
        }
        for (std::size_t c = 0; c < c_; ++c) var[c] /= static_cast<double>(rows);

        mean_t_.assign(c_, T(0));
        invstd_.assign(c_, T(0));
        for (std::size_t c = 0; c < c_; ++c) {
            mean_t_[c] = static_cast<T>(mean[c]);
            invstd_[c] = static_cast<T>(1.0 / std::sqrt(var[c] + static_cast<double>(eps_)));
            run_mean_[c] = momentum_ * run_mean_[c] + (T(1) - momentum_) * static_cast<T>(mean[c]);
            run_var_[c] = momentum_ * run_var_[c] + (T(1) - momentum_) * static_cast<T>(var[c]);
        }

        xhat_ = Tensor<T>(x.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* src = x.data() + r * c_;
            T* xh = xhat_.data() + r * c_;
            T* dst = out.data() + r * c_;
            for (std::size_t c = 0; c < c_; ++c) {
                xh[c] = (src[c] - mean_t_[c]) * invstd_[c];
                dst[c] = gamma_[c] * xh[c] + beta_[c];
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& go, bool) override {
        if (xhat_.size() == 0) fail("shape", "batchnorm backward before train-mode forward");
        if (go.shape() != xhat_.shape()) fail("shape", "batchnorm upstream gradient shape mismatch");
        const std::size_t rows = go.size() / c_;

        std::vector<double> dbeta(c_, 0.0), dgamma(c_, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* g = go.data() + r * c_;
            const T* xh = xhat_.data() + r * c_;
            for (std::size_t c = 0; c < c_; ++c) {
                dbeta[c] += static_cast<double>(g[c]);
                dgamma[c] += static_cast<double>(g[c]) * static_cast<double>(xh[c]);
            }
        }
        for (std::size_t c = 0; c < c_; ++c) {
            gbeta_[c] += static_cast<T>(dbeta[c]);
            ggamma_[c] += static_cast<T>(dgamma[c]);
        }

        // dx = gamma * invstd * (dy - mean(dy) - xhat * mean(dy .* xhat))
        std::vector<T> g1(c_), g2(c_), g3(c_);
        const double n = static_cast<double>(rows);
        for (std::size_t c = 0; c < c_; ++c) {
            g1[c] = gamma_[c] * invstd_[c];
            g2[c] = static_cast<T>(static_cast<double>(g1[c]) * dbeta[c] / n);
            g3[c] = static_cast<T>(static_cast<double>(g1[c]) * dgamma[c] / n);
        }
        Tensor<T> gx(go.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* g = go.data() + r * c_;
            const T* xh = xhat_.data() + r * c_;
            T* dst = gx.data() + r * c_;
            for (std::size_t c = 0; c < c_; ++c) dst[c] = g1[c] * g[c] - g2[c] - g3[c] * xh[c];
        }
        return gx;
    }

    std::vector<ParamRef<T>> trainable() override {
        return {{"gamma", &gamma_, &ggamma_}, {"beta", &beta_, &gbeta_}};
    }

    std::vector<ParamRef<T>> state() override {
        return {{"running_mean", &run_mean_, nullptr}, {"running_var", &run_var_, nullptr}};
    }

private:
    void check_input_shape(const Shape& in) const {
        if (in.size() < 2) fail("shape", "batchnorm expects rank >= 2, got " + shape_str(in));
        if (in.back() != c_)
            fail("shape", "batchnorm channel mismatch: input has " + std::to_string(in.back()) +
                              ", layer expects " + std::to_string(c_));
    }

    std::size_t c_;
    T momentum_, eps_;
    Tensor<T> gamma_, beta_, ggamma_, gbeta_, run_mean_, run_var_;
    Tensor<T> xhat_;
    std::vector<T> mean_t_, invstd_;
};

// ---------------------------------------------------------------------------
template <typename T>
class ReLU final : public Layer<T> {
public:
    const char* kind() const override { return "relu"; }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        Tensor<T> out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
        if (train) x_ = x;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& go, bool) override {
        if (x_.size() == 0) fail("shape", "relu backward before forward");
        Tensor<T> gx(go.shape());
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] = x_[i] > T(0) ? go[i] : T(0);
        return gx;
    }

private:
    Tensor<T> x_;
};

// Removes the two unit spatial axes after the 3-D block: (N,1,1,T,C) -> (N,T,C).
template <typename T>
class SqueezeSpatial final : public Layer<T> {
public:
    const char* kind() const override { return "squeeze"; }

    Shape output_shape(const Shape& in) const override {
        check(in);
        return Shape{in[0], in[3], in[4]};
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        check(x.shape());
        in_shape_ = x.shape();
        return x.reshaped(Shape{x.shape()[0], x.shape()[3], x.shape()[4]});
    }

    Tensor<T> backward(const Tensor<T>& go, bool) override { return go.reshaped(in_shape_); }

private:
    static void check(const Shape& in) {
        if (in.size() != 5) fail("shape", "squeeze expects rank-5 input, got " + shape_str(in));
        if (in[1] != 1 || in[2] != 1)
            fail("squeeze", "spatial extents must be 1 before the temporal block, got " + shape_str(in));
    }

    Shape in_shape_;
};

template <typename T>
class Flatten final : public Layer<T> {
public:
    const char* kind() const override { return "flatten"; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() < 2) fail("shape", "flatten expects rank >= 2, got " + shape_str(in));
        std::size_t p = 1;
        for (std::size_t i = 1; i < in.size(); ++i) p *= in[i];
        return Shape{in[0], p};
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        in_shape_ = x.shape();
        return x.reshaped(output_shape(x.shape()));
    }

    Tensor<T> backward(const Tensor<T>& go, bool) override { return go.reshaped(in_shape_); }

private:
    Shape in_shape_;
};

// ---------------------------------------------------------------------------
template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(std::size_t in, std::size_t out, Rng& rng)
        : in_(in), out_(out), w_(Shape{out, in}), b_(Shape{out}), gw_(Shape{out, in}), gb_(Shape{out}) {
        detail::he_uniform_init(w_, in, rng);
    }

    const char* kind() const override { return "dense"; }

    Shape output_shape(const Shape& in) const override {
        check_input_shape(in);
        return Shape{in[0], out_};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        check_input_shape(x.shape());
        const std::size_t N = x.shape()[0];
        wt_.assign(in_ * out_, T(0));
        detail::transpose_to(w_.data(), out_, in_, wt_.data());
        Tensor<T> out(Shape{N, out_});
        for (std::size_t n = 0; n < N; ++n) std::memcpy(out.data() + n * out_, b_.data(), out_ * sizeof(T));
        detail::gemm_jkf(out.data(), x.data(), wt_.data(), N, in_, out_);
        if (train) x_ = x;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& go, bool want_input_grad) override {
        if (x_.size() == 0) fail("shape", "dense backward before forward");
        const std::size_t N = x_.shape()[0];
        if (go.shape() != Shape{N, out_}) fail("shape", "dense upstream gradient shape mismatch");
        for (std::size_t n = 0; n < N; ++n) {
            const T* g = go.data() + n * out_;
            for (std::size_t o = 0; o < out_; ++o) gb_[o] += g[o];
        }
        detail::gemm_fk(gw_.data(), go.data(), x_.data(), N, in_, out_);
        if (!want_input_grad) return Tensor<T>();
        Tensor<T> gx(Shape{N, in_});
        detail::gemm_jkf(gx.data(), go.data(), w_.data(), N, out_, in_);
        return gx;
    }

    std::vector<ParamRef<T>> trainable() override {
        return {{"weight", &w_, &gw_}, {"bias", &b_, &gb_}};
    }

private:
    void check_input_shape(const Shape& in) const {
        if (in.size() != 2) fail("shape", "dense expects rank-2 input (N,features), got " + shape_str(in));
        if (in[1] != in_)
            fail("shape", "dense feature mismatch: input has " + std::to_string(in[1]) + ", layer expects " +
                              std::to_string(in_));
    }

    std::size_t in_, out_;
    Tensor<T> w_, b_, gw_, gb_, x_;
    std::vector<T> wt_;
};

// ---------------------------------------------------------------------------
// Softmax + cross entropy head. Loss is the mean over the batch; the gradient
// is (softmax(logits) - onehot) / N.
// ---------------------------------------------------------------------------
template <typename T>
struct SoftmaxXent {
    static Tensor<T> probs(const Tensor<T>& logits) {
        if (logits.rank() != 2) fail("shape", "softmax expects (N,K) logits, got " + shape_str(logits.shape()));
        const std::size_t N = logits.shape()[0], K = logits.shape()[1];
        Tensor<T> p(logits.shape());
        for (std::size_t n = 0; n < N; ++n) {
            const T* row = logits.data() + n * K;
            T* dst = p.data() + n * K;
            T m = row[0];
            for (std::size_t k = 1; k < K; ++k) m = row[k] > m ? row[k] : m;
            T s = T(0);
            for (std::size_t k = 0; k < K; ++k) {
                dst[k] = std::exp(row[k] - m);
                s += dst[k];
            }
            for (std::size_t k = 0; k < K; ++k) dst[k] /= s;
        }
        return p;
    }

    static std::pair<T, Tensor<T>> loss_and_grad(const Tensor<T>& logits, const std::vector<int>& labels) {
        const std::size_t N = logits.shape()[0], K = logits.shape()[1];
        if (labels.size() != N) fail("shape", "label count does not match batch size");
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= K)
                fail("label", "label " + std::to_string(y) + " out of range for " + std::to_string(K) + " classes");
        Tensor<T> grad = probs(logits);
        T loss = T(0);
        for (std::size_t n = 0; n < N; ++n) {
            T* row = grad.data() + n * K;
            const auto y = static_cast<std::size_t>(labels[n]);
            // -log softmax, recomputed stably from the logit row
            const T* lr = logits.data() + n * K;
            T m = lr[0];
            for (std::size_t k = 1; k < K; ++k) m = lr[k] > m ? lr[k] : m;
            T s = T(0);
            for (std::size_t k = 0; k < K; ++k) s += std::exp(lr[k] - m);
            loss += -(lr[y] - m - std::log(s));
            row[y] -= T(1);
        }
        const T invn = T(1) / static_cast<T>(N);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= invn;
        return {loss * invn, std::move(grad)};
    }
};

// ---------------------------------------------------------------------------
// Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8 defaults).
// ---------------------------------------------------------------------------
template <typename T>
struct AdamState {
    Tensor<T> m, v;
    std::int64_t step = 0;
    double lr = 0.001;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    AdamState() = default;
    AdamState(const Shape& shape, double lr_) : m(shape), v(shape), lr(lr_) {}
};

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& s, const std::string& name) {
    if (!param.same_shape(grad) || !param.same_shape(s.m))
        fail("optimizer", "shape mismatch in adam update for " + name);
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i])) fail("optimizer", "non-finite gradient for " + name);
    s.step += 1;
    const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
    const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(s.beta1, static_cast<double>(s.step))));
    const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(s.beta2, static_cast<double>(s.step))));
    const T lr = static_cast<T>(s.lr), eps = static_cast<T>(s.eps);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        s.m[i] = b1 * s.m[i] + (T(1) - b1) * g;
        s.v[i] = b2 * s.v[i] + (T(1) - b2) * g * g;
        const T mhat = s.m[i] * c1;
        const T vhat = s.v[i] * c2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// ---------------------------------------------------------------------------
// Ordered layer sequence with qualified parameter names. Models wrap this.
// ---------------------------------------------------------------------------
template <typename T>
class LayerStack {
public:
    void add(std::unique_ptr<Layer<T>> layer) {
        labels_.push_back(std::string(layer->kind()) + "_" + std::to_string(layers_.size()));
        layers_.push_back(std::move(layer));
    }

    std::size_t size() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const std::string& label(std::size_t i) const { return labels_[i]; }

    Shape output_shape(Shape in) const {
        for (const auto& l : layers_) in = l->output_shape(in);
        return in;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        Tensor<T> cur = x;
        for (auto& l : layers_) cur = l->forward(cur, train);
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& go, bool want_input_grad = false) {
        Tensor<T> g = go;
        for (std::size_t i = layers_.size(); i-- > 0;)
            g = layers_[i]->backward(g, i > 0 || want_input_grad);
        return g;
    }

    std::vector<ParamRef<T>> trainable() {
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto p : layers_[i]->trainable())
                out.push_back({labels_[i] + "." + p.name, p.value, p.grad});
        return out;
    }

    // trainable followed by running state per layer, in declaration order —
    // the checkpoint block order.
    std::vector<ParamRef<T>> all_blocks() {
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            for (auto p : layers_[i]->trainable())
                out.push_back({labels_[i] + "." + p.name, p.value, p.grad});
            for (auto p : layers_[i]->state())
                out.push_back({labels_[i] + "." + p.name, p.value, nullptr});
        }
        return out;
    }

    void zero_grads() {
        for (auto p : trainable())
            if (p.grad) std::fill(p.grad->buffer().begin(), p.grad->buffer().end(), T(0));
    }

    std::int64_t trainable_count() {
        std::int64_t n = 0;
        for (auto p : trainable()) n += static_cast<std::int64_t>(p.value->size());
        return n;
    }

    void set_pool(ThreadPool* p) {
        for (auto& l : layers_) l->set_pool(p);
    }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<std::string> labels_;
};

// ---------------------------------------------------------------------------
// Central finite-difference gradient checker (64-bit only). Reports the max
// relative error per parameter block plus the input block.
// ---------------------------------------------------------------------------
struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double max_rel_err = 0.0;
    bool passed(double tol) const { return max_rel_err < tol; }
};

namespace detail {

inline double rel_err(double a, double n) {
    const double denom = std::max(std::abs(a) + std::abs(n), 1e-6);
    return std::abs(a - n) / denom;
}

template <typename LossFn>
GradCheckReport grad_check_impl(LayerStack<double>& stack, Tensor<double> x, LossFn&& loss_of,
                                const Tensor<double>& grad_out_seed, double h) {
    stack.zero_grads();
    Tensor<double> out = stack.forward(x, true);
    (void)out;
    Tensor<double> gx = stack.backward(grad_out_seed, true);

    // copy analytic grads before the probing passes overwrite layer caches
    auto params = stack.trainable();
    std::vector<Tensor<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(*p.grad);

    GradCheckReport report;
    auto probe_block = [&](const std::string& name, Tensor<double>& storage, const Tensor<double>& ana) {
        GradCheckBlock blk{name, 0.0};
        for (std::size_t i = 0; i < storage.size(); ++i) {
            const double orig = storage[i];
            storage[i] = orig + h;
            const double lp = loss_of(x);
            storage[i] = orig - h;
            const double lm = loss_of(x);
            storage[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            blk.max_rel_err = std::max(blk.max_rel_err, rel_err(ana[i], numeric));
        }
        report.blocks.push_back(blk);
        report.max_rel_err = std::max(report.max_rel_err, blk.max_rel_err);
    };

    for (std::size_t b = 0; b < params.size(); ++b) probe_block(params[b].name, *params[b].value, analytic[b]);
    probe_block("input", x, gx);
    return report;
}

}  // namespace detail

// loss = sum(forward(x) .* projection); checks layers without a class head.
inline GradCheckReport grad_check_proj(LayerStack<double>& stack, const Tensor<double>& x,
                                       const Tensor<double>& projection, double h = 1e-5) {
    auto loss_of = [&](const Tensor<double>& xin) {
        Tensor<double> out = stack.forward(xin, true);
        if (!out.same_shape(projection)) fail("shape", "projection shape mismatch in grad check");
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
        return s;
    };
    return detail::grad_check_impl(stack, x, loss_of, projection, h);
}

// loss = softmax cross entropy against labels; checks full classifiers.
inline GradCheckReport grad_check_xent(LayerStack<double>& stack, const Tensor<double>& x,
                                       const std::vector<int>& labels, double h = 1e-5) {
    auto loss_of = [&](const Tensor<double>& xin) {
        Tensor<double> logits = stack.forward(xin, true);
        auto [loss, grad] = SoftmaxXent<double>::loss_and_grad(logits, labels);
        (void)grad;
        return loss;
    };
    Tensor<double> logits = stack.forward(x, true);
    auto [loss, grad_seed] = SoftmaxXent<double>::loss_and_grad(logits, labels);
    (void)loss;
    return detail::grad_check_impl(stack, x, loss_of, grad_seed, h);
}

}  // namespace crophybrid
