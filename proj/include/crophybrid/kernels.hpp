#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace crophybrid::detail {

// Inner kernels shared by the convolution and dense layers. Two contractions
// cover everything:
//
//   gemm_jkf:  out[j][f] += sum_k col[j][k] * wt[k][f]
//   gemm_fk:   gw[f][k]  += sum_j go[j][f]  * col[j][k]
//
// Every path (scalar, AVX2, AVX-512) performs one fused multiply-add per
// element in the same order: gemm_jkf walks k strictly upward per output
// element, gemm_fk walks j in fixed blocks of four. The results are therefore
// bit-identical across paths, across chunkings, and against a naive loop nest
// that uses std::fma in the same order — which the test suite's reference
// implementation does.

inline constexpr std::size_t kPanelK = 256;  // wt rows kept cache-hot per pass

// ---- generic (any F/K, any scalar type) ----

template <typename T>
void gemm_jkf_generic(T* __restrict out, const T* __restrict col, const T* __restrict wt,
                      std::size_t J, std::size_t K, std::size_t F) {
    for (std::size_t k0 = 0; k0 < K; k0 += kPanelK) {
        const std::size_t k1 = std::min(K, k0 + kPanelK);
        std::size_t j = 0;
        for (; j + 4 <= J; j += 4) {
            const T* c0 = col + (j + 0) * K;
            const T* c1 = col + (j + 1) * K;
            const T* c2 = col + (j + 2) * K;
            const T* c3 = col + (j + 3) * K;
            T* __restrict o0 = out + (j + 0) * F;
            T* __restrict o1 = out + (j + 1) * F;
            T* __restrict o2 = out + (j + 2) * F;
            T* __restrict o3 = out + (j + 3) * F;
            for (std::size_t k = k0; k < k1; ++k) {
                const T* w = wt + k * F;
                const T a0 = c0[k], a1 = c1[k], a2 = c2[k], a3 = c3[k];
                for (std::size_t f = 0; f < F; ++f) {
                    o0[f] = std::fma(a0, w[f], o0[f]);
                    o1[f] = std::fma(a1, w[f], o1[f]);
                    o2[f] = std::fma(a2, w[f], o2[f]);
                    o3[f] = std::fma(a3, w[f], o3[f]);
                }
            }
        }
        for (; j < J; ++j) {
            const T* c = col + j * K;
            T* __restrict o = out + j * F;
            for (std::size_t k = k0; k < k1; ++k) {
                const T a = c[k];
                const T* w = wt + k * F;
                for (std::size_t f = 0; f < F; ++f) o[f] = std::fma(a, w[f], o[f]);
            }
        }
    }
}

template <typename T>
void gemm_fk_generic(T* __restrict gw, const T* __restrict go, const T* __restrict col,
                     std::size_t J, std::size_t K, std::size_t F) {
    for (std::size_t k0 = 0; k0 < K; k0 += kPanelK) {
        const std::size_t k1 = std::min(K, k0 + kPanelK);
        std::size_t j = 0;
        for (; j + 4 <= J; j += 4) {
            const T* g0 = go + (j + 0) * F;
            const T* g1 = go + (j + 1) * F;
            const T* g2 = go + (j + 2) * F;
            const T* g3 = go + (j + 3) * F;
            const T* c0 = col + (j + 0) * K;
            const T* c1 = col + (j + 1) * K;
            const T* c2 = col + (j + 2) * K;
            const T* c3 = col + (j + 3) * K;
            for (std::size_t f = 0; f < F; ++f) {
                T* __restrict w = gw + f * K;
                const T b0 = g0[f], b1 = g1[f], b2 = g2[f], b3 = g3[f];
                for (std::size_t k = k0; k < k1; ++k) {
                    T acc = w[k];
                    acc = std::fma(b0, c0[k], acc);
                    acc = std::fma(b1, c1[k], acc);
                    acc = std::fma(b2, c2[k], acc);
                    acc = std::fma(b3, c3[k], acc);
                    w[k] = acc;
                }
            }
        }
        for (; j < J; ++j) {
            const T* g = go + j * F;
            const T* c = col + j * K;
            for (std::size_t f = 0; f < F; ++f) {
                T* __restrict w = gw + f * K;
                const T b = g[f];
                for (std::size_t k = k0; k < k1; ++k) w[k] = std::fma(b, c[k], w[k]);
            }
        }
    }
}

// ---- SIMD fast paths ----
// A column stripe of the output (width NV vectors) is processed with
// register-resident accumulators; ldo/ldw are full row strides so stripes of
// a wider matrix can reuse the same kernel.

#if defined(__AVX512F__)

struct SimdF32 {
    using V = __m512;
    static constexpr std::size_t lanes = 16;
    static V load(const float* p) { return _mm512_loadu_ps(p); }
    static void store(float* p, V v) { _mm512_storeu_ps(p, v); }
    static V set1(float x) { return _mm512_set1_ps(x); }
    static V fmadd(V a, V b, V c) { return _mm512_fmadd_ps(a, b, c); }
};
struct SimdF64 {
    using V = __m512d;
    static constexpr std::size_t lanes = 8;
    static V load(const double* p) { return _mm512_loadu_pd(p); }
    static void store(double* p, V v) { _mm512_storeu_pd(p, v); }
    static V set1(double x) { return _mm512_set1_pd(x); }
    static V fmadd(V a, V b, V c) { return _mm512_fmadd_pd(a, b, c); }
};
#define CROPHYBRID_SIMD 1

#elif defined(__AVX2__) && defined(__FMA__)

struct SimdF32 {
    using V = __m256;
    static constexpr std::size_t lanes = 8;
    static V load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
    static V set1(float x) { return _mm256_set1_ps(x); }
    static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
};
struct SimdF64 {
    using V = __m256d;
    static constexpr std::size_t lanes = 4;
    static V load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
    static V set1(double x) { return _mm256_set1_pd(x); }
    static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
};
#define CROPHYBRID_SIMD 1

#endif

#ifdef CROPHYBRID_SIMD

template <typename T> struct SimdFor;
template <> struct SimdFor<float> { using type = SimdF32; };
template <> struct SimdFor<double> { using type = SimdF64; };

template <typename T, std::size_t NV, std::size_t JB>
void gemm_jkf_simd_block(T* out, std::size_t ldo, const T* col, std::size_t ldc,
                         const T* wt, std::size_t ldw, std::size_t J, std::size_t K) {
    using S = typename SimdFor<T>::type;
    using V = typename S::V;
    constexpr std::size_t L = S::lanes;
    for (std::size_t k0 = 0; k0 < K; k0 += kPanelK) {
        const std::size_t k1 = std::min(K, k0 + kPanelK);
        std::size_t j = 0;
        for (; j + JB <= J; j += JB) {
            V acc[JB][NV];
            for (std::size_t r = 0; r < JB; ++r)
                for (std::size_t v = 0; v < NV; ++v) acc[r][v] = S::load(out + (j + r) * ldo + v * L);
            for (std::size_t k = k0; k < k1; ++k) {
                V w[NV];
                for (std::size_t v = 0; v < NV; ++v) w[v] = S::load(wt + k * ldw + v * L);
                for (std::size_t r = 0; r < JB; ++r) {
                    const V a = S::set1(col[(j + r) * ldc + k]);
                    for (std::size_t v = 0; v < NV; ++v) acc[r][v] = S::fmadd(a, w[v], acc[r][v]);
                }
            }
            for (std::size_t r = 0; r < JB; ++r)
                for (std::size_t v = 0; v < NV; ++v) S::store(out + (j + r) * ldo + v * L, acc[r][v]);
        }
        for (; j < J; ++j) {
            V acc[NV];
            for (std::size_t v = 0; v < NV; ++v) acc[v] = S::load(out + j * ldo + v * L);
            for (std::size_t k = k0; k < k1; ++k) {
                const V a = S::set1(col[j * ldc + k]);
                for (std::size_t v = 0; v < NV; ++v)
                    acc[v] = S::fmadd(a, S::load(wt + k * ldw + v * L), acc[v]);
            }
            for (std::size_t v = 0; v < NV; ++v) S::store(out + j * ldo + v * L, acc[v]);
        }
    }
}

template <typename T>
void gemm_jkf_simd_stripe(T* out, std::size_t ldo, const T* col, std::size_t ldc,
                          const T* wt, std::size_t ldw, std::size_t J, std::size_t K, std::size_t nv) {
    switch (nv) {
        case 1: gemm_jkf_simd_block<T, 1, 8>(out, ldo, col, ldc, wt, ldw, J, K); break;
        case 2: gemm_jkf_simd_block<T, 2, 8>(out, ldo, col, ldc, wt, ldw, J, K); break;
        case 3: gemm_jkf_simd_block<T, 3, 6>(out, ldo, col, ldc, wt, ldw, J, K); break;
        case 4: gemm_jkf_simd_block<T, 4, 6>(out, ldo, col, ldc, wt, ldw, J, K); break;
        case 5: gemm_jkf_simd_block<T, 5, 4>(out, ldo, col, ldc, wt, ldw, J, K); break;
        case 6: gemm_jkf_simd_block<T, 6, 4>(out, ldo, col, ldc, wt, ldw, J, K); break;
        case 7: gemm_jkf_simd_block<T, 7, 3>(out, ldo, col, ldc, wt, ldw, J, K); break;
        default: gemm_jkf_simd_block<T, 8, 3>(out, ldo, col, ldc, wt, ldw, J, K); break;
    }
}

template <typename T, std::size_t NV>
void gemm_fk_simd_block(T* gw, std::size_t ldg, const T* go, std::size_t ldgo,
                        const T* col, std::size_t ldc, std::size_t J, std::size_t F) {
    using S = typename SimdFor<T>::type;
    using V = typename S::V;
    constexpr std::size_t L = S::lanes;
    std::size_t j = 0;
    for (; j + 4 <= J; j += 4) {
        const T* g0 = go + (j + 0) * ldgo;
        const T* g1 = go + (j + 1) * ldgo;
        const T* g2 = go + (j + 2) * ldgo;
        const T* g3 = go + (j + 3) * ldgo;
        const T* c0 = col + (j + 0) * ldc;
        const T* c1 = col + (j + 1) * ldc;
        const T* c2 = col + (j + 2) * ldc;
        const T* c3 = col + (j + 3) * ldc;
        for (std::size_t f = 0; f < F; ++f) {
            T* w = gw + f * ldg;
            const V b0 = S::set1(g0[f]), b1 = S::set1(g1[f]), b2 = S::set1(g2[f]), b3 = S::set1(g3[f]);
            for (std::size_t v = 0; v < NV; ++v) {
                V acc = S::load(w + v * L);
                acc = S::fmadd(b0, S::load(c0 + v * L), acc);
                acc = S::fmadd(b1, S::load(c1 + v * L), acc);
                acc = S::fmadd(b2, S::load(c2 + v * L), acc);
                acc = S::fmadd(b3, S::load(c3 + v * L), acc);
                S::store(w + v * L, acc);
            }
        }
    }
    for (; j < J; ++j) {
        const T* g = go + j * ldgo;
        const T* c = col + j * ldc;
        for (std::size_t f = 0; f < F; ++f) {
            T* w = gw + f * ldg;
            const V b = S::set1(g[f]);
            for (std::size_t v = 0; v < NV; ++v) {
                V acc = S::load(w + v * L);
                acc = S::fmadd(b, S::load(c + v * L), acc);
                S::store(w + v * L, acc);
            }
        }
    }
}

template <typename T>
void gemm_fk_simd_stripe(T* gw, std::size_t ldg, const T* go, std::size_t ldgo,
                         const T* col, std::size_t ldc, std::size_t J, std::size_t F, std::size_t nv) {
    switch (nv) {
        case 1: gemm_fk_simd_block<T, 1>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        case 2: gemm_fk_simd_block<T, 2>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        case 3: gemm_fk_simd_block<T, 3>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        case 4: gemm_fk_simd_block<T, 4>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        case 5: gemm_fk_simd_block<T, 5>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        case 6: gemm_fk_simd_block<T, 6>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        case 7: gemm_fk_simd_block<T, 7>(gw, ldg, go, ldgo, col, ldc, J, F); break;
        default: gemm_fk_simd_block<T, 8>(gw, ldg, go, ldgo, col, ldc, J, F); break;
    }
}

#endif  // CROPHYBRID_SIMD

// ---- public entry points ----

template <typename T>
void gemm_jkf(T* out, const T* col, const T* wt, std::size_t J, std::size_t K, std::size_t F) {
#ifdef CROPHYBRID_SIMD
    using S = typename SimdFor<T>::type;
    constexpr std::size_t L = S::lanes;
    constexpr std::size_t stripe = 8 * L;  // at most 8 vectors wide per pass
    if (F % L == 0) {
        for (std::size_t f0 = 0; f0 < F; f0 += stripe) {
            const std::size_t w = std::min(stripe, F - f0);
            gemm_jkf_simd_stripe(out + f0, F, col, K, wt + f0, F, J, K, w / L);
        }
        return;
    }
#endif
    gemm_jkf_generic(out, col, wt, J, K, F);
}

template <typename T>
void gemm_fk(T* gw, const T* go, const T* col, std::size_t J, std::size_t K, std::size_t F) {
#ifdef CROPHYBRID_SIMD
    using S = typename SimdFor<T>::type;
    constexpr std::size_t L = S::lanes;
    constexpr std::size_t stripe = 8 * L;
    if (K % L == 0) {
        for (std::size_t k0 = 0; k0 < K; k0 += stripe) {
            const std::size_t w = std::min(stripe, K - k0);
            gemm_fk_simd_stripe(gw + k0, K, go, F, col + k0, K, J, F, w / L);
        }
        return;
    }
#endif
    gemm_fk_generic(gw, go, col, J, K, F);
}

// ---- im2col for the (H, W, T, C) channels-last layout ----
// Column layout: row j = output position (oh, ow, ot) in C-order, column
// k = (kt, kh, kw, c) in C-order, matching the (F, kt, kh, kw, c) weight
// buffer. Out-of-range taps are written as explicit zeros.

template <typename T>
void im2col3d(const T* x, std::size_t H, std::size_t W, std::size_t Tt, std::size_t C,
              std::size_t KT, std::size_t KH, std::size_t KW,
              std::size_t ph, std::size_t pw, std::size_t pt, T* col) {
    const std::size_t OH = H + 2 * ph - KH + 1;
    const std::size_t OW = W + 2 * pw - KW + 1;
    const std::size_t OT = Tt + 2 * pt - KT + 1;
    T* dst = col;
    for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
            for (std::size_t ot = 0; ot < OT; ++ot)
                for (std::size_t kt = 0; kt < KT; ++kt) {
                    const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + kt) - static_cast<std::ptrdiff_t>(pt);
                    for (std::size_t kh = 0; kh < KH; ++kh) {
                        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - static_cast<std::ptrdiff_t>(ph);
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - static_cast<std::ptrdiff_t>(pw);
                            if (it >= 0 && it < static_cast<std::ptrdiff_t>(Tt) && ih >= 0 &&
                                ih < static_cast<std::ptrdiff_t>(H) && iw >= 0 && iw < static_cast<std::ptrdiff_t>(W)) {
                                const T* src = x + ((static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * Tt +
                                                    static_cast<std::size_t>(it)) * C;
                                std::memcpy(dst, src, C * sizeof(T));
                            } else {
                                std::memset(dst, 0, C * sizeof(T));
                            }
                            dst += C;
                        }
                    }
                }
}

template <typename T>
void col2im3d(const T* col, std::size_t H, std::size_t W, std::size_t Tt, std::size_t C,
              std::size_t KT, std::size_t KH, std::size_t KW,
              std::size_t ph, std::size_t pw, std::size_t pt, T* gx) {
    const std::size_t OH = H + 2 * ph - KH + 1;
    const std::size_t OW = W + 2 * pw - KW + 1;
    const std::size_t OT = Tt + 2 * pt - KT + 1;
    const T* src = col;
    for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
            for (std::size_t ot = 0; ot < OT; ++ot)
                for (std::size_t kt = 0; kt < KT; ++kt) {
                    const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + kt) - static_cast<std::ptrdiff_t>(pt);
                    for (std::size_t kh = 0; kh < KH; ++kh) {
                        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) - static_cast<std::ptrdiff_t>(ph);
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) - static_cast<std::ptrdiff_t>(pw);
                            if (it >= 0 && it < static_cast<std::ptrdiff_t>(Tt) && ih >= 0 &&
                                ih < static_cast<std::ptrdiff_t>(H) && iw >= 0 && iw < static_cast<std::ptrdiff_t>(W)) {
                                T* dst = gx + ((static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * Tt +
                                               static_cast<std::size_t>(it)) * C;
                                for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                            }
                            src += C;
                        }
                    }
                }
}

// 1-D variants on the (T, C) layout; column k = (kt, c).

template <typename T>
void im2col1d(const T* x, std::size_t Tt, std::size_t C, std::size_t KT, std::size_t pt, T* col) {
    const std::size_t OT = Tt + 2 * pt - KT + 1;
    T* dst = col;
    for (std::size_t ot = 0; ot < OT; ++ot)
        for (std::size_t kt = 0; kt < KT; ++kt) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + kt) - static_cast<std::ptrdiff_t>(pt);
            if (it >= 0 && it < static_cast<std::ptrdiff_t>(Tt))
                std::memcpy(dst, x + static_cast<std::size_t>(it) * C, C * sizeof(T));
            else
                std::memset(dst, 0, C * sizeof(T));
            dst += C;
        }
}

template <typename T>
void col2im1d(const T* col, std::size_t Tt, std::size_t C, std::size_t KT, std::size_t pt, T* gx) {
    const std::size_t OT = Tt + 2 * pt - KT + 1;
    const T* src = col;
    for (std::size_t ot = 0; ot < OT; ++ot)
        for (std::size_t kt = 0; kt < KT; ++kt) {
            const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot + kt) - static_cast<std::ptrdiff_t>(pt);
            if (it >= 0 && it < static_cast<std::ptrdiff_t>(Tt)) {
                T* dst = gx + static_cast<std::size_t>(it) * C;
                for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
            }
            src += C;
        }
}

// wt[k][f] = w[f][k]; forward and weight-gradient kernels want the
// contraction-major transpose.
template <typename T>
void transpose_to(const T* w, std::size_t F, std::size_t K, T* wt) {
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t k = 0; k < K; ++k) wt[k * F + f] = w[f * K + k];
}

}  // namespace crophybrid::detail
