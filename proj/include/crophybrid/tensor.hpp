#pragma once

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <type_traits>

#include "crophybrid/common.hpp"

namespace crophybrid {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Dense N-dimensional array, C-order (last axis fastest). Training and
// inference run in float; gradient checking instantiates the same code with
// double. Rank-0 tensors are scalars with one element.
//
// Tensors are value types: safe to share read-only across threads; in-place
// mutation (the optimizer update path) requires exclusive access.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        data_.assign(checked_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size())
            fail("shape", "data length " + std::to_string(data_.size()) + " does not match shape " +
                              shape_str(shape_));
    }

    static Tensor full(Shape shape, T fill) { return Tensor(std::move(shape), fill); }
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const {
        if (axis >= shape_.size()) fail("axis", "axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
        return shape_[axis];
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& buffer() { return data_; }
    const std::vector<T>& buffer() const { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    Shape strides() const {
        Shape st(shape_.size());
        std::size_t acc = 1;
        for (std::size_t i = shape_.size(); i-- > 0;) {
            st[i] = acc;
            acc *= shape_[i];
        }
        return st;
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size())
            fail("shape", "index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                              std::to_string(shape_.size()));
        std::size_t off = 0, axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis]) fail("axis", "index " + std::to_string(i) + " out of extent " + std::to_string(shape_[axis]));
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    const T& at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    // Shape change without touching the buffer.
    Tensor reshaped(Shape ns) const {
        if (checked_size(ns) != data_.size())
            fail("shape", "reshape " + shape_str(shape_) + " -> " + shape_str(ns) + " changes element count");
        Tensor out;
        out.shape_ = std::move(ns);
        out.data_ = data_;
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    static std::size_t checked_size(const Shape& s) {
        std::size_t n = 1;
        for (std::size_t e : s) {
            if (e < 1) fail("shape", "extent must be >= 1 in " + shape_str(s));
            n *= e;
        }
        return n;
    }

    Shape shape_;
    std::vector<T> data_;
};

// Removes the named size-1 axes; the buffer is untouched.
template <typename T>
Tensor<T> squeeze(const Tensor<T>& t, const std::vector<std::size_t>& axes) {
    std::vector<bool> drop(t.rank(), false);
    for (std::size_t a : axes) {
        if (a >= t.rank()) fail("axis", "squeeze axis " + std::to_string(a) + " out of range for " + shape_str(t.shape()));
        if (t.shape()[a] != 1)
            fail("squeeze", "axis " + std::to_string(a) + " has extent " + std::to_string(t.shape()[a]) + ", expected 1");
        drop[a] = true;
    }
    Shape ns;
    for (std::size_t i = 0; i < t.rank(); ++i)
        if (!drop[i]) ns.push_back(t.shape()[i]);
    return t.reshaped(std::move(ns));
}

// Inserts size-1 axes at the given positions of the result shape.
template <typename T>
Tensor<T> unsqueeze(const Tensor<T>& t, const std::vector<std::size_t>& axes) {
    const std::size_t nr = t.rank() + axes.size();
    std::vector<bool> ins(nr, false);
    for (std::size_t a : axes) {
        if (a >= nr) fail("axis", "unsqueeze axis " + std::to_string(a) + " out of range");
        if (ins[a]) fail("axis", "duplicate unsqueeze axis " + std::to_string(a));
        ins[a] = true;
    }
    Shape ns;
    std::size_t src = 0;
    for (std::size_t i = 0; i < nr; ++i)
        ns.push_back(ins[i] ? 1 : t.shape()[src++]);
    return t.reshaped(std::move(ns));
}

// ---- elementwise arithmetic: equal shapes or scalar broadcast only ----

namespace detail {

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F&& f, const char* opname) {
    if (a.same_shape(b)) {
        Tensor<T> out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    if (b.size() == 1) {
        Tensor<T> out(a.shape());
        const T s = b[0];
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], s);
        return out;
    }
    if (a.size() == 1) {
        Tensor<T> out(b.shape());
        const T s = a[0];
        for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(s, b[i]);
        return out;
    }
    fail("shape", std::string(opname) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                      " are not conformable (equal shapes or scalar broadcast)");
}

}  // namespace detail

// Division by exact zero follows IEEE rules (inf/nan propagate, not trapped).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return detail::zip(a, b, [](T x, T y) { return x + y; }, "add"); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return detail::zip(a, b, [](T x, T y) { return x - y; }, "sub"); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return detail::zip(a, b, [](T x, T y) { return x * y; }, "mul"); }
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return detail::zip(a, b, [](T x, T y) { return x / y; }, "div"); }
template <typename T> Tensor<T> max(const Tensor<T>& a, const Tensor<T>& b) { return detail::zip(a, b, [](T x, T y) { return x > y ? x : y; }, "max"); }

template <typename T> Tensor<T> add(const Tensor<T>& a, T s) { return add(a, Tensor<T>(Shape{1}, s)); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, T s) { return mul(a, Tensor<T>(Shape{1}, s)); }

enum class Reduce { Sum, Mean, Max };

// Removes `axis`; accumulation runs in flat C-order, so the per-output-slot
// summation order is pinned.
template <typename T>
Tensor<T> reduce(Reduce op, const Tensor<T>& t, std::size_t axis) {
    if (axis >= t.rank()) fail("axis", "reduce axis " + std::to_string(axis) + " out of range for " + shape_str(t.shape()));
    Shape ns;
    for (std::size_t i = 0; i < t.rank(); ++i)
        if (i != axis) ns.push_back(t.shape()[i]);
    if (ns.empty()) ns = Shape{};  // rank-0 scalar

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= t.shape()[i];
    for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.shape()[i];
    const std::size_t n = t.shape()[axis];

    Tensor<T> out(ns, op == Reduce::Max ? -std::numeric_limits<T>::infinity() : T(0));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
            const T* src = t.data() + (o * n + k) * inner;
            T* dst = out.data() + o * inner;
            if (op == Reduce::Max) {
                for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] > dst[i] ? src[i] : dst[i];
            } else {
                for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
            }
        }
    }
    if (op == Reduce::Mean)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<T>(n);
    return out;
}

// Whole-tensor reduction as a single left fold over the flat buffer.
template <typename T>
T reduce_all(Reduce op, const Tensor<T>& t) {
    if (op == Reduce::Max) {
        T m = -std::numeric_limits<T>::infinity();
        for (std::size_t i = 0; i < t.size(); ++i) m = t[i] > m ? t[i] : m;
        return m;
    }
    T acc = T(0);
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i];
    return op == Reduce::Mean ? acc / static_cast<T>(t.size()) : acc;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        fail("shape", "matmul requires 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (b.shape()[0] != k)
        fail("shape", "matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t n = b.shape()[1];
    Tensor<T> out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = a[i * k + kk];
            const T* brow = b.data() + kk * n;
            T* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return out;
}

// ---- tensor binary file ("CTNS") ----
// magic "CTNS", u8 version=1, u8 dtype (0=f32, 1=f64), u8 rank,
// little-endian u32 extents, then raw little-endian values in C-order.

namespace detail {
template <typename T> constexpr std::uint8_t dtype_code() { return std::is_same_v<T, float> ? 0 : 1; }
}

template <typename T>
void write_tensor_stream(const Tensor<T>& t, std::ostream& f, const std::string& what) {
    if (t.rank() > 255) fail("io", "rank too large for tensor file: " + what);
    std::vector<std::uint8_t> head;
    head.insert(head.end(), {'C', 'T', 'N', 'S'});
    head.push_back(1);
    head.push_back(detail::dtype_code<T>());
    head.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) {
        if (e > std::numeric_limits<std::uint32_t>::max()) fail("io", "extent exceeds u32: " + what);
        put_u32le(head, static_cast<std::uint32_t>(e));
    }
    f.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
    // host is little-endian; values go out verbatim
    static_assert(std::endian::native == std::endian::little, "tensor files are little-endian");
    f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!f) fail("io", "short write: " + what);
}

template <typename T>
void save_tensor(const Tensor<T>& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("io", "cannot open for write: " + path);
    write_tensor_stream(t, f, path);
}

template <typename T>
Tensor<T> read_tensor_stream(std::istream& f, const std::string& what) {
    std::uint8_t fixed[7];
    f.read(reinterpret_cast<char*>(fixed), 7);
    if (!f || std::memcmp(fixed, "CTNS", 4) != 0) fail("io", "not a tensor file: " + what);
    if (fixed[4] != 1) fail("io", "unsupported tensor file version in " + what);
    if (fixed[5] != detail::dtype_code<T>())
        fail("io", "dtype mismatch in " + what + " (file has " + (fixed[5] == 0 ? "f32" : "f64") + ")");
    const std::size_t rank = fixed[6];
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        std::uint8_t b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        shape[i] = get_u32le(b);
    }
    if (!f) fail("io", "truncated tensor header: " + what);
    Tensor<T> t(shape);
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!f) fail("io", "truncated tensor payload: " + what);
    return t;
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("io", "cannot open: " + path);
    return read_tensor_stream<T>(f, path);
}

}  // namespace crophybrid
