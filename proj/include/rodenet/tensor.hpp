#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rodenet/fixed_q20.hpp"

namespace rodenet {

/// Dense channel-major tensor: element (c, i, j) lives at ((c*H)+i)*W+j.
template <typename T>
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Tensor() = default;

    Tensor(int channels, int height, int width)
        : c(channels), h(height), w(width) {
        if (channels < 1 || height < 1 || width < 1) {
            throw std::invalid_argument("Tensor: shape components must be >= 1");
        }
        v.assign(static_cast<std::size_t>(channels) * height * width, T{});
    }

    std::size_t index(int ci, int i, int j) const {
        return (static_cast<std::size_t>(ci) * h + i) * w + j;
    }

    T& at(int ci, int i, int j) { return v[index(ci, i, j)]; }
    const T& at(int ci, int i, int j) const { return v[index(ci, i, j)]; }

    std::size_t size() const { return v.size(); }

    bool same_shape(const Tensor& o) const {
        return c == o.c && h == o.h && w == o.w;
    }
};

using TensorF = Tensor<double>;
using TensorQ = Tensor<FixedQ20>;

/// Appends one constant channel carrying the time value t. The first C
/// channels are copied bitwise.
template <typename T>
Tensor<T> concat_time_channel(const Tensor<T>& z, double t) {
    Tensor<T> out(z.c + 1, z.h, z.w);
    std::copy(z.v.begin(), z.v.end(), out.v.begin());
    T tval;
    if constexpr (std::is_same_v<T, FixedQ20>) {
        tval = q20_from_f64(t);
    } else {
        tval = static_cast<T>(t);
    }
    const std::size_t base = static_cast<std::size_t>(z.c) * z.h * z.w;
    std::fill(out.v.begin() + base, out.v.end(), tval);
    return out;
}

// --- helpers used by the ODE solver ---------------------------------------

inline void axpy_in_place(TensorF& y, double a, const TensorF& x) {
    if (!y.same_shape(x)) throw std::invalid_argument("axpy_in_place: shape mismatch");
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += a * x.v[i];
}

inline void axpy_in_place(TensorQ& y, double a, const TensorQ& x) {
    if (!y.same_shape(x)) throw std::invalid_argument("axpy_in_place: shape mismatch");
    const FixedQ20 qa = q20_from_f64(a);
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        y.v[i] = q20_add(y.v[i], q20_mul(qa, x.v[i]));
    }
}

inline bool all_finite(const TensorF& x) {
    for (double e : x.v) {
        if (!std::isfinite(e)) return false;
    }
    return true;
}

inline bool all_finite(const TensorQ&) { return true; }

inline TensorQ quantize(const TensorF& x) {
    TensorQ out(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = q20_from_f64(x.v[i]);
    return out;
}

inline TensorF dequantize(const TensorQ& x) {
    TensorF out(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = q20_to_f64(x.v[i]);
    return out;
}

}  // namespace rodenet
