#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "rodenet/tensor.hpp"

namespace rodenet {

/// 3x3 convolution weights, (out, in, 3, 3), padding 1, no bias.
template <typename T>
struct ConvParams {
    int out_ch = 0;
    int in_ch = 0;
    int stride = 1;
    std::vector<T> w;  // out * in * 9

    ConvParams() = default;
    ConvParams(int out, int in, int s)
        : out_ch(out), in_ch(in), stride(s),
          w(static_cast<std::size_t>(out) * in * 9, T{}) {}

    std::size_t windex(int o, int c, int u, int v) const {
        return ((static_cast<std::size_t>(o) * in_ch + c) * 3 + u) * 3 + v;
    }
    T& wt(int o, int c, int u, int v) { return w[windex(o, c, u, v)]; }
    const T& wt(int o, int c, int u, int v) const { return w[windex(o, c, u, v)]; }
};

template <typename T>
struct BatchNormParams {
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T eps{};

    BatchNormParams() = default;
    explicit BatchNormParams(int channels) {
        gamma.assign(channels, T{});
        beta.assign(channels, T{});
        running_mean.assign(channels, T{});
        running_var.assign(channels, T{});
        if constexpr (std::is_same_v<T, FixedQ20>) {
            eps = FixedQ20{1 << (kQ20FracBits - 14)};  // 2^-14
        } else {
            eps = static_cast<T>(1e-5);
        }
    }
    int channels() const { return static_cast<int>(gamma.size()); }
};

enum class BnMode { kDynamic, kRunning };

/// Per-channel statistics captured from a dynamic-mode forward pass.
struct BnBatchStats {
    std::vector<double> mean, var;
};

struct HeadParams {
    int num_classes = 0;
    int in_ch = 0;
    std::vector<double> fc_w;  // num_classes * in_ch
    std::vector<double> fc_b;  // num_classes

    HeadParams() = default;
    HeadParams(int classes, int in)
        : num_classes(classes), in_ch(in),
          fc_w(static_cast<std::size_t>(classes) * in, 0.0), fc_b(classes, 0.0) {}
};

// --- forward ---------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
    if (x.c != p.in_ch) throw std::invalid_argument("conv2d_forward: channel mismatch");
    if (p.stride != 1 && p.stride != 2) throw std::invalid_argument("conv2d_forward: stride must be 1 or 2");
    if (x.h % p.stride != 0 || x.w % p.stride != 0) {
        throw std::invalid_argument("conv2d_forward: H and W must be divisible by stride");
    }
    const int oh = x.h / p.stride;
    const int ow = x.w / p.stride;
    Tensor<T> y(p.out_ch, oh, ow);
    for (int o = 0; o < p.out_ch; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                // One wide accumulator per output pixel, rounded once at the end.
                std::conditional_t<std::is_same_v<T, FixedQ20>, std::int64_t, double> acc{};
                for (int c = 0; c < p.in_ch; ++c) {
                    for (int u = 0; u < 3; ++u) {
                        const int yy = i * p.stride + u - 1;
                        if (yy < 0 || yy >= x.h) continue;
                        for (int v = 0; v < 3; ++v) {
                            const int xx = j * p.stride + v - 1;
                            if (xx < 0 || xx >= x.w) continue;
                            if constexpr (std::is_same_v<T, FixedQ20>) {
                                acc += static_cast<std::int64_t>(x.at(c, yy, xx).raw) *
                                       p.wt(o, c, u, v).raw;
                            } else {
                                acc += x.at(c, yy, xx) * p.wt(o, c, u, v);
                            }
                        }
                    }
                }
                if constexpr (std::is_same_v<T, FixedQ20>) {
                    y.at(o, i, j) = FixedQ20{detail::q20_saturate(detail::q20_round_q40(acc))};
                } else {
                    y.at(o, i, j) = acc;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const BatchNormParams<T>& p, BnMode mode,
                            BnBatchStats* captured = nullptr) {
    if (x.c != p.channels()) throw std::invalid_argument("batchnorm_forward: channel mismatch");
    Tensor<T> y(x.c, x.h, x.w);
    const int n = x.h * x.w;
    if (captured) {
        captured->mean.assign(x.c, 0.0);
        captured->var.assign(x.c, 0.0);
    }
    for (int c = 0; c < x.c; ++c) {
        if constexpr (std::is_same_v<T, FixedQ20>) {
            FixedQ20 mean, var;
            if (mode == BnMode::kDynamic) {
                std::int64_t sum = 0;
                for (int i = 0; i < x.h; ++i)
                    for (int j = 0; j < x.w; ++j) sum += x.at(c, i, j).raw;
                mean = FixedQ20{detail::q20_saturate(detail::q20_round_div(sum, n))};
                std::int64_t sq = 0;  // Q40 accumulator of squared deviations
                for (int i = 0; i < x.h; ++i) {
                    for (int j = 0; j < x.w; ++j) {
                        const std::int64_t d = static_cast<std::int64_t>(x.at(c, i, j).raw) - mean.raw;
                        sq += d * d;
                    }
                }
                var = FixedQ20{detail::q20_saturate(detail::q20_round_q40(detail::q20_round_div(sq, n)))};
            } else {
                mean = p.running_mean[c];
                var = p.running_var[c];
            }
            const FixedQ20 stddev = q20_sqrt(q20_add(var, p.eps));
            const FixedQ20 scale = q20_div(p.gamma[c], stddev);
            for (int i = 0; i < x.h; ++i) {
                for (int j = 0; j < x.w; ++j) {
                    const FixedQ20 d = q20_sub(x.at(c, i, j), mean);
                    y.at(c, i, j) = q20_add(q20_mul(d, scale), p.beta[c]);
                }
            }
            if (captured) {
                captured->mean[c] = q20_to_f64(mean);
                captured->var[c] = q20_to_f64(var);
            }
        } else {
            T mean, var;
            if (mode == BnMode::kDynamic) {
                T sum{};
                for (int i = 0; i < x.h; ++i)
                    for (int j = 0; j < x.w; ++j) sum += x.at(c, i, j);
                mean = sum / n;
                T sq{};
                for (int i = 0; i < x.h; ++i) {
                    for (int j = 0; j < x.w; ++j) {
                        const T d = x.at(c, i, j) - mean;
                        sq += d * d;
                    }
                }
                var = sq / n;
            } else {
                mean = p.running_mean[c];
                var = p.running_var[c];
            }
            const T inv_std = T(1) / std::sqrt(var + p.eps);
            const T scale = p.gamma[c] * inv_std;
            for (int i = 0; i < x.h; ++i) {
                for (int j = 0; j < x.w; ++j) {
                    y.at(c, i, j) = (x.at(c, i, j) - mean) * scale + p.beta[c];
                }
            }
            if (captured) {
                captured->mean[c] = mean;
                captured->var[c] = var;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        if constexpr (std::is_same_v<T, FixedQ20>) {
            y.v[i] = x.v[i].raw > 0 ? x.v[i] : FixedQ20{0};
        } else {
            y.v[i] = x.v[i] > 0 ? x.v[i] : T{0};
        }
    }
    return y;
}

/// Global average pool -> affine -> softmax (max-subtracted). Always float.
std::vector<double> head_forward(const TensorF& x, const HeadParams& p);

// --- vector-Jacobian products (float path) ---------------------------------

struct ConvVjp {
    TensorF dx;
    std::vector<double> dw;
};
ConvVjp conv2d_vjp(const TensorF& x, const ConvParams<double>& p, const TensorF& upstream);

struct BnVjp {
    TensorF dx;
    std::vector<double> dgamma, dbeta;
};
BnVjp batchnorm_vjp(const TensorF& x, const BatchNormParams<double>& p, BnMode mode,
                    const TensorF& upstream);

TensorF relu_vjp(const TensorF& x, const TensorF& upstream);

struct HeadVjp {
    TensorF dx;
    std::vector<double> dw, db;
};
HeadVjp head_vjp(const TensorF& x, const HeadParams& p, const std::vector<double>& upstream);

}  // namespace rodenet
