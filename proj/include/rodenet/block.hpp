#pragma once

#include "rodenet/nn_ops.hpp"
#include "rodenet/ode_solve.hpp"

namespace rodenet {

enum class BlockFlavor { kPlain, kOde };

/// One residual/ODE block: conv -> BN -> ReLU -> conv -> BN.
/// ODE flavor keeps the shape and feeds t as one extra constant input channel
/// to both convolutions; plain flavor may downsample (stride 2, channels x2).
template <typename T>
struct BlockParams {
    BlockFlavor flavor = BlockFlavor::kPlain;
    int in_ch = 0;
    int out_ch = 0;
    int stride = 1;
    ConvParams<T> conv1;
    BatchNormParams<T> bn1;
    ConvParams<T> conv2;
    BatchNormParams<T> bn2;

    BlockParams() = default;
    BlockParams(BlockFlavor fl, int in, int out, int s)
        : flavor(fl), in_ch(in), out_ch(out), stride(s) {
        if (fl == BlockFlavor::kOde) {
            if (in != out || s != 1) {
                throw std::invalid_argument("BlockParams: ode flavor requires stride 1 and in_ch == out_ch");
            }
            conv1 = ConvParams<T>(out, in + 1, 1);
            conv2 = ConvParams<T>(out, out + 1, 1);
        } else {
            conv1 = ConvParams<T>(out, in, s);
            conv2 = ConvParams<T>(out, out, 1);
        }
        bn1 = BatchNormParams<T>(out);
        bn2 = BatchNormParams<T>(out);
    }

    std::size_t param_count() const {
        return conv1.w.size() + conv2.w.size() + 2 * bn1.gamma.size() + 2 * bn2.gamma.size();
    }
};

struct BlockRunConfig {
    BnMode bn_mode = BnMode::kDynamic;
    bool clamp_time = false;    // feed clamped_t instead of the solver time
    double clamped_t = 0.0;
};

/// The dynamics f(z, t): conv(z||t) -> BN -> ReLU -> conv(.||t) -> BN.
template <typename T>
Tensor<T> block_dynamics(const Tensor<T>& z, double t, const BlockParams<T>& p,
                         const BlockRunConfig& rc = {}) {
    if (p.flavor != BlockFlavor::kOde) throw std::invalid_argument("block_dynamics: requires ode flavor");
    const double tv = rc.clamp_time ? rc.clamped_t : t;
    Tensor<T> a = conv2d_forward(concat_time_channel(z, tv), p.conv1);
    a = relu(batchnorm_forward(a, p.bn1, rc.bn_mode));
    a = conv2d_forward(concat_time_channel(a, tv), p.conv2);
    return batchnorm_forward(a, p.bn2, rc.bn_mode);
}

template <typename T>
Tensor<T> ode_block_forward(const Tensor<T>& z0, const BlockParams<T>& p,
                            const SolverConfig& cfg, const BlockRunConfig& rc = {}) {
    return ode_solve(z0, cfg, [&](const Tensor<T>& z, double t) {
        return block_dynamics(z, t, p, rc);
    });
}

/// Stride-2 shortcut: spatial subsampling at even indices plus zero padding
/// of the new channels. Carries no parameters.
template <typename T>
Tensor<T> stride2_shortcut(const Tensor<T>& z, int out_ch) {
    Tensor<T> s(out_ch, z.h / 2, z.w / 2);
    for (int c = 0; c < z.c && c < out_ch; ++c) {
        for (int i = 0; i < s.h; ++i) {
            for (int j = 0; j < s.w; ++j) {
                s.at(c, i, j) = z.at(c, 2 * i, 2 * j);
            }
        }
    }
    return s;
}

/// f(z) + shortcut(z); identity shortcut when shapes match.
template <typename T>
Tensor<T> plain_block_forward(const Tensor<T>& z, const BlockParams<T>& p,
                              const BlockRunConfig& rc = {}) {
    if (p.flavor != BlockFlavor::kPlain) throw std::invalid_argument("plain_block_forward: requires plain flavor");
    Tensor<T> a = conv2d_forward(z, p.conv1);
    a = relu(batchnorm_forward(a, p.bn1, rc.bn_mode));
    a = conv2d_forward(a, p.conv2);
    a = batchnorm_forward(a, p.bn2, rc.bn_mode);
    if (p.stride == 1 && p.in_ch == p.out_ch) {
        axpy_in_place(a, 1.0, z);
        return a;
    }
    Tensor<T> s = stride2_shortcut(z, p.out_ch);
    axpy_in_place(a, 1.0, s);
    return a;
}

// --- gradients (float path) ------------------------------------------------

/// Gradients of one block's parameters; also the per-block component of the
/// augmented adjoint state, hence the vector-space helpers.
struct BlockGrads {
    std::vector<double> conv1_w, bn1_gamma, bn1_beta;
    std::vector<double> conv2_w, bn2_gamma, bn2_beta;

    static BlockGrads zeros_like(const BlockParams<double>& p);
    void axpy(double a, const BlockGrads& o);
    void scale(double a);
    bool finite() const;
};

struct BlockVjp {
    TensorF dz;
    BlockGrads grads;
};

BlockVjp block_dynamics_vjp(const TensorF& z, double t, const BlockParams<double>& p,
                            const BlockRunConfig& rc, const TensorF& upstream);

BlockVjp plain_block_vjp(const TensorF& z, const BlockParams<double>& p,
                         const BlockRunConfig& rc, const TensorF& upstream);

/// Reverse-mode gradient through every solver step (discretize-then-optimize).
BlockVjp ode_block_vjp_unrolled(const TensorF& z0, const BlockParams<double>& p,
                                const SolverConfig& cfg, const BlockRunConfig& rc,
                                const TensorF& upstream);

struct AdjointResult {
    TensorF z0;      // state reconstructed by the backward solve
    TensorF dz0;     // adjoint at t0
    BlockGrads grads;
};

/// Joint augmented backward solve of (z, a, dL/dtheta) from t1 to t0.
/// z1 is the block output; upstream is dL/dz(t1).
AdjointResult ode_block_vjp_adjoint(const TensorF& z1, const BlockParams<double>& p,
                                    const SolverConfig& cfg, const BlockRunConfig& rc,
                                    const TensorF& upstream);

}  // namespace rodenet
