#include "rodenet/block.hpp"

#include <cmath>

namespace rodenet {

BlockGrads BlockGrads::zeros_like(const BlockParams<double>& p) {
    BlockGrads g;
    g.conv1_w.assign(p.conv1.w.size(), 0.0);
    g.bn1_gamma.assign(p.bn1.gamma.size(), 0.0);
    g.bn1_beta.assign(p.bn1.beta.size(), 0.0);
    g.conv2_w.assign(p.conv2.w.size(), 0.0);
    g.bn2_gamma.assign(p.bn2.gamma.size(), 0.0);
    g.bn2_beta.assign(p.bn2.beta.size(), 0.0);
    return g;
}

namespace {

void axpy_vec(std::vector<double>& y, double a, const std::vector<double>& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

bool finite_vec(const std::vector<double>& v) {
    for (double e : v) {
        if (!std::isfinite(e)) return false;
    }
    return true;
}

}  // namespace

void BlockGrads::axpy(double a, const BlockGrads& o) {
    axpy_vec(conv1_w, a, o.conv1_w);
    axpy_vec(bn1_gamma, a, o.bn1_gamma);
    axpy_vec(bn1_beta, a, o.bn1_beta);
    axpy_vec(conv2_w, a, o.conv2_w);
    axpy_vec(bn2_gamma, a, o.bn2_gamma);
    axpy_vec(bn2_beta, a, o.bn2_beta);
}

void BlockGrads::scale(double a) {
    for (auto* v : {&conv1_w, &bn1_gamma, &bn1_beta, &conv2_w, &bn2_gamma, &bn2_beta}) {
        for (double& e : *v) e *= a;
    }
}

bool BlockGrads::finite() const {
    return finite_vec(conv1_w) && finite_vec(bn1_gamma) && finite_vec(bn1_beta) &&
           finite_vec(conv2_w) && finite_vec(bn2_gamma) && finite_vec(bn2_beta);
}

namespace {

TensorF drop_time_channel(const TensorF& dx) {
    TensorF out(dx.c - 1, dx.h, dx.w);
    std::copy(dx.v.begin(), dx.v.begin() + out.v.size(), out.v.begin());
    return out;
}

}  // namespace

BlockVjp block_dynamics_vjp(const TensorF& z, double t, const BlockParams<double>& p,
                            const BlockRunConfig& rc, const TensorF& upstream) {
    const double tv = rc.clamp_time ? rc.clamped_t : t;
    const TensorF x0 = concat_time_channel(z, tv);
    const TensorF a1 = conv2d_forward(x0, p.conv1);
    const TensorF b1 = batchnorm_forward(a1, p.bn1, rc.bn_mode);
    const TensorF r1 = relu(b1);
    const TensorF x1 = concat_time_channel(r1, tv);
    const TensorF a2 = conv2d_forward(x1, p.conv2);

    BlockVjp out;
    BnVjp u_bn2 = batchnorm_vjp(a2, p.bn2, rc.bn_mode, upstream);
    ConvVjp u_conv2 = conv2d_vjp(x1, p.conv2, u_bn2.dx);
    TensorF u_r1 = drop_time_channel(u_conv2.dx);
    TensorF u_b1 = relu_vjp(b1, u_r1);
    BnVjp u_bn1 = batchnorm_vjp(a1, p.bn1, rc.bn_mode, u_b1);
    ConvVjp u_conv1 = conv2d_vjp(x0, p.conv1, u_bn1.dx);

    out.dz = drop_time_channel(u_conv1.dx);
    out.grads.conv1_w = std::move(u_conv1.dw);
    out.grads.bn1_gamma = std::move(u_bn1.dgamma);
    out.grads.bn1_beta = std::move(u_bn1.dbeta);
    out.grads.conv2_w = std::move(u_conv2.dw);
    out.grads.bn2_gamma = std::move(u_bn2.dgamma);
    out.grads.bn2_beta = std::move(u_bn2.dbeta);
    return out;
}

BlockVjp plain_block_vjp(const TensorF& z, const BlockParams<double>& p,
                         const BlockRunConfig& rc, const TensorF& upstream) {
    const TensorF a1 = conv2d_forward(z, p.conv1);
    const TensorF b1 = batchnorm_forward(a1, p.bn1, rc.bn_mode);
    const TensorF r1 = relu(b1);
    const TensorF a2 = conv2d_forward(r1, p.conv2);

    BlockVjp out;
    BnVjp u_bn2 = batchnorm_vjp(a2, p.bn2, rc.bn_mode, upstream);
    ConvVjp u_conv2 = conv2d_vjp(r1, p.conv2, u_bn2.dx);
    TensorF u_b1 = relu_vjp(b1, u_conv2.dx);
    BnVjp u_bn1 = batchnorm_vjp(a1, p.bn1, rc.bn_mode, u_b1);
    ConvVjp u_conv1 = conv2d_vjp(z, p.conv1, u_bn1.dx);
    out.dz = std::move(u_conv1.dx);

    // Shortcut path.
    if (p.stride == 1 && p.in_ch == p.out_ch) {
        axpy_in_place(out.dz, 1.0, upstream);
    } else {
        for (int c = 0; c < p.in_ch && c < p.out_ch; ++c) {
            for (int i = 0; i < upstream.h; ++i) {
                for (int j = 0; j < upstream.w; ++j) {
                    out.dz.at(c, 2 * i, 2 * j) += upstream.at(c, i, j);
                }
            }
        }
    }

    out.grads.conv1_w = std::move(u_conv1.dw);
    out.grads.bn1_gamma = std::move(u_bn1.dgamma);
    out.grads.bn1_beta = std::move(u_bn1.dbeta);
    out.grads.conv2_w = std::move(u_conv2.dw);
    out.grads.bn2_gamma = std::move(u_bn2.dgamma);
    out.grads.bn2_beta = std::move(u_bn2.dbeta);
    return out;
}

BlockVjp ode_block_vjp_unrolled(const TensorF& z0, const BlockParams<double>& p,
                                const SolverConfig& cfg, const BlockRunConfig& rc,
                                const TensorF& upstream) {
    const double h = (cfg.t1 - cfg.t0) / cfg.steps;
    auto f = [&](const TensorF& z, double t) { return block_dynamics(z, t, p, rc); };
    auto f_vjp = [&](const TensorF& z, double t, const TensorF& u) {
        return block_dynamics_vjp(z, t, p, rc, u);
    };

    // Recompute the trajectory of step-start states.
    std::vector<TensorF> traj;
    traj.reserve(cfg.steps);
    TensorF z = z0;
    for (int i = 0; i < cfg.steps; ++i) {
        traj.push_back(z);
        const double t = cfg.t0 + i * h;
        switch (cfg.method) {
            case SolverMethod::kEuler:
                axpy_in_place(z, h, f(z, t));
                break;
            case SolverMethod::kRk2: {
                TensorF y = z;
                axpy_in_place(y, h / 2, f(z, t));
                axpy_in_place(z, h, f(y, t + h / 2));
                break;
            }
            case SolverMethod::kRk4: {
                TensorF k1 = f(z, t);
                TensorF y2 = z;
                axpy_in_place(y2, h / 2, k1);
                TensorF k2 = f(y2, t + h / 2);
                TensorF y3 = z;
                axpy_in_place(y3, h / 2, k2);
                TensorF k3 = f(y3, t + h / 2);
                TensorF y4 = z;
                axpy_in_place(y4, h, k3);
                TensorF k4 = f(y4, t + h);
                axpy_in_place(z, h / 6, k1);
                axpy_in_place(z, h / 3, k2);
                axpy_in_place(z, h / 3, k3);
                axpy_in_place(z, h / 6, k4);
                break;
            }
        }
    }

    BlockVjp out;
    out.dz = upstream;
    out.grads = BlockGrads::zeros_like(p);
    for (int i = cfg.steps - 1; i >= 0; --i) {
        const TensorF& zi = traj[i];
        const double t = cfg.t0 + i * h;
        switch (cfg.method) {
            case SolverMethod::kEuler: {
                BlockVjp v = f_vjp(zi, t, out.dz);
                out.grads.axpy(h, v.grads);
                axpy_in_place(out.dz, h, v.dz);
                break;
            }
            case SolverMethod::kRk2: {
                TensorF k1 = f(zi, t);
                TensorF y = zi;
                axpy_in_place(y, h / 2, k1);
                // z' = z + h*k2, k2 = f(y, t+h/2), y = z + (h/2)*k1, k1 = f(z, t)
                BlockVjp v2 = f_vjp(y, t + h / 2, out.dz);
                out.grads.axpy(h, v2.grads);
                // dz += h * v2.dz ; dk1 = (h^2/2) * v2.dz
                BlockVjp v1 = f_vjp(zi, t, v2.dz);
                out.grads.axpy(h * h / 2, v1.grads);
                axpy_in_place(out.dz, h, v2.dz);
                axpy_in_place(out.dz, h * h / 2, v1.dz);
                break;
            }
            case SolverMethod::kRk4: {
                TensorF k1 = f(zi, t);
                TensorF y2 = zi;
                axpy_in_place(y2, h / 2, k1);
                TensorF k2 = f(y2, t + h / 2);
                TensorF y3 = zi;
                axpy_in_place(y3, h / 2, k2);
                TensorF k3 = f(y3, t + h / 2);
                TensorF y4 = zi;
                axpy_in_place(y4, h, k3);

                const TensorF& u = out.dz;
                // Stage weights: k1, k4 carry h/6; k2, k3 carry h/3. v4 is
                // evaluated with unscaled upstream and rescaled (VJPs are
                // linear in the upstream), the rest with true upstreams.
                BlockVjp v4 = f_vjp(y4, t + h, u);
                out.grads.axpy(h / 6, v4.grads);

                TensorF dk3_total(u.c, u.h, u.w);
                axpy_in_place(dk3_total, h / 3, u);
                axpy_in_place(dk3_total, h * h / 6, v4.dz);
                BlockVjp v3 = f_vjp(y3, t + h / 2, dk3_total);
                out.grads.axpy(1.0, v3.grads);

                TensorF dk2_total(u.c, u.h, u.w);
                axpy_in_place(dk2_total, h / 3, u);
                axpy_in_place(dk2_total, h / 2, v3.dz);
                BlockVjp v2 = f_vjp(y2, t + h / 2, dk2_total);
                out.grads.axpy(1.0, v2.grads);

                TensorF dk1_total(u.c, u.h, u.w);
                axpy_in_place(dk1_total, h / 6, u);
                axpy_in_place(dk1_total, h / 2, v2.dz);
                BlockVjp v1 = f_vjp(zi, t, dk1_total);
                out.grads.axpy(1.0, v1.grads);

                axpy_in_place(out.dz, h / 6, v4.dz);
                axpy_in_place(out.dz, 1.0, v3.dz);
                axpy_in_place(out.dz, 1.0, v2.dz);
                axpy_in_place(out.dz, 1.0, v1.dz);
                break;
            }
        }
        if (!all_finite(out.dz) || !out.grads.finite()) {
            throw NumericError("ode_block_vjp_unrolled: non-finite gradient at step " +
                               std::to_string(i));
        }
    }
    return out;
}

namespace {

/// Augmented state for the joint backward solve: state, adjoint, dL/dtheta.
struct AugState {
    TensorF z;
    TensorF a;
    BlockGrads g;
};

void axpy_in_place(AugState& y, double s, const AugState& x) {
    axpy_in_place(y.z, s, x.z);
    axpy_in_place(y.a, s, x.a);
    y.g.axpy(s, x.g);
}

bool all_finite(const AugState& s) {
    return all_finite(s.z) && all_finite(s.a) && s.g.finite();
}

}  // namespace

AdjointResult ode_block_vjp_adjoint(const TensorF& z1, const BlockParams<double>& p,
                                    const SolverConfig& cfg, const BlockRunConfig& rc,
                                    const TensorF& upstream) {
    AugState init{z1, upstream, BlockGrads::zeros_like(p)};
    SolverConfig back = cfg;
    back.t0 = cfg.t1;
    back.t1 = cfg.t0;

    auto dynamics = [&](const AugState& s, double t) {
        AugState d;
        d.z = block_dynamics(s.z, t, p, rc);
        BlockVjp v = block_dynamics_vjp(s.z, t, p, rc, s.a);
        d.a = TensorF(s.a.c, s.a.h, s.a.w);
        axpy_in_place(d.a, -1.0, v.dz);
        d.g = BlockGrads::zeros_like(p);
        d.g.axpy(-1.0, v.grads);
        return d;
    };

    AugState final_state;
    try {
        final_state = ode_solve(std::move(init), back, dynamics);
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) +
                           " (adjoint backward reconstruction diverged; consider grad_mode=unrolled)");
    }
    AdjointResult out;
    out.z0 = std::move(final_state.z);
    out.dz0 = std::move(final_state.a);
    out.grads = std::move(final_state.g);
    return out;
}

}  // namespace rodenet
