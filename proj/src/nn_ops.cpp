#include "rodenet/nn_ops.hpp"

namespace rodenet {

std::vector<double> head_forward(const TensorF& x, const HeadParams& p) {
    if (x.c != p.in_ch) throw std::invalid_argument("head_forward: channel mismatch");
    const double inv_hw = 1.0 / (static_cast<double>(x.h) * x.w);
    std::vector<double> pooled(x.c, 0.0);
    for (int c = 0; c < x.c; ++c) {
        double sum = 0.0;
        for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) sum += x.at(c, i, j);
        pooled[c] = sum * inv_hw;
    }
    std::vector<double> logits(p.num_classes, 0.0);
    for (int k = 0; k < p.num_classes; ++k) {
        double acc = p.fc_b[k];
        for (int c = 0; c < p.in_ch; ++c) {
            acc += p.fc_w[static_cast<std::size_t>(k) * p.in_ch + c] * pooled[c];
        }
        logits[k] = acc;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    std::vector<double> probs(p.num_classes, 0.0);
    for (int k = 0; k < p.num_classes; ++k) {
        probs[k] = std::exp(logits[k] - mx);
        z += probs[k];
    }
    for (double& e : probs) e /= z;
    return probs;
}

ConvVjp conv2d_vjp(const TensorF& x, const ConvParams<double>& p, const TensorF& upstream) {
    const int oh = x.h / p.stride;
    const int ow = x.w / p.stride;
    if (upstream.c != p.out_ch || upstream.h != oh || upstream.w != ow) {
        throw std::invalid_argument("conv2d_vjp: upstream shape mismatch");
    }
    ConvVjp out;
    out.dx = TensorF(x.c, x.h, x.w);
    out.dw.assign(p.w.size(), 0.0);
    for (int o = 0; o < p.out_ch; ++o) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                const double u0 = upstream.at(o, i, j);
                if (u0 == 0.0) continue;
                for (int c = 0; c < p.in_ch; ++c) {
                    for (int u = 0; u < 3; ++u) {
                        const int yy = i * p.stride + u - 1;
                        if (yy < 0 || yy >= x.h) continue;
                        for (int v = 0; v < 3; ++v) {
                            const int xx = j * p.stride + v - 1;
                            if (xx < 0 || xx >= x.w) continue;
                            out.dw[p.windex(o, c, u, v)] += u0 * x.at(c, yy, xx);
                            out.dx.at(c, yy, xx) += u0 * p.wt(o, c, u, v);
                        }
                    }
                }
            }
        }
    }
    return out;
}

BnVjp batchnorm_vjp(const TensorF& x, const BatchNormParams<double>& p, BnMode mode,
                    const TensorF& upstream) {
    if (!x.same_shape(upstream)) throw std::invalid_argument("batchnorm_vjp: shape mismatch");
    BnVjp out;
    out.dx = TensorF(x.c, x.h, x.w);
    out.dgamma.assign(x.c, 0.0);
    out.dbeta.assign(x.c, 0.0);
    const int n = x.h * x.w;
    for (int c = 0; c < x.c; ++c) {
        double mean, var;
        if (mode == BnMode::kDynamic) {
            double sum = 0.0;
            for (int i = 0; i < x.h; ++i)
                for (int j = 0; j < x.w; ++j) sum += x.at(c, i, j);
            mean = sum / n;
            double sq = 0.0;
            for (int i = 0; i < x.h; ++i) {
                for (int j = 0; j < x.w; ++j) {
                    const double d = x.at(c, i, j) - mean;
                    sq += d * d;
                }
            }
            var = sq / n;
        } else {
            mean = p.running_mean[c];
            var = p.running_var[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + p.eps);

        double sum_u = 0.0, sum_ux = 0.0;
        for (int i = 0; i < x.h; ++i) {
            for (int j = 0; j < x.w; ++j) {
                const double u = upstream.at(c, i, j);
                const double xh = (x.at(c, i, j) - mean) * inv_std;
                sum_u += u;
                sum_ux += u * xh;
            }
        }
        out.dbeta[c] = sum_u;
        out.dgamma[c] = sum_ux;

        const double g = p.gamma[c] * inv_std;
        if (mode == BnMode::kDynamic) {
            // Differentiates through the per-map batch statistics.
            const double mu_u = sum_u / n;
            const double mu_ux = sum_ux / n;
            for (int i = 0; i < x.h; ++i) {
                for (int j = 0; j < x.w; ++j) {
                    const double u = upstream.at(c, i, j);
                    const double xh = (x.at(c, i, j) - mean) * inv_std;
                    out.dx.at(c, i, j) = g * (u - mu_u - xh * mu_ux);
                }
            }
        } else {
            for (int i = 0; i < x.h; ++i) {
                for (int j = 0; j < x.w; ++j) {
                    out.dx.at(c, i, j) = g * upstream.at(c, i, j);
                }
            }
        }
    }
    return out;
}

TensorF relu_vjp(const TensorF& x, const TensorF& upstream) {
    if (!x.same_shape(upstream)) throw std::invalid_argument("relu_vjp: shape mismatch");
    TensorF dx(x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        dx.v[i] = x.v[i] > 0 ? upstream.v[i] : 0.0;
    }
    return dx;
}

HeadVjp head_vjp(const TensorF& x, const HeadParams& p, const std::vector<double>& upstream) {
    if (static_cast<int>(upstream.size()) != p.num_classes) {
        throw std::invalid_argument("head_vjp: upstream size mismatch");
    }
    const std::vector<double> probs = head_forward(x, p);
    const double inv_hw = 1.0 / (static_cast<double>(x.h) * x.w);
    std::vector<double> pooled(x.c, 0.0);
    for (int c = 0; c < x.c; ++c) {
        double sum = 0.0;
        for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) sum += x.at(c, i, j);
        pooled[c] = sum * inv_hw;
    }

    // Through softmax: dlogit_k = p_k * (u_k - sum_j u_j p_j).
    double dot = 0.0;
    for (int k = 0; k < p.num_classes; ++k) dot += upstream[k] * probs[k];
    std::vector<double> dlogits(p.num_classes, 0.0);
    for (int k = 0; k < p.num_classes; ++k) dlogits[k] = probs[k] * (upstream[k] - dot);

    HeadVjp out;
    out.dw.assign(p.fc_w.size(), 0.0);
    out.db = dlogits;
    std::vector<double> dpooled(x.c, 0.0);
    for (int k = 0; k < p.num_classes; ++k) {
        for (int c = 0; c < p.in_ch; ++c) {
            out.dw[static_cast<std::size_t>(k) * p.in_ch + c] = dlogits[k] * pooled[c];
            dpooled[c] += p.fc_w[static_cast<std::size_t>(k) * p.in_ch + c] * dlogits[k];
        }
    }
    out.dx = TensorF(x.c, x.h, x.w);
    for (int c = 0; c < x.c; ++c) {
        const double g = dpooled[c] * inv_hw;
        for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) out.dx.at(c, i, j) = g;
    }
    return out;
}

}  // namespace rodenet
