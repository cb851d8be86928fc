#include "rodenet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace rodenet {

double learning_rate(const TrainConfig& cfg, int epoch) {
    int hits = 0;
    for (int d : cfg.decay_epochs) {
        if (d <= epoch) ++hits;
    }
    return cfg.lr0 * std::pow(cfg.decay_factor, hits);
}

double cross_entropy(const std::vector<double>& probs, int label) {
    if (label < 0 || label >= static_cast<int>(probs.size())) {
        throw std::invalid_argument("cross_entropy: label out of range");
    }
    return -std::log(std::max(probs[label], 1e-12));
}

// --- ModelGrads --------------------------------------------------------------

ModelGrads ModelGrads::zeros_like(const NetworkModel& m) {
    ModelGrads g;
    g.stem_conv_w.assign(m.stem.conv.w.size(), 0.0);
    g.stem_bn_gamma.assign(m.stem.bn.gamma.size(), 0.0);
    g.stem_bn_beta.assign(m.stem.bn.beta.size(), 0.0);
    for (const auto& grp : m.groups) {
        std::vector<BlockGrads> bg;
        for (const auto& b : grp.blocks) bg.push_back(BlockGrads::zeros_like(b));
        g.groups.push_back(std::move(bg));
    }
    g.head_w.assign(m.head.fc_w.size(), 0.0);
    g.head_b.assign(m.head.fc_b.size(), 0.0);
    return g;
}

void ModelGrads::axpy(double a, const ModelGrads& o) {
    auto add = [a](std::vector<double>& y, const std::vector<double>& x) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
    };
    add(stem_conv_w, o.stem_conv_w);
    add(stem_bn_gamma, o.stem_bn_gamma);
    add(stem_bn_beta, o.stem_bn_beta);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        for (std::size_t bi = 0; bi < groups[gi].size(); ++bi) {
            groups[gi][bi].axpy(a, o.groups[gi][bi]);
        }
    }
    add(head_w, o.head_w);
    add(head_b, o.head_b);
}

void ModelGrads::scale(double a) {
    ModelGrads* self = this;
    for (auto& ref : grad_groups(*self)) {
        for (double& e : *ref.values) e *= a;
    }
}

double ModelGrads::dot(const ModelGrads& o) const {
    double acc = 0.0;
    auto& a = const_cast<ModelGrads&>(*this);
    auto& b = const_cast<ModelGrads&>(o);
    const auto ga = grad_groups(a);
    const auto gb = grad_groups(b);
    for (std::size_t i = 0; i < ga.size(); ++i) {
        const auto& va = *ga[i].values;
        const auto& vb = *gb[i].values;
        for (std::size_t k = 0; k < va.size(); ++k) acc += va[k] * vb[k];
    }
    return acc;
}

double ModelGrads::norm2() const { return std::sqrt(dot(*this)); }

std::vector<GroupRef> param_groups(NetworkModel& m) {
    std::vector<GroupRef> refs;
    refs.push_back({"stem.conv.w", &m.stem.conv.w});
    refs.push_back({"stem.bn.gamma", &m.stem.bn.gamma});
    refs.push_back({"stem.bn.beta", &m.stem.bn.beta});
    for (auto& grp : m.groups) {
        for (std::size_t bi = 0; bi < grp.blocks.size(); ++bi) {
            auto& b = grp.blocks[bi];
            const std::string p = std::string(layer_name(grp.id)) + ".b" + std::to_string(bi);
            refs.push_back({p + ".conv1.w", &b.conv1.w});
            refs.push_back({p + ".bn1.gamma", &b.bn1.gamma});
            refs.push_back({p + ".bn1.beta", &b.bn1.beta});
            refs.push_back({p + ".conv2.w", &b.conv2.w});
            refs.push_back({p + ".bn2.gamma", &b.bn2.gamma});
            refs.push_back({p + ".bn2.beta", &b.bn2.beta});
        }
    }
    refs.push_back({"head.fc.w", &m.head.fc_w});
    refs.push_back({"head.fc.b", &m.head.fc_b});
    return refs;
}

std::vector<GroupRef> grad_groups(ModelGrads& g) {
    std::vector<GroupRef> refs;
    refs.push_back({"stem.conv.w", &g.stem_conv_w});
    refs.push_back({"stem.bn.gamma", &g.stem_bn_gamma});
    refs.push_back({"stem.bn.beta", &g.stem_bn_beta});
    for (std::size_t gi = 0; gi < g.groups.size(); ++gi) {
        for (std::size_t bi = 0; bi < g.groups[gi].size(); ++bi) {
            auto& b = g.groups[gi][bi];
            const std::string p = "g" + std::to_string(gi) + ".b" + std::to_string(bi);
            refs.push_back({p + ".conv1.w", &b.conv1_w});
            refs.push_back({p + ".bn1.gamma", &b.bn1_gamma});
            refs.push_back({p + ".bn1.beta", &b.bn1_beta});
            refs.push_back({p + ".conv2.w", &b.conv2_w});
            refs.push_back({p + ".bn2.gamma", &b.bn2_gamma});
            refs.push_back({p + ".bn2.beta", &b.bn2_beta});
        }
    }
    refs.push_back({"head.fc.w", &g.head_w});
    refs.push_back({"head.fc.b", &g.head_b});
    return refs;
}

// --- single-example gradient -------------------------------------------------

namespace {

struct Tape {
    TensorF x_norm;                            // input to the stem conv
    TensorF stem_conv_out;                     // input to the stem BN
    TensorF stem_bn_out;                       // input to the stem ReLU
    std::vector<std::vector<TensorF>> inputs;  // per group, per block instance
    TensorF head_in;
    std::vector<double> probs;
};

/// Training always runs dynamic (per-map) batch statistics.
BlockRunConfig train_run_config(const NetworkModel& model) {
    BlockRunConfig rc = group_run_config(model.cfg);
    rc.bn_mode = BnMode::kDynamic;
    return rc;
}

Tape taped_forward(const NetworkModel& model, const TensorF& image) {
    const BlockRunConfig rc = train_run_config(model);
    Tape tape;
    tape.x_norm = normalize_image(image, model.norm);
    tape.stem_conv_out = conv2d_forward(tape.x_norm, model.stem.conv);
    tape.stem_bn_out = batchnorm_forward(tape.stem_conv_out, model.stem.bn, BnMode::kDynamic);
    TensorF z = relu(tape.stem_bn_out);
    for (const auto& g : model.groups) {
        std::vector<TensorF> block_inputs;
        if (g.flavor == BlockFlavor::kOde) {
            block_inputs.push_back(z);
            z = ode_block_forward(z, g.blocks[0], group_solver(model.cfg, g.execs), rc);
        } else {
            for (const auto& b : g.blocks) {
                block_inputs.push_back(z);
                z = plain_block_forward(z, b, rc);
            }
        }
        tape.inputs.push_back(std::move(block_inputs));
    }
    tape.head_in = std::move(z);
    tape.probs = head_forward(tape.head_in, model.head);
    return tape;
}

struct ExampleGrad {
    ModelGrads grads;
    double loss = 0.0;
    bool correct = false;
};

ExampleGrad grad_example(const NetworkModel& model, const LabeledExample& ex, GradMode mode) {
    const BlockRunConfig rc = train_run_config(model);
    const Tape tape = taped_forward(model, ex.image);

    ExampleGrad out;
    out.grads = ModelGrads::zeros_like(model);
    out.loss = cross_entropy(tape.probs, ex.label);
    const auto argmax = std::max_element(tape.probs.begin(), tape.probs.end());
    out.correct = static_cast<int>(argmax - tape.probs.begin()) == ex.label;

    std::vector<double> dprobs(tape.probs.size(), 0.0);
    dprobs[ex.label] = -1.0 / std::max(tape.probs[ex.label], 1e-12);

    HeadVjp hv = head_vjp(tape.head_in, model.head, dprobs);
    out.grads.head_w = std::move(hv.dw);
    out.grads.head_b = std::move(hv.db);
    TensorF upstream = std::move(hv.dx);

    for (int gi = static_cast<int>(model.groups.size()) - 1; gi >= 0; --gi) {
        const LayerGroup& g = model.groups[gi];
        if (g.flavor == BlockFlavor::kOde) {
            const SolverConfig solver = group_solver(model.cfg, g.execs);
            if (mode == GradMode::kUnrolled) {
                BlockVjp v = ode_block_vjp_unrolled(tape.inputs[gi][0], g.blocks[0], solver, rc,
                                                    upstream);
                out.grads.groups[gi][0] = std::move(v.grads);
                upstream = std::move(v.dz);
            } else {
                const TensorF& z1 = gi + 1 < static_cast<int>(model.groups.size())
                                        ? tape.inputs[gi + 1].front()
                                        : tape.head_in;
                AdjointResult v = ode_block_vjp_adjoint(z1, g.blocks[0], solver, rc, upstream);
                out.grads.groups[gi][0] = std::move(v.grads);
                upstream = std::move(v.dz0);
            }
        } else {
            for (int bi = static_cast<int>(g.blocks.size()) - 1; bi >= 0; --bi) {
                BlockVjp v = plain_block_vjp(tape.inputs[gi][bi], g.blocks[bi], rc, upstream);
                out.grads.groups[gi][bi] = std::move(v.grads);
                upstream = std::move(v.dz);
            }
        }
    }

    TensorF u = relu_vjp(tape.stem_bn_out, upstream);
    BnVjp bv = batchnorm_vjp(tape.stem_conv_out, model.stem.bn, BnMode::kDynamic, u);
    out.grads.stem_bn_gamma = std::move(bv.dgamma);
    out.grads.stem_bn_beta = std::move(bv.dbeta);
    ConvVjp cv = conv2d_vjp(tape.x_norm, model.stem.conv, bv.dx);
    out.grads.stem_conv_w = std::move(cv.dw);
    return out;
}

int worker_count(std::size_t batch) {
    int threads = 1;
    if (const char* env = std::getenv("RODENET_THREADS")) {
        threads = std::max(1, std::atoi(env));
    }
    return static_cast<int>(std::min<std::size_t>(threads, batch));
}

void add_weight_decay(ModelGrads& grads, const NetworkModel& model, double lambda) {
    if (lambda == 0.0) return;
    auto& m = const_cast<NetworkModel&>(model);
    const auto params = param_groups(m);
    const auto gs = grad_groups(grads);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = *params[i].values;
        auto& g = *gs[i].values;
        for (std::size_t k = 0; k < p.size(); ++k) g[k] += lambda * p[k];
    }
}

BatchGrad grad_batch_impl(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                          GradMode mode, double weight_decay) {
    if (batch.empty()) throw std::invalid_argument("gradient: empty batch");

    const int workers = worker_count(batch.size());
    std::vector<ExampleGrad> results(batch.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            results[i] = grad_example(model, batch[i], mode);
        }
    } else {
        std::vector<std::future<void>> jobs;
        const std::size_t chunk = (batch.size() + workers - 1) / workers;
        for (int t = 0; t < workers; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(batch.size(), lo + chunk);
            if (lo >= hi) break;
            jobs.push_back(std::async(std::launch::async, [&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) {
                    results[i] = grad_example(model, batch[i], mode);
                }
            }));
        }
        for (auto& j : jobs) j.get();
    }

    // Reduce in example order so the result does not depend on thread count.
    BatchGrad out;
    out.grads = ModelGrads::zeros_like(model);
    for (const auto& r : results) {
        out.grads.axpy(1.0, r.grads);
        out.loss += r.loss;
        out.correct += r.correct ? 1 : 0;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.grads.scale(inv);
    out.loss *= inv;
    add_weight_decay(out.grads, model, weight_decay);
    return out;
}

}  // namespace

BatchGrad grad_unrolled(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                        double weight_decay) {
    return grad_batch_impl(model, batch, GradMode::kUnrolled, weight_decay);
}

BatchGrad grad_adjoint(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                       double weight_decay) {
    return grad_batch_impl(model, batch, GradMode::kAdjoint, weight_decay);
}

BatchGrad grad_batch(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                     GradMode mode, double weight_decay) {
    return grad_batch_impl(model, batch, mode, weight_decay);
}

void sgd_step(NetworkModel& model, const ModelGrads& grads, const TrainConfig& cfg, int epoch,
              SgdState* state) {
    const double lr = learning_rate(cfg, epoch);
    auto params = param_groups(model);
    auto& g_mut = const_cast<ModelGrads&>(grads);
    const auto gs = grad_groups(g_mut);
    if (state && state->velocity.empty()) {
        for (const auto& ref : params) state->velocity.emplace_back(ref.values->size(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i].values;
        const auto& g = *gs[i].values;
        for (std::size_t k = 0; k < p.size(); ++k) {
            double step = g[k] + cfg.weight_decay * p[k];
            if (state && cfg.momentum != 0.0) {
                auto& v = state->velocity[i][k];
                v = cfg.momentum * v + step;
                step = v;
            }
            p[k] -= lr * step;
        }
    }
}

namespace {

/// Dynamic-statistics capture pass, mirroring the inference forward. ODE-block
/// statistics are taken from the dynamics evaluated at the block input and t0.
void update_running_stats(NetworkModel& model, const TensorF& image, double momentum) {
    const BlockRunConfig rc = train_run_config(model);
    auto ema = [momentum](BatchNormParams<double>& bn, const BnBatchStats& s) {
        for (std::size_t c = 0; c < bn.running_mean.size(); ++c) {
            bn.running_mean[c] = (1.0 - momentum) * bn.running_mean[c] + momentum * s.mean[c];
            bn.running_var[c] = (1.0 - momentum) * bn.running_var[c] + momentum * s.var[c];
        }
    };
    auto capture_block = [&](BlockParams<double>& b, const TensorF& z, double t) {
        const bool ode = b.flavor == BlockFlavor::kOde;
        const double tv = rc.clamp_time ? rc.clamped_t : t;
        TensorF a = ode ? conv2d_forward(concat_time_channel(z, tv), b.conv1)
                        : conv2d_forward(z, b.conv1);
        BnBatchStats s1;
        TensorF r = relu(batchnorm_forward(a, b.bn1, BnMode::kDynamic, &s1));
        TensorF a2 = ode ? conv2d_forward(concat_time_channel(r, tv), b.conv2)
                         : conv2d_forward(r, b.conv2);
        BnBatchStats s2;
        batchnorm_forward(a2, b.bn2, BnMode::kDynamic, &s2);
        ema(b.bn1, s1);
        ema(b.bn2, s2);
    };

    TensorF z = normalize_image(image, model.norm);
    z = conv2d_forward(z, model.stem.conv);
    BnBatchStats stem_stats;
    z = relu(batchnorm_forward(z, model.stem.bn, BnMode::kDynamic, &stem_stats));
    ema(model.stem.bn, stem_stats);
    for (auto& g : model.groups) {
        if (g.flavor == BlockFlavor::kOde) {
            const SolverConfig solver = group_solver(model.cfg, g.execs);
            capture_block(g.blocks[0], z, solver.t0);
            z = ode_block_forward(z, g.blocks[0], solver, rc);
        } else {
            for (auto& b : g.blocks) {
                capture_block(b, z, 0.0);
                z = plain_block_forward(z, b, rc);
            }
        }
    }
}

}  // namespace

EvalResult evaluate(const NetworkModel& model, const Dataset& ds) {
    EvalResult r;
    for (const auto& ex : ds.examples) {
        const std::vector<double> probs = forward(model, ex.image);
        r.loss += cross_entropy(probs, ex.label);
        const auto argmax = std::max_element(probs.begin(), probs.end());
        if (static_cast<int>(argmax - probs.begin()) == ex.label) r.acc += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(ds.examples.size());
    r.loss *= inv;
    r.acc *= inv;
    return r;
}

TrainResult train(NetworkModel& model, const Dataset& train_ds, const Dataset* eval_ds,
                  const TrainConfig& cfg, std::ostream* metrics_csv) {
    if (train_ds.examples.empty()) throw std::invalid_argument("train: empty dataset");

    model.norm = compute_normalization(train_ds);
    std::mt19937 rng(cfg.seed);
    std::vector<std::size_t> order(train_ds.examples.size());
    std::iota(order.begin(), order.end(), 0);

    SgdState sgd_state;
    TrainResult result;
    if (metrics_csv) {
        *metrics_csv << "epoch,lr,train_loss,train_acc,eval_loss,eval_acc,grad_mode\n";
    }
    const char* mode_name = cfg.grad_mode == GradMode::kUnrolled ? "unrolled" : "adjoint";

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int correct = 0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<LabeledExample> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_ds.examples[order[i]]);
            }
            BatchGrad bg = grad_batch_impl(model, batch, cfg.grad_mode, 0.0);
            sgd_step(model, bg.grads, cfg, epoch, &sgd_state);
            update_running_stats(model, batch.front().image, cfg.bn_momentum);
            loss_sum += bg.loss * static_cast<double>(batch.size());
            correct += bg.correct;
            seen += batch.size();
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.lr = learning_rate(cfg, epoch);
        em.train_loss = loss_sum / static_cast<double>(seen);
        em.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        const EvalResult ev = evaluate(model, eval_ds ? *eval_ds : train_ds);
        em.eval_loss = ev.loss;
        em.eval_acc = ev.acc;
        result.metrics.push_back(em);
        if (metrics_csv) {
            *metrics_csv << em.epoch << ',' << em.lr << ',' << em.train_loss << ','
                         << em.train_acc << ',' << em.eval_loss << ',' << em.eval_acc << ','
                         << mode_name << '\n';
        }
    }
    return result;
}

}  // namespace rodenet
