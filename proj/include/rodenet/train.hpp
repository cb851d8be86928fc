#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rodenet/network.hpp"

namespace rodenet {

enum class GradMode { kUnrolled, kAdjoint };

struct TrainConfig {
    double lr0 = 0.01;
    std::vector<int> decay_epochs = {100, 150};
    double decay_factor = 0.1;
    double weight_decay = 1e-4;
    int epochs = 200;
    int batch_size = 128;
    double momentum = 0.0;
    double bn_momentum = 0.1;
    GradMode grad_mode = GradMode::kUnrolled;
    unsigned seed = 0;
};

/// lr0 * decay_factor^(number of decay epochs <= epoch).
double learning_rate(const TrainConfig& cfg, int epoch);

/// Cross-entropy -log p[label]; probabilities below 1e-12 are clamped.
double cross_entropy(const std::vector<double>& probs, int label);

/// Gradients for every learnable parameter group, aligned with NetworkModel.
struct ModelGrads {
    std::vector<double> stem_conv_w, stem_bn_gamma, stem_bn_beta;
    std::vector<std::vector<BlockGrads>> groups;
    std::vector<double> head_w, head_b;

    static ModelGrads zeros_like(const NetworkModel& m);
    void axpy(double a, const ModelGrads& o);
    void scale(double a);
    double dot(const ModelGrads& o) const;
    double norm2() const;
};

/// Mutable views over the aligned parameter / gradient vectors, in a fixed
/// order shared by both. Used by the optimizer and by finite-difference tests.
struct GroupRef {
    std::string name;
    std::vector<double>* values;
};
std::vector<GroupRef> param_groups(NetworkModel& m);
std::vector<GroupRef> grad_groups(ModelGrads& g);

struct BatchGrad {
    ModelGrads grads;   // mean over the batch (+ weight decay if requested)
    double loss = 0.0;  // mean data loss
    int correct = 0;
};

/// Exact reverse-mode gradient of the mean batch loss through every solver
/// step. Reference gradient path.
BatchGrad grad_unrolled(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                        double weight_decay = 0.0);

/// Adjoint-method gradient: per ODE block one joint augmented backward solve
/// (state reconstruction, adjoint, parameter gradient); other layers use
/// ordinary reverse mode.
BatchGrad grad_adjoint(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                       double weight_decay = 0.0);

BatchGrad grad_batch(const NetworkModel& model, const std::vector<LabeledExample>& batch,
                     GradMode mode, double weight_decay = 0.0);

struct SgdState {
    std::vector<std::vector<double>> velocity;  // parallel to param_groups
};

/// theta <- theta - lr(epoch) * (g + weight_decay * theta), with optional
/// heavy-ball momentum.
void sgd_step(NetworkModel& model, const ModelGrads& grads, const TrainConfig& cfg, int epoch,
              SgdState* state = nullptr);

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double eval_loss = 0.0;
    double eval_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
};

struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
};
EvalResult evaluate(const NetworkModel& model, const Dataset& ds);

/// Deterministic given the seed: fixed shuffling and summation order.
/// Normalization constants are computed from the training split and stored in
/// the model. Writes one CSV row per epoch when metrics_csv is non-null.
TrainResult train(NetworkModel& model, const Dataset& train_ds, const Dataset* eval_ds,
                  const TrainConfig& cfg, std::ostream* metrics_csv = nullptr);

}  // namespace rodenet
