#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rodenet/network.hpp"

namespace rodenet {

/// Cycles per block execution on the programmable logic with n multiply-add
/// units: cycles(n) = A/n + B. A is the parallelizable convolution+ReLU work,
/// B the fixed batch-normalization part.
struct LayerCycleModel {
    double a = 0.0;
    double b = 0.0;
};

struct CycleFit {
    LayerCycleModel model;
    double max_rel_residual = 0.0;  // against the fitted points
};

/// Least-squares fit of cycles = A/n + B over (n, cycles) points.
/// Needs at least two distinct n values.
CycleFit fit_cycle_model(const std::vector<std::pair<double, double>>& points);

double predict_cycles(const LayerCycleModel& m, double parallelism);
std::uint64_t layer_cycles(const LayerCycleModel& m, int parallelism);  // rounded up

struct SwTime {
    double plain = -1.0;  // seconds per execution of the plain-flavor block
    double ode = -1.0;    // seconds per execution of the ODE-flavor block
};

struct CostConfig {
    double clock_hz = 1e8;
    double transfer_cycles_per_word = 1.0;
    std::map<LayerId, LayerCycleModel> cycle_models;
    std::map<int, std::map<LayerId, SwTime>> sw_times;  // keyed by N
};

CostConfig parse_cost_config(const std::string& json_text);
CostConfig load_cost_config(const std::string& path);

struct OffloadSpec {
    Arch arch = Arch::kRodenet3;
    int n = 20;
    std::vector<LayerId> offload;  // subset of layer1 / layer2_2 / layer3_2
    int parallelism = 16;
};

struct LayerReport {
    LayerId layer = LayerId::kLayer1;
    double target_wo_pl = 0.0;
    double target_w_pl = 0.0;
    double ratio_percent = 0.0;  // target_wo_pl / total_wo_pl * 100
};

struct SimReport {
    double total_wo_pl = 0.0;
    double target_wo_pl = 0.0;
    double target_w_pl = 0.0;
    double total_w_pl = 0.0;     // total_wo_pl - target_wo_pl + target_w_pl
    double overall_speedup = 1.0;
    std::vector<LayerReport> per_layer;
    std::vector<std::string> warnings;
};

SimReport simulate_offload(const OffloadSpec& spec, const Schedule& schedule,
                           const CostConfig& cfg);
SimReport simulate_offload(const OffloadSpec& spec, const CostConfig& cfg);

/// Feature-map geometry of a residual layer in the standard configuration.
struct LayerShape {
    int ch = 0, h = 0, w = 0;
};
LayerShape layer_output_shape(LayerId id);

/// Parameter bytes plus input+output feature maps at 4 bytes per element.
/// A lower bound only: ignores line buffers, control, and duplication.
std::uint64_t bram_lower_bound_bytes(std::uint64_t param_bytes, const LayerShape& in,
                                     const LayerShape& out);
std::uint64_t bram_lower_bound(LayerId id, Arch arch, int n);

struct OffloadPlan {
    CostConfig cost;
    int parallelism = 16;
    std::vector<OffloadSpec> rows;
};

/// Plan file: {"cost_model": <path or inline object>, "parallelism": n,
/// "rows": [{"arch": ..., "n": ..., "offload": [...]}]}.
OffloadPlan load_offload_plan(const std::string& path);

}  // namespace rodenet
