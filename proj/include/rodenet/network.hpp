#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rodenet/block.hpp"
#include "rodenet/dataset.hpp"

namespace rodenet {

enum class Arch { kResnet, kOdenet, kRodenet1, kRodenet2, kRodenet12, kRodenet3, kHybrid3 };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

enum class LayerId { kConv1, kLayer1, kLayer2_1, kLayer2_2, kLayer3_1, kLayer3_2, kFc };

const char* layer_name(LayerId id);
LayerId layer_from_name(const std::string& name);

struct LayerSchedule {
    int stacked = 0;
    int execs = 0;  // executions per block instance
};

/// Per-layer (stacked blocks, executions per block); layers scheduled 0/0 are
/// absent from the network.
struct Schedule {
    LayerSchedule conv1, layer1, layer2_1, layer2_2, layer3_1, layer3_2, fc;

    const LayerSchedule& of(LayerId id) const;
    LayerSchedule& of(LayerId id);
    /// Total residual-block executions (conv1 and fc excluded).
    int total_block_executions() const;
};

inline constexpr LayerId kResidualLayers[] = {LayerId::kLayer1, LayerId::kLayer2_1,
                                              LayerId::kLayer2_2, LayerId::kLayer3_1,
                                              LayerId::kLayer3_2};
inline constexpr LayerId kAllLayers[] = {LayerId::kConv1, LayerId::kLayer1, LayerId::kLayer2_1,
                                         LayerId::kLayer2_2, LayerId::kLayer3_1,
                                         LayerId::kLayer3_2, LayerId::kFc};

/// Throws std::invalid_argument naming the violated divisibility constraint.
Schedule build_schedule(Arch arch, int n);

// --- parameter accounting (standard dims: 16/32/64 channels, 100 classes) ---

std::uint64_t param_count_layer(LayerId id, Arch arch, int n);
std::uint64_t param_size_layer(LayerId id, Arch arch, int n);  // bytes, 4 per parameter
std::uint64_t param_size_total(Arch arch, int n);              // bytes
/// Percent reduction of param_size_total versus same-N ResNet.
double reduction_vs_resnet(Arch arch, int n);

// --- model -----------------------------------------------------------------

enum class StepsMode { kTable4, kResnetEquivalence, kExplicit };
enum class NumericMode { kFloat, kQ20 };

struct NetworkConfig {
    Arch arch = Arch::kRodenet3;
    int n = 20;
    int num_classes = 100;
    int input_ch = 3;
    int input_hw = 32;
    int base_ch = 16;
    SolverMethod method = SolverMethod::kEuler;
    StepsMode steps_mode = StepsMode::kTable4;
    int explicit_steps = 1;
    BnMode bn_mode = BnMode::kDynamic;
    NumericMode numeric = NumericMode::kFloat;
};

NetworkConfig parse_network_config(const std::string& json_text);
std::string network_config_to_json(const NetworkConfig& cfg);

struct StemParams {
    ConvParams<double> conv;
    BatchNormParams<double> bn;
};

struct LayerGroup {
    LayerId id = LayerId::kLayer1;
    BlockFlavor flavor = BlockFlavor::kPlain;
    int execs = 1;
    std::vector<BlockParams<double>> blocks;
};

struct NetworkModel {
    NetworkConfig cfg;
    Schedule schedule;
    StemParams stem;
    std::vector<LayerGroup> groups;
    HeadParams head;
    Normalization norm;

    std::uint64_t learnable_param_count() const;
};

/// He-normal conv weights, gamma=1, beta=0, zero fc. Deterministic in seed.
NetworkModel build_network(const NetworkConfig& cfg, unsigned seed);

/// Solver configuration for one ODE layer group under the model's steps mode.
SolverConfig group_solver(const NetworkConfig& cfg, int execs);
BlockRunConfig group_run_config(const NetworkConfig& cfg);

std::vector<double> forward(const NetworkModel& model, const TensorF& image);

struct Q20Forward {
    std::vector<double> probs;
    std::int64_t saturations = 0;
};

/// Stem and head run in float; the residual trunk runs in Q20 with
/// per-feature-map (dynamic) batch statistics.
Q20Forward forward_q20(const NetworkModel& model, const TensorF& image);

/// Pre-quantized trunk for repeated Q20 inference.
struct QuantizedTrunk {
    std::vector<LayerGroup> meta;  // ids/flavors/execs only
    std::vector<std::vector<BlockParams<FixedQ20>>> blocks;
};
QuantizedTrunk quantize_trunk(const NetworkModel& model);
Q20Forward forward_q20(const NetworkModel& model, const QuantizedTrunk& trunk,
                       const TensorF& image);

/// Expands an ODENet-style model into the equivalent ResNet with the ODE
/// weights replicated across the stack and time channels dropped. Forward in
/// resnet-equivalence mode matches this model bitwise in float64.
NetworkModel expand_to_resnet(const NetworkModel& model);

}  // namespace rodenet
