#include "rodenet/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace rodenet {

const char* arch_name(Arch a) {
    switch (a) {
        case Arch::kResnet: return "resnet";
        case Arch::kOdenet: return "odenet";
        case Arch::kRodenet1: return "rodenet1";
        case Arch::kRodenet2: return "rodenet2";
        case Arch::kRodenet12: return "rodenet12";
        case Arch::kRodenet3: return "rodenet3";
        case Arch::kHybrid3: return "hybrid3";
    }
    return "?";
}

Arch arch_from_name(const std::string& name) {
    for (Arch a : {Arch::kResnet, Arch::kOdenet, Arch::kRodenet1, Arch::kRodenet2,
                   Arch::kRodenet12, Arch::kRodenet3, Arch::kHybrid3}) {
        if (name == arch_name(a)) return a;
    }
    throw std::invalid_argument("unknown architecture: " + name);
}

const char* layer_name(LayerId id) {
    switch (id) {
        case LayerId::kConv1: return "conv1";
        case LayerId::kLayer1: return "layer1";
        case LayerId::kLayer2_1: return "layer2_1";
        case LayerId::kLayer2_2: return "layer2_2";
        case LayerId::kLayer3_1: return "layer3_1";
        case LayerId::kLayer3_2: return "layer3_2";
        case LayerId::kFc: return "fc";
    }
    return "?";
}

LayerId layer_from_name(const std::string& name) {
    for (LayerId id : kAllLayers) {
        if (name == layer_name(id)) return id;
    }
    throw std::invalid_argument("unknown layer: " + name);
}

const LayerSchedule& Schedule::of(LayerId id) const {
    switch (id) {
        case LayerId::kConv1: return conv1;
        case LayerId::kLayer1: return layer1;
        case LayerId::kLayer2_1: return layer2_1;
        case LayerId::kLayer2_2: return layer2_2;
        case LayerId::kLayer3_1: return layer3_1;
        case LayerId::kLayer3_2: return layer3_2;
        case LayerId::kFc: return fc;
    }
    throw std::logic_error("Schedule::of");
}

LayerSchedule& Schedule::of(LayerId id) {
    return const_cast<LayerSchedule&>(static_cast<const Schedule*>(this)->of(id));
}

int Schedule::total_block_executions() const {
    int total = 0;
    for (LayerId id : kResidualLayers) {
        const LayerSchedule& ls = of(id);
        total += ls.stacked * ls.execs;
    }
    return total;
}

Schedule build_schedule(Arch arch, int n) {
    if (n < 20 || n % 6 != 2) {
        throw std::invalid_argument("invalid N=" + std::to_string(n) +
                                    ": need N >= 20 and N == 2 (mod 6) so (N-2)/6 and (N-8)/6 are positive integers");
    }
    if (arch == Arch::kRodenet12 && (n - 4) % 4 != 0) {
        throw std::invalid_argument("invalid N=" + std::to_string(n) +
                                    " for rodenet12: need N == 0 (mod 4) so (N-4)/4 and (N-8)/4 are integers");
    }
    const int e1 = (n - 2) / 6;
    const int e2 = (n - 8) / 6;
    Schedule s;
    s.conv1 = {1, 1};
    s.layer2_1 = {1, 1};
    s.layer3_1 = {1, 1};
    s.fc = {1, 1};
    switch (arch) {
        case Arch::kResnet:
            s.layer1 = {e1, 1};
            s.layer2_2 = {e2, 1};
            s.layer3_2 = {e2, 1};
            break;
        case Arch::kOdenet:
            s.layer1 = {1, e1};
            s.layer2_2 = {1, e2};
            s.layer3_2 = {1, e2};
            break;
        case Arch::kRodenet1:
            s.layer1 = {1, (n - 6) / 2};
            s.layer2_2 = {0, 0};
            s.layer3_2 = {0, 0};
            break;
        case Arch::kRodenet2:
            s.layer1 = {1, 1};
            s.layer2_2 = {1, (n - 8) / 2};
            s.layer3_2 = {0, 0};
            break;
        case Arch::kRodenet12:
            s.layer1 = {1, (n - 4) / 4};
            s.layer2_2 = {1, (n - 8) / 4};
            s.layer3_2 = {0, 0};
            break;
        case Arch::kRodenet3:
            s.layer1 = {1, 1};
            s.layer2_2 = {0, 0};
            s.layer3_2 = {1, (n - 8) / 2};
            break;
        case Arch::kHybrid3:
            s.layer1 = {e1, 1};
            s.layer2_2 = {e2, 1};
            s.layer3_2 = {1, e2};
            break;
    }
    return s;
}

namespace {

struct LayerDims {
    int in_ch, out_ch, stride;
};

LayerDims layer_dims(LayerId id, int base) {
    switch (id) {
        case LayerId::kLayer1: return {base, base, 1};
        case LayerId::kLayer2_1: return {base, 2 * base, 2};
        case LayerId::kLayer2_2: return {2 * base, 2 * base, 1};
        case LayerId::kLayer3_1: return {2 * base, 4 * base, 2};
        case LayerId::kLayer3_2: return {4 * base, 4 * base, 1};
        default: throw std::logic_error("layer_dims: not a residual layer");
    }
}

/// A block executed more than once is the ODE flavor (with time channels);
/// blocks executed exactly once stay plain.
BlockFlavor layer_flavor(const Schedule& s, LayerId id) {
    return s.of(id).execs > 1 ? BlockFlavor::kOde : BlockFlavor::kPlain;
}

std::uint64_t block_param_count(LayerId id, BlockFlavor flavor, int base) {
    const LayerDims d = layer_dims(id, base);
    if (flavor == BlockFlavor::kOde) {
        return 2ull * 9 * (d.out_ch + 1) * d.out_ch + 4ull * d.out_ch;
    }
    return 9ull * d.in_ch * d.out_ch + 9ull * d.out_ch * d.out_ch + 4ull * d.out_ch;
}

constexpr int kStdBase = 16;
constexpr int kStdClasses = 100;

}  // namespace

std::uint64_t param_count_layer(LayerId id, Arch arch, int n) {
    const Schedule s = build_schedule(arch, n);
    if (id == LayerId::kConv1) return 9ull * 3 * kStdBase + 2ull * kStdBase;
    if (id == LayerId::kFc) return 4ull * kStdBase * kStdClasses + kStdClasses;
    if (s.of(id).stacked == 0) {
        throw std::invalid_argument(std::string(layer_name(id)) + " is absent from " +
                                    arch_name(arch) + "-" + std::to_string(n));
    }
    return block_param_count(id, layer_flavor(s, id), kStdBase);
}

std::uint64_t param_size_layer(LayerId id, Arch arch, int n) {
    return 4 * param_count_layer(id, arch, n);
}

std::uint64_t param_size_total(Arch arch, int n) {
    const Schedule s = build_schedule(arch, n);
    std::uint64_t count = param_count_layer(LayerId::kConv1, arch, n) +
                          param_count_layer(LayerId::kFc, arch, n);
    for (LayerId id : kResidualLayers) {
        if (s.of(id).stacked == 0) continue;
        count += static_cast<std::uint64_t>(s.of(id).stacked) *
                 block_param_count(id, layer_flavor(s, id), kStdBase);
    }
    return 4 * count;
}

double reduction_vs_resnet(Arch arch, int n) {
    const double base = static_cast<double>(param_size_total(Arch::kResnet, n));
    const double self = static_cast<double>(param_size_total(arch, n));
    return 100.0 * (1.0 - self / base);
}

// --- model -----------------------------------------------------------------

std::uint64_t NetworkModel::learnable_param_count() const {
    std::uint64_t count = stem.conv.w.size() + stem.bn.gamma.size() + stem.bn.beta.size();
    for (const auto& g : groups) {
        for (const auto& b : g.blocks) count += b.param_count();
    }
    count += head.fc_w.size() + head.fc_b.size();
    return count;
}

namespace {

void he_init(std::vector<double>& w, int fan_in, std::mt19937& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& e : w) e = dist(rng);
}

BlockParams<double> make_block(LayerId id, BlockFlavor flavor, int base, std::mt19937& rng) {
    const LayerDims d = layer_dims(id, base);
    BlockParams<double> b(flavor, d.in_ch, d.out_ch, flavor == BlockFlavor::kOde ? 1 : d.stride);
    he_init(b.conv1.w, b.conv1.in_ch * 9, rng);
    he_init(b.conv2.w, b.conv2.in_ch * 9, rng);
    std::fill(b.bn1.gamma.begin(), b.bn1.gamma.end(), 1.0);
    std::fill(b.bn2.gamma.begin(), b.bn2.gamma.end(), 1.0);
    std::fill(b.bn1.running_var.begin(), b.bn1.running_var.end(), 1.0);
    std::fill(b.bn2.running_var.begin(), b.bn2.running_var.end(), 1.0);
    return b;
}

}  // namespace

NetworkModel build_network(const NetworkConfig& cfg, unsigned seed) {
    NetworkModel m;
    m.cfg = cfg;
    m.schedule = build_schedule(cfg.arch, cfg.n);
    std::mt19937 rng(seed);

    m.stem.conv = ConvParams<double>(cfg.base_ch, cfg.input_ch, 1);
    he_init(m.stem.conv.w, cfg.input_ch * 9, rng);
    m.stem.bn = BatchNormParams<double>(cfg.base_ch);
    std::fill(m.stem.bn.gamma.begin(), m.stem.bn.gamma.end(), 1.0);
    std::fill(m.stem.bn.running_var.begin(), m.stem.bn.running_var.end(), 1.0);

    for (LayerId id : kResidualLayers) {
        const LayerSchedule& ls = m.schedule.of(id);
        if (ls.stacked == 0) continue;
        LayerGroup g;
        g.id = id;
        g.flavor = layer_flavor(m.schedule, id);
        g.execs = ls.execs;
        for (int i = 0; i < ls.stacked; ++i) {
            g.blocks.push_back(make_block(id, g.flavor, cfg.base_ch, rng));
        }
        m.groups.push_back(std::move(g));
    }

    m.head = HeadParams(cfg.num_classes, 4 * cfg.base_ch);
    m.norm.mean.assign(cfg.input_ch, 0.0);
    m.norm.stddev.assign(cfg.input_ch, 1.0);
    return m;
}

SolverConfig group_solver(const NetworkConfig& cfg, int execs) {
    SolverConfig s;
    s.method = cfg.method;
    switch (cfg.steps_mode) {
        case StepsMode::kTable4:
            s.t0 = 0.0;
            s.t1 = 1.0;
            s.steps = execs;
            break;
        case StepsMode::kResnetEquivalence:
            s.t0 = 0.0;
            s.t1 = static_cast<double>(execs);  // h = 1
            s.steps = execs;
            break;
        case StepsMode::kExplicit:
            s.t0 = 0.0;
            s.t1 = 1.0;
            s.steps = cfg.explicit_steps;
            break;
    }
    return s;
}

BlockRunConfig group_run_config(const NetworkConfig& cfg) {
    BlockRunConfig rc;
    rc.bn_mode = cfg.bn_mode;
    rc.clamp_time = cfg.steps_mode == StepsMode::kResnetEquivalence;
    rc.clamped_t = 0.0;
    return rc;
}

std::vector<double> forward(const NetworkModel& model, const TensorF& image) {
    const BlockRunConfig rc = group_run_config(model.cfg);
    TensorF z = normalize_image(image, model.norm);
    z = conv2d_forward(z, model.stem.conv);
    z = relu(batchnorm_forward(z, model.stem.bn, rc.bn_mode));
    for (const auto& g : model.groups) {
        if (g.flavor == BlockFlavor::kOde) {
            z = ode_block_forward(z, g.blocks[0], group_solver(model.cfg, g.execs), rc);
        } else {
            for (const auto& b : g.blocks) z = plain_block_forward(z, b, rc);
        }
    }
    return head_forward(z, model.head);
}

namespace {

template <typename Dst, typename Src>
std::vector<Dst> quantize_vec(const std::vector<Src>& v) {
    std::vector<Dst> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = q20_from_f64(v[i]);
    return out;
}

BlockParams<FixedQ20> quantize_block(const BlockParams<double>& b) {
    BlockParams<FixedQ20> q(b.flavor, b.in_ch, b.out_ch, b.stride);
    q.conv1.w = quantize_vec<FixedQ20>(b.conv1.w);
    q.conv2.w = quantize_vec<FixedQ20>(b.conv2.w);
    for (auto [src, dst] : {std::pair{&b.bn1, &q.bn1}, std::pair{&b.bn2, &q.bn2}}) {
        dst->gamma = quantize_vec<FixedQ20>(src->gamma);
        dst->beta = quantize_vec<FixedQ20>(src->beta);
        dst->running_mean = quantize_vec<FixedQ20>(src->running_mean);
        dst->running_var = quantize_vec<FixedQ20>(src->running_var);
    }
    return q;
}

}  // namespace

QuantizedTrunk quantize_trunk(const NetworkModel& model) {
    QuantizedTrunk t;
    for (const auto& g : model.groups) {
        LayerGroup meta;
        meta.id = g.id;
        meta.flavor = g.flavor;
        meta.execs = g.execs;
        t.meta.push_back(meta);
        std::vector<BlockParams<FixedQ20>> qs;
        for (const auto& b : g.blocks) qs.push_back(quantize_block(b));
        t.blocks.push_back(std::move(qs));
    }
    return t;
}

Q20Forward forward_q20(const NetworkModel& model, const QuantizedTrunk& trunk,
                       const TensorF& image) {
    const BlockRunConfig rc = group_run_config(model.cfg);
    q20_reset_saturation_count();

    TensorF zf = normalize_image(image, model.norm);
    zf = conv2d_forward(zf, model.stem.conv);
    zf = relu(batchnorm_forward(zf, model.stem.bn, rc.bn_mode));

    TensorQ z = quantize(zf);
    for (std::size_t gi = 0; gi < trunk.meta.size(); ++gi) {
        const LayerGroup& meta = trunk.meta[gi];
        const auto& blocks = trunk.blocks[gi];
        if (meta.flavor == BlockFlavor::kOde) {
            z = ode_block_forward(z, blocks[0], group_solver(model.cfg, meta.execs), rc);
        } else {
            for (const auto& b : blocks) z = plain_block_forward(z, b, rc);
        }
    }

    Q20Forward out;
    out.probs = head_forward(dequantize(z), model.head);
    out.saturations = q20_saturation_count();
    return out;
}

Q20Forward forward_q20(const NetworkModel& model, const TensorF& image) {
    return forward_q20(model, quantize_trunk(model), image);
}

NetworkModel expand_to_resnet(const NetworkModel& model) {
    const Schedule resnet_sched = build_schedule(Arch::kResnet, model.cfg.n);
    for (LayerId id : kResidualLayers) {
        if (model.schedule.of(id).stacked == 0) {
            throw std::invalid_argument("expand_to_resnet: " + std::string(arch_name(model.cfg.arch)) +
                                        " lacks " + layer_name(id) + "; no ResNet counterpart");
        }
    }
    NetworkModel out;
    out.cfg = model.cfg;
    out.cfg.arch = Arch::kResnet;
    out.cfg.steps_mode = StepsMode::kTable4;
    out.schedule = resnet_sched;
    out.stem = model.stem;
    out.head = model.head;
    out.norm = model.norm;

    for (const auto& g : model.groups) {
        LayerGroup ng;
        ng.id = g.id;
        ng.flavor = BlockFlavor::kPlain;
        ng.execs = 1;
        if (g.flavor == BlockFlavor::kPlain) {
            ng.blocks = g.blocks;
        } else {
            // One plain copy per execution; drop the time-channel weights,
            // which multiply a clamped zero channel in equivalence mode.
            const BlockParams<double>& src = g.blocks[0];
            BlockParams<double> plain(BlockFlavor::kPlain, src.in_ch, src.out_ch, 1);
            for (int o = 0; o < plain.conv1.out_ch; ++o)
                for (int c = 0; c < plain.conv1.in_ch; ++c)
                    for (int u = 0; u < 3; ++u)
                        for (int v = 0; v < 3; ++v) plain.conv1.wt(o, c, u, v) = src.conv1.wt(o, c, u, v);
            for (int o = 0; o < plain.conv2.out_ch; ++o)
                for (int c = 0; c < plain.conv2.in_ch; ++c)
                    for (int u = 0; u < 3; ++u)
                        for (int v = 0; v < 3; ++v) plain.conv2.wt(o, c, u, v) = src.conv2.wt(o, c, u, v);
            plain.bn1 = src.bn1;
            plain.bn2 = src.bn2;
            ng.blocks.assign(g.execs, plain);
        }
        out.groups.push_back(std::move(ng));
    }
    return out;
}

// --- config ------------------------------------------------------------------

NetworkConfig parse_network_config(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    NetworkConfig cfg;
    cfg.arch = arch_from_name(j.at("arch").get<std::string>());
    cfg.n = j.contains("n") ? j.at("n").get<int>() : j.at("N").get<int>();
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.input_ch = j.value("input_channels", cfg.input_ch);
    cfg.input_hw = j.value("input_hw", cfg.input_hw);
    cfg.base_ch = j.value("base_channels", cfg.base_ch);
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        const std::string method = s.value("method", "euler");
        if (method == "euler") cfg.method = SolverMethod::kEuler;
        else if (method == "rk2") cfg.method = SolverMethod::kRk2;
        else if (method == "rk4") cfg.method = SolverMethod::kRk4;
        else throw std::runtime_error("unknown solver method: " + method);
        const std::string mode = s.value("steps_mode", "table4");
        if (mode == "table4") cfg.steps_mode = StepsMode::kTable4;
        else if (mode == "resnet_equivalence") cfg.steps_mode = StepsMode::kResnetEquivalence;
        else if (mode == "explicit") cfg.steps_mode = StepsMode::kExplicit;
        else throw std::runtime_error("unknown steps_mode: " + mode);
        cfg.explicit_steps = s.value("steps", cfg.explicit_steps);
    }
    const std::string bn = j.value("bn_mode", "dynamic");
    if (bn == "dynamic") cfg.bn_mode = BnMode::kDynamic;
    else if (bn == "running") cfg.bn_mode = BnMode::kRunning;
    else throw std::runtime_error("unknown bn_mode: " + bn);
    const std::string numeric = j.value("numeric", "float");
    if (numeric == "float") cfg.numeric = NumericMode::kFloat;
    else if (numeric == "q20") cfg.numeric = NumericMode::kQ20;
    else throw std::runtime_error("unknown numeric mode: " + numeric);
    return cfg;
}

std::string network_config_to_json(const NetworkConfig& cfg) {
    nlohmann::json j;
    j["arch"] = arch_name(cfg.arch);
    j["n"] = cfg.n;
    j["num_classes"] = cfg.num_classes;
    j["input_channels"] = cfg.input_ch;
    j["input_hw"] = cfg.input_hw;
    j["base_channels"] = cfg.base_ch;
    j["solver"]["method"] = cfg.method == SolverMethod::kEuler   ? "euler"
                            : cfg.method == SolverMethod::kRk2   ? "rk2"
                                                                 : "rk4";
    j["solver"]["steps_mode"] = cfg.steps_mode == StepsMode::kTable4 ? "table4"
                                : cfg.steps_mode == StepsMode::kResnetEquivalence
                                    ? "resnet_equivalence"
                                    : "explicit";
    j["solver"]["steps"] = cfg.explicit_steps;
    j["bn_mode"] = cfg.bn_mode == BnMode::kDynamic ? "dynamic" : "running";
    j["numeric"] = cfg.numeric == NumericMode::kFloat ? "float" : "q20";
    return j.dump(2);
}

}  // namespace rodenet
