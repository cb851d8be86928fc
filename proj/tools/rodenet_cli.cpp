#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rodenet/checkpoint.hpp"
#include "rodenet/cost_model.hpp"
#include "rodenet/network.hpp"
#include "rodenet/train.hpp"

namespace {

using namespace rodenet;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

/// Rows of cells; renders as an aligned text table or as CSV.
struct Report {
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

    void print(std::ostream& out) const {
        std::vector<std::size_t> width;
        for (const auto& row : rows) {
            if (width.size() < row.size()) width.resize(row.size(), 0);
            for (std::size_t i = 0; i < row.size(); ++i) {
                width[i] = std::max(width[i], row[i].size());
            }
        }
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                out << std::left << std::setw(static_cast<int>(width[i]) + 2) << row[i];
            }
            out << '\n';
        }
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write CSV to " + path);
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out << ',';
                out << row[i];
            }
            out << '\n';
        }
    }
};

std::string fmt(double v, int prec) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << v;
    return ss.str();
}

const std::vector<Arch>& all_archs() {
    static const std::vector<Arch> archs = {Arch::kResnet,   Arch::kOdenet,   Arch::kRodenet1,
                                            Arch::kRodenet2, Arch::kRodenet12, Arch::kRodenet3,
                                            Arch::kHybrid3};
    return archs;
}

std::string output_size(LayerId id) {
    switch (id) {
        case LayerId::kConv1:
        case LayerId::kLayer1: return "32x32, 16ch";
        case LayerId::kLayer2_1:
        case LayerId::kLayer2_2: return "16x16, 32ch";
        case LayerId::kLayer3_1:
        case LayerId::kLayer3_2: return "8x8, 64ch";
        case LayerId::kFc: return "1x100";
    }
    return "?";
}

void emit(const Report& report, const std::string& csv_path) {
    report.print(std::cout);
    if (!csv_path.empty()) report.write_csv(csv_path);
}

int cmd_describe(const std::string& arch_name_str, int n, const std::string& csv_path) {
    const Arch arch = arch_from_name(arch_name_str);
    const Schedule sched = build_schedule(arch, n);
    Report rep;
    rep.add({"layer", "output size", "stacked blocks", "execs per block"});
    for (LayerId id : kAllLayers) {
        const LayerSchedule& ls = sched.of(id);
        if (ls.stacked == 0) {
            rep.add({layer_name(id), output_size(id), "-", "-"});
        } else {
            rep.add({layer_name(id), output_size(id), std::to_string(ls.stacked),
                     std::to_string(ls.execs)});
        }
    }
    rep.add({"total block executions", "", std::to_string(sched.total_block_executions()), ""});
    emit(rep, csv_path);
    return 0;
}

int cmd_params(const std::string& arch_name_str, int n, bool all, const std::string& csv_path) {
    Report rep;
    if (all) {
        rep.add({"arch", "n", "total [kB]", "reduction vs resnet [%]"});
        for (Arch a : all_archs()) {
            for (int size : {20, 32, 44, 56}) {
                rep.add({arch_name(a), std::to_string(size),
                         fmt(static_cast<double>(param_size_total(a, size)) / 1000.0, 3),
                         a == Arch::kResnet ? "-" : fmt(reduction_vs_resnet(a, size), 2)});
            }
        }
        emit(rep, csv_path);
        return 0;
    }
    const Arch arch = arch_from_name(arch_name_str);
    const Schedule sched = build_schedule(arch, n);
    rep.add({"layer", "params", "size [kB]", "stacked", "subtotal [kB]"});
    for (LayerId id : kAllLayers) {
        const LayerSchedule& ls = sched.of(id);
        if (ls.stacked == 0) {
            rep.add({layer_name(id), "-", "-", "0", "-"});
            continue;
        }
        const auto count = param_count_layer(id, arch, n);
        const auto bytes = param_size_layer(id, arch, n);
        rep.add({layer_name(id), std::to_string(count), fmt(bytes / 1000.0, 3),
                 std::to_string(ls.stacked), fmt(ls.stacked * bytes / 1000.0, 3)});
    }
    const double total_kb = static_cast<double>(param_size_total(arch, n)) / 1000.0;
    rep.add({"total", "", "", "", fmt(total_kb, 3)});
    if (arch != Arch::kResnet) {
        rep.add({"reduction vs resnet-" + std::to_string(n), "", "", "",
                 fmt(reduction_vs_resnet(arch, n), 2) + "%"});
    }
    emit(rep, csv_path);
    return 0;
}

TensorF read_image(const std::string& path, int channels, int hw) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::size_t pixels = static_cast<std::size_t>(channels) * hw * hw;
    std::size_t offset = 0;
    if (pixels == 3072 && bytes.size() == 3074) {
        offset = 2;  // CIFAR-100 record
    } else if (pixels == 3072 && bytes.size() == 3073) {
        offset = 1;  // CIFAR-10 record
    } else if (bytes.size() != pixels) {
        throw std::runtime_error("model expects " + std::to_string(pixels) +
                                 " raw pixel bytes (channel planes, row-major); got " +
                                 std::to_string(bytes.size()));
    }
    TensorF img(channels, hw, hw);
    for (std::size_t i = 0; i < pixels; ++i) {
        img.v[i] = static_cast<double>(bytes[offset + i]) / 255.0;
    }
    return img;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& numeric, const std::string& csv_path) {
    const NetworkModel model = load_checkpoint(ckpt);
    const TensorF image = read_image(image_path, model.cfg.input_ch, model.cfg.input_hw);

    std::string mode = numeric;
    if (mode.empty()) {
        mode = model.cfg.numeric == NumericMode::kQ20 ? "q20" : "float";
    }
    std::vector<double> probs;
    std::int64_t saturations = -1;
    if (mode == "q20") {
        const Q20Forward out = forward_q20(model, image);
        probs = out.probs;
        saturations = out.saturations;
    } else if (mode == "float") {
        probs = forward(model, image);
    } else {
        throw std::invalid_argument("--numeric must be float or q20");
    }

    std::vector<int> order(probs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });

    Report rep;
    rep.add({"rank", "class", "probability"});
    for (int r = 0; r < 5 && r < static_cast<int>(order.size()); ++r) {
        rep.add({std::to_string(r + 1), std::to_string(order[r]), fmt(probs[order[r]], 6)});
    }
    emit(rep, csv_path);
    if (saturations >= 0) {
        std::cout << "q20 saturations: " << saturations << '\n';
    }
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out,
              const std::string& metrics_path, int epochs_override, unsigned seed) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    const NetworkConfig ncfg = parse_network_config(ss.str());

    Dataset ds;
    if (data.rfind("synthetic", 0) == 0) {
        SyntheticSpec spec;
        spec.num_classes = ncfg.num_classes;
        spec.height = ncfg.input_hw;
        spec.width = ncfg.input_hw;
        spec.seed = seed;
        ds = make_synthetic(spec);
    } else {
        ds = load_cifar_dir(data);
        if (ds.num_classes != ncfg.num_classes) {
            throw std::runtime_error("dataset has " + std::to_string(ds.num_classes) +
                                     " classes but the config expects " +
                                     std::to_string(ncfg.num_classes));
        }
    }

    TrainConfig tcfg;
    tcfg.seed = seed;
    if (epochs_override > 0) tcfg.epochs = epochs_override;

    NetworkModel model = build_network(ncfg, seed);
    std::ofstream metrics;
    std::ostream* metrics_out = nullptr;
    if (!metrics_path.empty()) {
        metrics.open(metrics_path);
        if (!metrics) throw std::runtime_error("cannot write metrics to " + metrics_path);
        metrics_out = &metrics;
    }
    const TrainResult result = train(model, ds, nullptr, tcfg, metrics_out);
    save_checkpoint(out, model);

    const EpochMetrics& last = result.metrics.back();
    std::cout << "trained " << arch_name(ncfg.arch) << "-" << ncfg.n << " for " << tcfg.epochs
              << " epochs: train_loss " << fmt(last.train_loss, 4) << " train_acc "
              << fmt(last.train_acc, 4) << "\ncheckpoint written to " << out << '\n';
    return 0;
}

int cmd_simulate(const std::string& plan_path, const std::string& csv_path) {
    const OffloadPlan plan = load_offload_plan(plan_path);
    Report rep;
    rep.add({"model", "n", "offload", "total w/o PL [s]", "target w/o PL [s]",
             "ratio of target [%]", "target w/ PL [s]", "total w/ PL [s]", "overall speedup"});
    std::vector<std::string> warnings;
    for (const auto& spec : plan.rows) {
        if (spec.offload.empty()) {
            const SimReport r = simulate_offload(spec, plan.cost);
            rep.add({arch_name(spec.arch), std::to_string(spec.n), "-", fmt(r.total_wo_pl, 2),
                     "-", "-", "-", "-", "-"});
            continue;
        }
        const SimReport r = simulate_offload(spec, plan.cost);
        std::string names, twos, ratios, tws;
        for (std::size_t i = 0; i < r.per_layer.size(); ++i) {
            if (i) {
                names += " / ";
                twos += " / ";
                ratios += " / ";
                tws += " / ";
            }
            names += layer_name(r.per_layer[i].layer);
            twos += fmt(r.per_layer[i].target_wo_pl, 2);
            ratios += fmt(r.per_layer[i].ratio_percent, 2);
            tws += fmt(r.per_layer[i].target_w_pl, 2);
        }
        rep.add({arch_name(spec.arch), std::to_string(spec.n), names, fmt(r.total_wo_pl, 2),
                 twos, ratios, tws, fmt(r.total_w_pl, 2), fmt(r.overall_speedup, 2)});
        for (const auto& w : r.warnings) warnings.push_back(w);
    }
    emit(rep, csv_path);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

int cmd_calibrate(const std::string& points_path, const std::string& csv_path) {
    std::ifstream in(points_path);
    if (!in) throw std::runtime_error("cannot open points file " + points_path);
    std::vector<std::pair<double, double>> points;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double n, cycles;
        if (ls >> n >> cycles) points.push_back({n, cycles});
    }
    const CycleFit fit = fit_cycle_model(points);
    Report rep;
    rep.add({"quantity", "value"});
    rep.add({"A (cycles, parallelizable part)", fmt(fit.model.a, 1)});
    rep.add({"B (cycles, fixed part)", fmt(fit.model.b, 1)});
    rep.add({"max relative residual", fmt(fit.max_rel_residual, 6)});
    for (const auto& [n, cycles] : points) {
        rep.add({"predicted cycles @ n=" + fmt(n, 0), fmt(predict_cycles(fit.model, n), 1)});
    }
    emit(rep, csv_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ODENet / rODENet toolkit: architectures, parameter accounting, training, "
                 "fixed-point inference, and PS/PL offload simulation"};
    app.require_subcommand(1);
    app.fallthrough();  // let --csv appear after the subcommand
    std::string csv_path;
    app.add_option("--csv", csv_path, "also write the report as CSV to this path");

    std::string arch = "resnet";
    int n = 20;
    auto* describe = app.add_subcommand("describe", "print the layer schedule of an architecture");
    describe->add_option("--arch", arch, "architecture name")->required();
    describe->add_option("--n", n, "network size N")->required();

    std::string p_arch = "odenet";
    int p_n = 20;
    bool p_all = false;
    auto* params = app.add_subcommand("params", "per-layer and total parameter sizes");
    params->add_option("--arch", p_arch, "architecture name");
    params->add_option("--n", p_n, "network size N");
    params->add_flag("--all", p_all, "summarize every architecture and size");

    std::string ckpt, image, numeric;
    auto* infer = app.add_subcommand("infer", "run single-image inference from a checkpoint");
    infer->add_option("--checkpoint", ckpt, "checkpoint path")->required();
    infer->add_option("--image", image, "raw 3072-byte RGB image or one CIFAR record")->required();
    infer->add_option("--numeric", numeric, "float or q20 (default: the checkpoint's mode)");

    std::string t_config, t_data, t_out, t_metrics;
    int t_epochs = 0;
    unsigned t_seed = 1;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", t_config, "network config JSON")->required();
    train_cmd->add_option("--data", t_data, "CIFAR directory or 'synthetic'")->required();
    train_cmd->add_option("--out", t_out, "output checkpoint path")->required();
    train_cmd->add_option("--metrics", t_metrics, "per-epoch metrics CSV path");
    train_cmd->add_option("--epochs", t_epochs, "override the epoch count");
    train_cmd->add_option("--seed", t_seed, "training seed");

    std::string plan_path;
    auto* simulate = app.add_subcommand("simulate", "simulate PS/PL offload execution times");
    simulate->add_option("--plan", plan_path, "offload plan JSON")->required();

    std::string points_path;
    auto* calibrate = app.add_subcommand("calibrate", "fit a cycle model from (n, cycles) points");
    calibrate->add_option("--points", points_path, "CSV/whitespace file of n,cycles rows")
        ->required();

    try {
        app.parse(argc, argv);
        if (describe->parsed()) return cmd_describe(arch, n, csv_path);
        if (params->parsed()) return cmd_params(p_arch, p_n, p_all, csv_path);
        if (infer->parsed()) return cmd_infer(ckpt, image, numeric, csv_path);
        if (train_cmd->parsed())
            return cmd_train(t_config, t_data, t_out, t_metrics, t_epochs, t_seed);
        if (simulate->parsed()) return cmd_simulate(plan_path, csv_path);
        if (calibrate->parsed()) return cmd_calibrate(points_path, csv_path);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
