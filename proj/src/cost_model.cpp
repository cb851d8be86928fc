#include "rodenet/cost_model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rodenet {

CycleFit fit_cycle_model(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) {
        throw std::invalid_argument("fit_cycle_model: need at least two points");
    }
    double sx = 0.0, sxx = 0.0, sy = 0.0, sxy = 0.0;
    const double n = static_cast<double>(points.size());
    for (const auto& [par, cycles] : points) {
        if (par < 1.0) throw std::invalid_argument("fit_cycle_model: parallelism must be >= 1");
        const double x = 1.0 / par;
        sx += x;
        sxx += x * x;
        sy += cycles;
        sxy += x * cycles;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12 * n * sxx) {
        throw std::invalid_argument("fit_cycle_model: degenerate design (all n equal)");
    }
    CycleFit fit;
    fit.model.a = (n * sxy - sx * sy) / denom;
    fit.model.b = (sy - fit.model.a * sx) / n;
    for (const auto& [par, cycles] : points) {
        const double pred = predict_cycles(fit.model, par);
        fit.max_rel_residual = std::max(fit.max_rel_residual,
                                        std::abs(pred - cycles) / std::abs(cycles));
    }
    return fit;
}

double predict_cycles(const LayerCycleModel& m, double parallelism) {
    return m.a / parallelism + m.b;
}

std::uint64_t layer_cycles(const LayerCycleModel& m, int parallelism) {
    if (parallelism < 1) throw std::invalid_argument("layer_cycles: parallelism must be >= 1");
    return static_cast<std::uint64_t>(std::ceil(predict_cycles(m, parallelism)));
}

LayerShape layer_output_shape(LayerId id) {
    switch (id) {
        case LayerId::kConv1: return {16, 32, 32};
        case LayerId::kLayer1: return {16, 32, 32};
        case LayerId::kLayer2_1: return {32, 16, 16};
        case LayerId::kLayer2_2: return {32, 16, 16};
        case LayerId::kLayer3_1: return {64, 8, 8};
        case LayerId::kLayer3_2: return {64, 8, 8};
        case LayerId::kFc: return {0, 0, 0};
    }
    throw std::logic_error("layer_output_shape");
}

namespace {

LayerShape layer_input_shape(LayerId id) {
    switch (id) {
        case LayerId::kLayer1: return {16, 32, 32};
        case LayerId::kLayer2_1: return {16, 32, 32};
        case LayerId::kLayer2_2: return {32, 16, 16};
        case LayerId::kLayer3_1: return {32, 16, 16};
        case LayerId::kLayer3_2: return {64, 8, 8};
        default: return layer_output_shape(id);
    }
}

double sw_time_for(const CostConfig& cfg, int n, LayerId id, bool ode) {
    const auto n_it = cfg.sw_times.find(n);
    if (n_it == cfg.sw_times.end()) {
        throw std::runtime_error("cost config has no sw_times for N=" + std::to_string(n));
    }
    const auto l_it = n_it->second.find(id);
    if (l_it == n_it->second.end()) {
        throw std::runtime_error(std::string("cost config sw_times missing layer ") +
                                 layer_name(id) + " for N=" + std::to_string(n));
    }
    const double t = ode ? l_it->second.ode : l_it->second.plain;
    if (t < 0.0) {
        throw std::runtime_error(std::string("cost config sw_times missing ") +
                                 (ode ? "ode" : "plain") + " time for " + layer_name(id) +
                                 " at N=" + std::to_string(n));
    }
    return t;
}

}  // namespace

SimReport simulate_offload(const OffloadSpec& spec, const Schedule& schedule,
                           const CostConfig& cfg) {
    SimReport report;
    for (LayerId id : spec.offload) {
        if (schedule.of(id).stacked == 0) {
            throw std::invalid_argument(std::string("offload target ") + layer_name(id) +
                                        " is absent from " + arch_name(spec.arch) + "-" +
                                        std::to_string(spec.n));
        }
    }
    if (spec.parallelism >= 32) {
        report.warnings.push_back(
            "conv_x32 and above could not satisfy the 100 MHz timing constraint on the "
            "target device; treat these numbers as optimistic");
    }

    for (LayerId id : kAllLayers) {
        const LayerSchedule& ls = schedule.of(id);
        if (ls.stacked == 0) continue;
        const bool ode = ls.execs > 1;
        const double per_exec = sw_time_for(cfg, spec.n, id, ode);
        report.total_wo_pl += static_cast<double>(ls.stacked) * ls.execs * per_exec;
    }

    for (LayerId id : spec.offload) {
        const LayerSchedule& ls = schedule.of(id);
        const bool ode = ls.execs > 1;
        const double execs = static_cast<double>(ls.stacked) * ls.execs;
        LayerReport lr;
        lr.layer = id;
        lr.target_wo_pl = execs * sw_time_for(cfg, spec.n, id, ode);

        const auto model_it = cfg.cycle_models.find(id);
        if (model_it == cfg.cycle_models.end()) {
            throw std::runtime_error(std::string("cost config has no cycle model for ") +
                                     layer_name(id));
        }
        const LayerShape in = layer_input_shape(id);
        const LayerShape out = layer_output_shape(id);
        const double words = static_cast<double>(in.ch) * in.h * in.w +
                             static_cast<double>(out.ch) * out.h * out.w;
        const double cycles_per_exec =
            static_cast<double>(layer_cycles(model_it->second, spec.parallelism)) +
            cfg.transfer_cycles_per_word * words;
        lr.target_w_pl = execs * cycles_per_exec / cfg.clock_hz;

        report.target_wo_pl += lr.target_wo_pl;
        report.target_w_pl += lr.target_w_pl;
        report.per_layer.push_back(lr);
    }

    report.total_w_pl = report.total_wo_pl - report.target_wo_pl + report.target_w_pl;
    report.overall_speedup = report.total_wo_pl / report.total_w_pl;
    for (auto& lr : report.per_layer) {
        lr.ratio_percent = 100.0 * lr.target_wo_pl / report.total_wo_pl;
    }
    return report;
}

SimReport simulate_offload(const OffloadSpec& spec, const CostConfig& cfg) {
    return simulate_offload(spec, build_schedule(spec.arch, spec.n), cfg);
}

std::uint64_t bram_lower_bound_bytes(std::uint64_t param_bytes, const LayerShape& in,
                                     const LayerShape& out) {
    const std::uint64_t in_bytes = 4ull * in.ch * in.h * in.w;
    const std::uint64_t out_bytes = 4ull * out.ch * out.h * out.w;
    return param_bytes + in_bytes + out_bytes;
}

std::uint64_t bram_lower_bound(LayerId id, Arch arch, int n) {
    return bram_lower_bound_bytes(param_size_layer(id, arch, n), layer_input_shape(id),
                                  layer_output_shape(id));
}

// --- config ------------------------------------------------------------------

namespace {

CostConfig parse_cost_json(const nlohmann::json& j) {
    CostConfig cfg;
    cfg.clock_hz = j.value("clock_hz", cfg.clock_hz);
    cfg.transfer_cycles_per_word = j.value("transfer_cycles_per_word", cfg.transfer_cycles_per_word);
    for (const auto& [key, val] : j.at("cycle_models").items()) {
        LayerCycleModel m;
        m.a = val.at("a").get<double>();
        m.b = val.at("b").get<double>();
        cfg.cycle_models[layer_from_name(key)] = m;
    }
    for (const auto& [nkey, table] : j.at("sw_times").items()) {
        const int n = std::stoi(nkey);
        for (const auto& [lkey, val] : table.items()) {
            SwTime t;
            if (val.is_number()) {
                t.plain = val.get<double>();
                t.ode = val.get<double>();
            } else {
                if (val.contains("plain")) t.plain = val.at("plain").get<double>();
                if (val.contains("ode")) t.ode = val.at("ode").get<double>();
            }
            cfg.sw_times[n][layer_from_name(lkey)] = t;
        }
    }
    return cfg;
}

}  // namespace

CostConfig parse_cost_config(const std::string& json_text) {
    return parse_cost_json(nlohmann::json::parse(json_text));
}

CostConfig load_cost_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cost config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_cost_config(ss.str());
}

OffloadPlan load_offload_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open offload plan " + path);
    nlohmann::json j = nlohmann::json::parse(in);

    OffloadPlan plan;
    const auto& cm = j.at("cost_model");
    if (cm.is_string()) {
        const std::filesystem::path base = std::filesystem::path(path).parent_path();
        plan.cost = load_cost_config((base / cm.get<std::string>()).string());
    } else {
        plan.cost = parse_cost_json(cm);
    }
    plan.parallelism = j.value("parallelism", plan.parallelism);
    for (const auto& row : j.at("rows")) {
        OffloadSpec spec;
        spec.arch = arch_from_name(row.at("arch").get<std::string>());
        spec.n = row.at("n").get<int>();
        spec.parallelism = row.value("parallelism", plan.parallelism);
        if (row.contains("offload")) {
            for (const auto& l : row.at("offload")) {
                spec.offload.push_back(layer_from_name(l.get<std::string>()));
            }
        }
        plan.rows.push_back(std::move(spec));
    }
    return plan;
}

}  // namespace rodenet
