#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "rodenet/checkpoint.hpp"
#include "rodenet/cost_model.hpp"
#include "rodenet/network.hpp"
#include "rodenet/train.hpp"

namespace py = pybind11;
using namespace rodenet;

namespace {

TensorF tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3) throw std::invalid_argument("expected a (C, H, W) array");
    TensorF t(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
              static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + t.size(), t.v.begin());
    return t;
}

py::dict schedule_to_dict(const Schedule& s) {
    py::dict out;
    for (LayerId id : kAllLayers) {
        const LayerSchedule& ls = s.of(id);
        out[layer_name(id)] = py::make_tuple(ls.stacked, ls.execs);
    }
    out["total_block_executions"] = s.total_block_executions();
    return out;
}

py::dict report_to_dict(const SimReport& r) {
    py::dict out;
    out["total_wo_pl"] = r.total_wo_pl;
    out["target_wo_pl"] = r.target_wo_pl;
    out["target_w_pl"] = r.target_w_pl;
    out["total_w_pl"] = r.total_w_pl;
    out["overall_speedup"] = r.overall_speedup;
    py::list layers;
    for (const auto& lr : r.per_layer) {
        py::dict d;
        d["layer"] = layer_name(lr.layer);
        d["target_wo_pl"] = lr.target_wo_pl;
        d["target_w_pl"] = lr.target_w_pl;
        d["ratio_percent"] = lr.ratio_percent;
        layers.append(d);
    }
    out["per_layer"] = layers;
    out["warnings"] = r.warnings;
    return out;
}

struct PyModel {
    NetworkModel model;

    py::array_t<double> forward_float(const py::array_t<double>& image) const {
        const auto probs = forward(model, tensor_from_array(image));
        return py::array_t<double>(static_cast<py::ssize_t>(probs.size()), probs.data());
    }

    py::tuple forward_fixed(const py::array_t<double>& image) const {
        const Q20Forward out = forward_q20(model, tensor_from_array(image));
        return py::make_tuple(
            py::array_t<double>(static_cast<py::ssize_t>(out.probs.size()), out.probs.data()),
            out.saturations);
    }
};

}  // namespace

PYBIND11_MODULE(rodenet_core, m) {
    m.doc() = "ODENet / rODENet core: schedules, parameter accounting, inference "
              "(float and Q20 fixed point), training, and PS/PL offload simulation";

    // Q20 fixed-point scalar operations on doubles (round-trip through raw).
    m.def("q20_roundtrip", [](double x) { return q20_to_f64(q20_from_f64(x)); },
          "nearest representable Q20 value");
    m.def("q20_raw", [](double x) { return q20_from_f64(x).raw; });
    m.def("q20_mul", [](double a, double b) {
        return q20_to_f64(q20_mul(q20_from_f64(a), q20_from_f64(b)));
    });
    m.def("q20_div", [](double a, double b) {
        return q20_to_f64(q20_div(q20_from_f64(a), q20_from_f64(b)));
    });
    m.def("q20_sqrt", [](double a) { return q20_to_f64(q20_sqrt(q20_from_f64(a))); });

    m.def("build_schedule", [](const std::string& arch, int n) {
        return schedule_to_dict(build_schedule(arch_from_name(arch), n));
    }, py::arg("arch"), py::arg("n"));

    m.def("param_size_layer", [](const std::string& layer, const std::string& arch, int n) {
        return param_size_layer(layer_from_name(layer), arch_from_name(arch), n);
    }, py::arg("layer"), py::arg("arch"), py::arg("n"), "parameter bytes of one block instance");
    m.def("param_size_total", [](const std::string& arch, int n) {
        return param_size_total(arch_from_name(arch), n);
    }, py::arg("arch"), py::arg("n"));
    m.def("reduction_vs_resnet", [](const std::string& arch, int n) {
        return reduction_vs_resnet(arch_from_name(arch), n);
    }, py::arg("arch"), py::arg("n"), "percent parameter reduction against same-N ResNet");

    m.def("fit_cycle_model", [](const std::vector<std::pair<double, double>>& points) {
        const CycleFit fit = fit_cycle_model(points);
        py::dict out;
        out["a"] = fit.model.a;
        out["b"] = fit.model.b;
        out["max_rel_residual"] = fit.max_rel_residual;
        return out;
    }, py::arg("points"), "least-squares fit of cycles = A/n + B");
    m.def("predict_cycles", [](double a, double b, double n) {
        return predict_cycles(LayerCycleModel{a, b}, n);
    }, py::arg("a"), py::arg("b"), py::arg("n"));

    m.def("simulate_offload",
          [](const std::string& cost_config_path, const std::string& arch, int n,
             const std::vector<std::string>& offload, int parallelism) {
              OffloadSpec spec;
              spec.arch = arch_from_name(arch);
              spec.n = n;
              for (const auto& l : offload) spec.offload.push_back(layer_from_name(l));
              spec.parallelism = parallelism;
              return report_to_dict(simulate_offload(spec, load_cost_config(cost_config_path)));
          },
          py::arg("cost_config_path"), py::arg("arch"), py::arg("n"), py::arg("offload"),
          py::arg("parallelism") = 16);

    m.def("bram_lower_bound", [](const std::string& layer, const std::string& arch, int n) {
        return bram_lower_bound(layer_from_name(layer), arch_from_name(arch), n);
    }, py::arg("layer"), py::arg("arch"), py::arg("n"));

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("arch", [](const PyModel& s) {
            return std::string(arch_name(s.model.cfg.arch));
        })
        .def_property_readonly("n", [](const PyModel& s) { return s.model.cfg.n; })
        .def_property_readonly("num_classes",
                               [](const PyModel& s) { return s.model.cfg.num_classes; })
        .def_property_readonly("param_count",
                               [](const PyModel& s) { return s.model.learnable_param_count(); })
        .def("forward", &PyModel::forward_float, py::arg("image"),
             "float64 forward pass over a (C, H, W) image; returns class probabilities")
        .def("forward_q20", &PyModel::forward_fixed, py::arg("image"),
             "Q20 fixed-point trunk forward; returns (probabilities, saturation count)")
        .def("save", [](const PyModel& s, const std::string& path) {
            save_checkpoint(path, s.model);
        });

    m.def("build_model", [](const std::string& config_json, unsigned seed) {
        return PyModel{build_network(parse_network_config(config_json), seed)};
    }, py::arg("config_json"), py::arg("seed") = 0);

    m.def("load_checkpoint", [](const std::string& path) {
        return PyModel{load_checkpoint(path)};
    }, py::arg("path"));

    m.def("train_synthetic",
          [](const std::string& config_json, int epochs, int per_class, double noise,
             unsigned seed) {
              const NetworkConfig ncfg = parse_network_config(config_json);
              SyntheticSpec spec;
              spec.num_classes = ncfg.num_classes;
              spec.height = ncfg.input_hw;
              spec.width = ncfg.input_hw;
              spec.per_class = per_class;
              spec.noise = noise;
              spec.seed = seed;
              const Dataset ds = make_synthetic(spec);
              TrainConfig tcfg;
              tcfg.epochs = epochs;
              tcfg.batch_size = 16;
              tcfg.seed = seed;
              PyModel out{build_network(ncfg, seed)};
              const TrainResult res = train(out.model, ds, nullptr, tcfg);
              py::dict metrics;
              metrics["train_loss"] = res.metrics.back().train_loss;
              metrics["train_acc"] = res.metrics.back().train_acc;
              return py::make_tuple(std::move(out), metrics);
          },
          py::arg("config_json"), py::arg("epochs") = 20, py::arg("per_class") = 8,
          py::arg("noise") = 0.25, py::arg("seed") = 1,
          "train on the built-in deterministic synthetic dataset; for smoke tests");
}
