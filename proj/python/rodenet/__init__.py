"""ODENet / rODENet: residual networks with an ODE-solver core.

Thin wrapper over the compiled extension; see ``rodenet_core`` for the full
surface (schedules, parameter accounting, forward passes, training, and the
PS/PL offload simulator).
"""

from rodenet_core import (  # noqa: F401
    Model,
    bram_lower_bound,
    build_model,
    build_schedule,
    fit_cycle_model,
    load_checkpoint,
    param_size_layer,
    param_size_total,
    predict_cycles,
    q20_div,
    q20_mul,
    q20_raw,
    q20_roundtrip,
    q20_sqrt,
    reduction_vs_resnet,
    simulate_offload,
    train_synthetic,
)

__all__ = [
    "Model",
    "bram_lower_bound",
    "build_model",
    "build_schedule",
    "fit_cycle_model",
    "load_checkpoint",
    "param_size_layer",
    "param_size_total",
    "predict_cycles",
    "q20_div",
    "q20_mul",
    "q20_raw",
    "q20_roundtrip",
    "q20_sqrt",
    "reduction_vs_resnet",
    "simulate_offload",
    "train_synthetic",
]
