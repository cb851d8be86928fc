"""Smoke tests for the rodenet_core extension module."""

import json
import math

import numpy as np
import pytest

import rodenet_core as rc


def test_q20_roundtrip_and_arithmetic():
    assert rc.q20_raw(1.5) == 1572864
    assert abs(rc.q20_roundtrip(0.1) - 0.1) <= 2.0 ** -21
    assert rc.q20_mul(1.5, 2.0) == 3.0
    assert rc.q20_sqrt(4.0) == 2.0
    assert abs(rc.q20_div(1.0, 3.0) - 1.0 / 3.0) < 1e-6
    with pytest.raises(Exception):
        rc.q20_div(1.0, 0.0)


def test_schedule_conservation():
    for arch in ["resnet", "odenet", "rodenet1", "rodenet2", "rodenet12", "rodenet3", "hybrid3"]:
        for n in [20, 32, 44, 56]:
            sched = rc.build_schedule(arch, n)
            assert sched["total_block_executions"] == (n - 2) // 2
    assert rc.build_schedule("rodenet3", 56)["layer3_2"] == (1, 24)


def test_parameter_accounting():
    assert rc.param_size_layer("layer1", "odenet", 20) == 19840
    assert rc.param_size_total("odenet", 20) == 702800
    assert abs(rc.reduction_vs_resnet("rodenet3", 20) - 43.29) < 0.05
    assert abs(rc.reduction_vs_resnet("odenet", 56) - 79.54) < 0.05


def test_cycle_model_fit():
    points = [(1, 23.78e6), (4, 6.07e6), (8, 3.12e6), (16, 1.64e6), (32, 0.90e6)]
    fit = rc.fit_cycle_model(points)
    assert abs(fit["a"] - 23.62e6) / 23.62e6 < 1e-3
    assert fit["max_rel_residual"] < 0.01
    for n, cycles in points:
        assert abs(rc.predict_cycles(fit["a"], fit["b"], n) - cycles) / cycles < 0.01


def test_simulate_offload(repo_root):
    report = rc.simulate_offload(
        str(repo_root / "configs" / "cost_model.json"), "rodenet3", 56, ["layer3_2"]
    )
    assert abs(report["target_w_pl"] - 0.40) <= 0.01
    assert abs(report["total_w_pl"] - 0.59) <= 0.01
    assert abs(report["overall_speedup"] - 2.66) <= 0.02
    assert report["per_layer"][0]["layer"] == "layer3_2"


def test_forward_and_q20(tmp_path):
    config = json.dumps(
        {
            "arch": "rodenet3",
            "n": 20,
            "num_classes": 5,
            "base_channels": 4,
            "input_hw": 8,
        }
    )
    model = rc.build_model(config, seed=7)
    rng = np.random.default_rng(0)
    image = rng.uniform(0.0, 1.0, size=(3, 8, 8))
    probs = model.forward(image)
    assert probs.shape == (5,)
    assert math.isclose(float(probs.sum()), 1.0, abs_tol=1e-9)

    q_probs, saturations = model.forward_q20(image)
    assert math.isclose(float(q_probs.sum()), 1.0, abs_tol=1e-9)
    assert saturations >= 0

    path = tmp_path / "model.rodn"
    model.save(str(path))
    loaded = rc.load_checkpoint(str(path))
    assert loaded.arch == "rodenet3"
    assert loaded.param_count == model.param_count
    # float32 storage wobbles the probabilities only slightly
    probs2 = loaded.forward(image)
    assert np.allclose(probs, probs2, atol=1e-4)


def test_train_synthetic_smoke():
    config = json.dumps(
        {
            "arch": "rodenet3",
            "n": 20,
            "num_classes": 3,
            "base_channels": 2,
            "input_hw": 8,
        }
    )
    model, metrics = rc.train_synthetic(config, epochs=8, per_class=4, seed=3)
    assert metrics["train_loss"] < math.log(3.0)  # below the uniform-guess loss
    assert 0.0 <= metrics["train_acc"] <= 1.0
