import json
import math

import numpy as np
import pytest

import dualscale as ds


def numbers(node):
    if isinstance(node, dict):
        return [x for k in sorted(node) for x in numbers(node[k])]
    if isinstance(node, list):
        return [x for v in node for x in numbers(v)]
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return [float(node)]
    return []


def tiny_config(tmp_epochs=1):
    cfg = json.loads(ds.default_config())
    cfg["seed"] = 3
    cfg["network"].update({"d_da": 4, "d_ls": 6, "d_agt": 6, "d_dec": 5, "d_comp": 6, "K_sel": 8, "M": 6})
    cfg["graph"]["extent"] = 24.0
    cfg["train"].update({"epochs": tmp_epochs, "batch_size": 2, "decay_start_epoch": 0})
    return json.dumps(cfg)


def test_synth_is_deterministic_and_normalizes():
    a = ds.synth_scenario("four-way", 7)
    assert a == ds.synth_scenario("four-way", 7)
    assert a != ds.synth_scenario("four-way", 8)
    n = ds.normalize(a)
    assert np.allclose(numbers(json.loads(ds.normalize(n))), numbers(json.loads(n)), atol=1e-9)


def test_graph_layers():
    s = ds.normalize(ds.synth_scenario("t-intersection", 2))
    da = ds.da_graph(s)
    assert da["positions"].shape[1] == 2
    assert len(da["edges"]) == da["positions"].shape[0]
    for i, row in enumerate(da["edges"]):
        for j in row:
            assert i in da["edges"][j]
    ls = ds.ls_graph(s)
    for i, row in enumerate(ls["suc"]):
        for j in row:
            assert i in ls["pre"][j]


def test_metrics_on_a_3_4_5_offset():
    gt = np.stack([np.arange(1, 31, dtype=float), np.zeros(30)], axis=1)
    pred = (gt + np.array([3.0, 4.0]))[None]
    assert ds.min_ade(pred, [1.0], gt) == 5.0
    assert ds.min_fde(pred, [1.0], gt) == 5.0
    two = np.stack([gt + [0.0, 1.0], gt + [0.0, 9.0]])
    assert ds.brier_min_fde(two, [0.5, 0.5], gt) == 1.25
    assert ds.miss_rate([0.5, 2.0, 2.5, 9.0]) == 0.5


def test_decoders():
    pts = np.array([[10.0 * i, 0.0] for i in range(10)])
    heat = [0.1, 0.9, 0.3, 0.8, 0.5, 0.7, 0.2, 0.6, 0.4, 0.05]
    nodes, radii = ds.nms_goals(heat, pts)
    assert nodes == [1, 3, 5, 7, 4, 8]
    assert all(r == 2.8 for r in radii)

    rng = np.random.default_rng(0)
    centres, objective = ds.weighted_kmeans(rng.uniform(-10, 10, (60, 2)), rng.uniform(0, 1, 60).tolist(), 4, 30, 1)
    assert centres.shape == (4, 2)
    assert all(b <= a + 1e-12 for a, b in zip(objective, objective[1:]))


def test_errors_carry_a_code():
    with pytest.raises(ds.DspError) as e:
        ds.normalize("{not json")
    assert e.value.code == "ParseError"


def test_train_predict_evaluate(tmp_path):
    scenes = [ds.synth_scenario("straight", s) for s in range(3)]
    ckpt = str(tmp_path / "model.bin")
    log = ds.train(tiny_config(), scenes, ckpt)
    assert len(log) == 1 and math.isfinite(log[0]["loss"])
    pred = json.loads(ds.predict(ckpt, scenes[0], "nms"))
    assert len(pred["trajectories"]) == 6
    report = json.loads(ds.evaluate(ckpt, scenes, "nn", "train"))
    assert [r["K"] for r in report["reports"]] == [1, 6]
    assert all(r["n_scenarios"] == 3 for r in report["reports"])
