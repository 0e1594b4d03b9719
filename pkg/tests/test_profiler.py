import dataclasses

import pytest

from sepnext.models import MODEL_CONFIGS, build
from sepnext.profiler import (
    bench_throughput,
    count_macs,
    count_params,
    measured_macs,
    report_lines,
)


def _small_cnn():
    cfg = dataclasses.replace(
        MODEL_CONFIGS["cnn6"],
        channels=(8, 16),
        pool_after=(0,),
        n_mels=16,
        frames=32,
    )
    return build(cfg)


def _small_cnx():
    cfg = dataclasses.replace(
        MODEL_CONFIGS["convnext-tiny"],
        depths=(1, 1),
        dims=(8, 16),
        n_mels=32,
        frames=32,
        pad_multiple=8,
    )
    return build(cfg)


@pytest.mark.parametrize("make", [_small_cnn, _small_cnx])
def test_measured_macs_match_static_profile(make):
    # the instrumented forward pass must agree exactly with the closed-form
    # profile; any drift means the profile and the network disagree
    model = make()
    assert measured_macs(model) == count_macs(model)


def test_measured_macs_scale_with_frames():
    model = _small_cnn()
    assert measured_macs(model, frames=64) == count_macs(model, frames=64)
    assert count_macs(model, frames=64) > count_macs(model, frames=32)


@pytest.mark.parametrize("name", ["cnn6next", "cnn14sep"])
def test_measured_macs_full_models(name):
    # short input keeps the forward pass cheap; profile must still match
    model = build(MODEL_CONFIGS[name])
    assert measured_macs(model, frames=64) == count_macs(model, frames=64)


def test_count_params_matches_model():
    model = _small_cnn()
    assert count_params(model) == model.param_count()


def test_report_lines_keys():
    model = _small_cnn()
    lines = report_lines(model)
    keys = {l.split("=", 1)[0] for l in lines}
    for want in (
        "model",
        "input_frames",
        "input_mels",
        "num_classes",
        "params",
        "params_millions",
        "macs",
        "macs_giga",
        "mult_adds",
        "mult_adds_giga",
        "note",
    ):
        assert want in keys
    vals = dict(l.split("=", 1) for l in lines)
    assert int(vals["mult_adds"]) == 2 * int(vals["macs"])
    assert vals["model"] == "cnn6"
    assert "frontend is excluded" in vals["note"]
    # per-component breakdown rows are present and sum to the total
    comp = [int(v) for k, v in vals.items() if k.startswith("macs.")]
    assert sum(comp) == int(vals["macs"])


def test_bench_throughput_smoke():
    model = _small_cnn()
    out = bench_throughput(model, batch=2, repeats=2)
    assert out["clips_per_sec"] > 0
    assert out["batch_seconds"] > 0
