"""Radio map reconstruction from sparse samples.

Thin convenience layer over the compiled core: configuration structs travel as
plain dicts here and as JSON strings across the boundary.
"""

import json

from . import _core
from ._core import (
    SceneGrid,
    SamplingPlan,
    ModelConfig,
    ModelInput,
    RadioDUN,
    Dataset,
    Example,
    distance_map,
    obstruction_count,
    synth_radio_map,
    synth_radio_map_raw,
    fit_phys,
    build_plan,
    sample,
    adjoint,
    ao_solve,
    mse,
    rmse,
    ssim,
    psnr,
    dec_percent,
    shadowing_loss,
    total_loss,
)

__all__ = [
    "SceneGrid",
    "SamplingPlan",
    "ModelConfig",
    "ModelInput",
    "RadioDUN",
    "Dataset",
    "Example",
    "distance_map",
    "obstruction_count",
    "synth_radio_map",
    "synth_radio_map_raw",
    "fit_phys",
    "build_plan",
    "sample",
    "adjoint",
    "ao_solve",
    "mse",
    "rmse",
    "ssim",
    "psnr",
    "dec_percent",
    "shadowing_loss",
    "total_loss",
    "build_dataset",
    "make_input",
    "train",
    "evaluate",
    "baseline_evaluate",
    "transfer",
]


def build_dataset(spec):
    """spec: dict mirroring the CLI's "data" config section."""
    return _core.build_dataset(json.dumps(spec))


def make_input(example, spec, salt=0):
    return _core.make_input(example, json.dumps(spec), salt)


def train(run, data):
    """run/data: dicts mirroring the CLI's "run"/"data" config sections."""
    return _core.train(json.dumps(run), json.dumps(data))


def evaluate(checkpoint, data, split="test", method="radiodun", panels=False,
             panel_count=4, out_dir="out"):
    report = _core.evaluate(checkpoint, json.dumps(data), split, method, panels,
                            panel_count, out_dir)
    return json.loads(report)


def baseline_evaluate(data, split="test", out_dir="out"):
    return json.loads(_core.baseline_evaluate(json.dumps(data), split, out_dir))


def transfer(run, target):
    out = _core.transfer(json.dumps(run), json.dumps(target))
    out["zero_shot"] = json.loads(out["zero_shot"])
    out["report"] = json.loads(out["report"])
    return out
