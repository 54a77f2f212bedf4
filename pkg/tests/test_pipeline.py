"""Regression baseline for the default pipeline run.

The baseline in ``data/pipeline_baseline.json`` was frozen from a seed-0 run;
regenerate with ``TUBED_REGEN_BASELINE=1 pytest tests/test_pipeline.py``.
"""

import json
import math
import os
from pathlib import Path

import pytest

from tubed.errors import ConfigurationError
from tubed.io import dumps, read_json, sha256_file
from tubed.models import HyperbolicPlane, Sphere
from tubed.pipeline import PipelineConfig, normalized_model

BASELINE = Path(__file__).parent / "data" / "pipeline_baseline.json"


def extract(summary):
    return {
        "sample_count": summary["sample"]["count"],
        "net_size": summary["net"]["size"],
        "f1_min_far_separation": summary["f1"]["min_far_separation"],
        "f1_N2": summary["f1"]["N2"],
        "f2_per_ball_lower": summary["f2"]["per_ball_lower"],
        "f2_per_ball_upper": summary["f2"]["per_ball_upper"],
        "f2_colors": summary["f2"]["colors"],
        "eps": summary["combined"]["eps"],
        "derivative_bounds": summary["combined"]["derivative_bounds"],
        "reach_estimate": summary["reach"]["reach_estimate"],
        "reach_witness": summary["reach"]["witness"],
        "growth_exponent": summary["growth"]["exponent"],
        "lattice_n": summary["lattice"]["n"],
        "calibration_scale": summary["calibration"]["scale"],
    }


def test_regression_baseline(default_run):
    _, summary = default_run
    got = json.loads(dumps(extract(summary)))
    if os.environ.get("TUBED_REGEN_BASELINE"):
        BASELINE.write_text(dumps(got))
    assert got == read_json(BASELINE)


def test_summary_checks_and_hashes(default_run):
    out, summary = default_run
    assert all(summary["checks"].values()), summary["checks"]
    assert summary["schema"] == "v1"
    for name, digest in summary["artifacts"].items():
        assert sha256_file(out / name) == digest
    assert {"growth.svg", "embedding.svg", "distortion.svg"} <= {p.name for p in out.iterdir()}


def test_summary_sections(default_run):
    _, s = default_run
    assert s["f1"]["min_far_separation"] >= 1
    assert s["f1"]["normalization_error"] <= 1e-12
    assert 1 <= s["f1"]["psi_min"] and s["f1"]["psi_max"] <= s["f1"]["N2"]
    assert 0 < s["f2"]["lower"] <= s["f2"]["upper"] < math.inf
    assert s["reach"]["reach_estimate"] > 0 and s["reach"]["far_pair_collisions"] == 0
    assert s["combined"]["injectivity_collisions"] == 0
    for lam in ("1", "2", "4"):
        g = s["graphs"][lam]
        assert g["distance_comparison"]["max_violation"] <= 0 and g["degree_bound_ok"]


def test_config_validation():
    with pytest.raises(ConfigurationError) as exc:
        PipelineConfig.from_dict({"region_radius": 0})
    assert "region_radius" in str(exc.value)
    with pytest.raises(ConfigurationError):
        PipelineConfig.from_dict({"lambdas": [0.5]})
    assert PipelineConfig.from_dict({}).to_json() == PipelineConfig().to_json()


def test_normalization_bounds():
    for model, factor in ((HyperbolicPlane(1.0), 10.0), (Sphere(1.0), 10.0), (Sphere(50.0), 1.0)):
        M, scale = normalized_model(model)
        assert scale == pytest.approx(factor)
        lo, hi = M.curvature_bounds
        assert max(abs(lo), abs(hi)) <= 1 / 100 + 1e-12
        assert M.injectivity_radius >= 10 - 1e-9
