import json
from pathlib import Path

import numpy as np
import pytest

from anneal_lab import cli
from anneal_lab.curve import CurveMeta, LossCurve
from anneal_lab.lawfit import LawCoefficients, predict_curve
from anneal_lab.schedule import build_cosine, build_wsd

FIXTURES = Path(__file__).parent / "fixtures"
TOY_CONFIG = FIXTURES / "toy_family.json"

# ground truth for generate-and-refit checks
TRUE_REDUCED = LawCoefficients(variant="forward_momentum_reduced", lambda_S=2.0, alpha_S=0.4, lambda_M=-0.05, L0=1.8)
TRUE_FULL = LawCoefficients(
    variant="forward_momentum_full", lambda_S=2.0, alpha_S=0.4, lambda_N=10.0, alpha_N=0.2, lambda_M=-0.05, L0=1.5
)


def synthetic_schedules():
    return [build_cosine(1e-3, 2000, 100), build_wsd(1e-3, 2000, 100, 0.2), build_wsd(1e-3, 2000, 100, 0.5)]


def law_curve(coeffs, spec, N=None, noise=0.0, seed=0, label=""):
    p = predict_curve(coeffs, spec, N)
    losses = p.losses
    if noise:
        losses = losses + np.random.default_rng(seed).normal(0.0, noise, losses.size)
    meta = CurveMeta(model_size=1.0 if N is None else N, schedule=spec, max_lr=spec.eta_max, seed=seed, label=label)
    return LossCurve(p.steps, losses, meta)


@pytest.fixture(scope="session")
def synthetic_family():
    return [law_curve(TRUE_REDUCED, s, label=f"law-{i}") for i, s in enumerate(synthetic_schedules())]


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy") / "sim"
    code = cli.main(["simulate", "--config", str(TOY_CONFIG), "--output", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="session")
def toy_report(toy_dir):
    report = toy_dir.parent / "fit_report.json"
    code = cli.main(["fit", "--manifest", str(toy_dir / "manifest.json"), "--output", str(report)])
    return report, code


@pytest.fixture(scope="session")
def toy_cosine_manifest(toy_dir):
    entries = json.loads((toy_dir / "manifest.json").read_text())
    path = toy_dir / "cosine_manifest.json"
    path.write_text(json.dumps([e for e in entries if e["schedule"]["kind"] == "cosine"]))
    return path
