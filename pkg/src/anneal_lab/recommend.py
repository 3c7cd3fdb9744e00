"""Annealing-ratio sweeps and the power-law meta laws for R_opt and B_opt.

The built-in presets are literature values for Dense and MoE models.  They
are labelled as such in every report and any user fit overrides them.

Read as published, the R_opt laws give values above 1 for ordinary inputs
(e.g. ``T = 100k`` evaluates to 11.1), so their output is read as a
percentage.  B_opt is read in tokens; :func:`tokens_to_sequences` converts.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np

from .lawfit import FM_VARIANTS, LawCoefficients, evaluate_law
from .schedule import ScheduleError, build_wsd, lr_series
from .terms import MomentumConfig, compensated_cumsum, momentum_from_lr

logger = logging.getLogger(__name__)

X_KINDS = ("max_lr", "total_steps", "loss")
Y_KINDS = ("r_opt_percent", "b_opt_tokens")


@dataclass(frozen=True)
class PowerLawFit:
    """``y = lambda_coef * x ** alpha_exp``."""

    lambda_coef: float
    alpha_exp: float
    x_kind: str
    y_kind: str
    fit_rms_loglog: float = 0.0
    provenance: str = "user fit"

    def __post_init__(self):
        if not self.lambda_coef > 0:
            raise ValueError(f"lambda_coef must be > 0, got {self.lambda_coef}")
        if not np.isfinite(self.alpha_exp):
            raise ValueError("alpha_exp must be finite")
        if self.x_kind not in X_KINDS:
            raise ValueError(f"x_kind must be one of {X_KINDS}")
        if self.y_kind not in Y_KINDS:
            raise ValueError(f"y_kind must be one of {Y_KINDS}")

    def __call__(self, x):
        return self.lambda_coef * np.asarray(x, dtype=np.float64) ** self.alpha_exp

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def fit_power_law(xs, ys, x_kind: str = "total_steps", y_kind: str = "r_opt_percent") -> PowerLawFit:
    """Least squares on ``(ln x, ln y)``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("x values must not all be equal")
    A = np.column_stack([np.ones_like(lx), lx])
    (intercept, slope), *_ = np.linalg.lstsq(A, ly, rcond=None)
    rms = float(np.sqrt(np.mean((intercept + slope * lx - ly) ** 2)))
    return PowerLawFit(float(np.exp(intercept)), float(slope), x_kind, y_kind, rms)


_LIT = "literature value, not a user fit"
PRESETS: dict[str, dict[str, Any]] = {
    "dense-v1": {
        "family": "dense",
        "laws": {
            "max_lr": PowerLawFit(5.996e3, 0.709, "max_lr", "r_opt_percent", provenance=f"dense-v1: {_LIT}"),
            "loss": PowerLawFit(2.711e7, -2.710, "loss", "b_opt_tokens", provenance=f"dense-v1: {_LIT}"),
        },
    },
    "moe-v1": {
        "family": "moe",
        "laws": {
            "max_lr": PowerLawFit(4.675e4, 1.056, "max_lr", "r_opt_percent", provenance=f"moe-v1: {_LIT}"),
            "loss": PowerLawFit(4.390e7, -3.430, "loss", "b_opt_tokens", provenance=f"moe-v1: {_LIT}"),
            "total_steps": PowerLawFit(
                5.987e5, -0.946, "total_steps", "r_opt_percent", provenance=f"moe1b-steps-v1: {_LIT}"
            ),
        },
    },
    "moe1b-steps-v1": {
        "family": "moe",
        "laws": {
            "total_steps": PowerLawFit(
                5.987e5, -0.946, "total_steps", "r_opt_percent", provenance=f"moe1b-steps-v1: {_LIT}"
            ),
        },
    },
}
PRESET_ALIASES = {"dense": "dense-v1", "moe": "moe-v1"}


def get_preset(name: str) -> tuple[str, dict[str, Any]]:
    key = PRESET_ALIASES.get(name, name)
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS) + sorted(PRESET_ALIASES)}")
    return key, PRESETS[key]


def _family_law(family: str, x_kind: str) -> PowerLawFit:
    _, preset = get_preset(family)
    try:
        return preset["laws"][x_kind]
    except KeyError:
        raise KeyError(f"preset {family!r} has no law over {x_kind}") from None


def _percent_to_ratio(percent: float) -> float:
    r = percent / 100.0
    if r > 1.0:
        warnings.warn(f"predicted annealing ratio {r:.4g} exceeds 1; clamped to 1.0", stacklevel=3)
        return 1.0
    return r


def predict_r_opt_from_lr(eta_max: float, family: str = "dense", fit: PowerLawFit | None = None) -> float:
    if not eta_max > 0:
        raise ValueError("eta_max must be > 0")
    law = fit or _family_law(family, "max_lr")
    return _percent_to_ratio(float(law(eta_max)))


def predict_r_opt_from_steps(T: int, fit: PowerLawFit | None = None) -> float:
    if T < 1:
        raise ValueError("T must be >= 1")
    law = fit or _family_law("moe1b-steps-v1", "total_steps")
    return _percent_to_ratio(float(law(T)))


def predict_b_opt(loss: float, family: str = "dense", fit: PowerLawFit | None = None) -> float:
    """Optimal batch size in tokens at training loss ``loss``."""
    if not loss > 0:
        raise ValueError("loss must be > 0")
    law = fit or _family_law(family, "loss")
    return float(law(loss))


def tokens_to_sequences(tokens: float, sequence_length: int) -> float:
    if sequence_length < 1:
        raise ValueError("sequence_length must be >= 1")
    return tokens / sequence_length


# ---------------------------------------------------------------------------
# sweeps


def default_ratio_grid(n: int = 20) -> np.ndarray:
    return np.logspace(-2, 0, n)


@dataclass(frozen=True)
class RecommendationReport:
    grid: tuple[tuple[float, float, float], ...]
    r_opt: float
    context: dict[str, Any]

    @property
    def ratios(self) -> np.ndarray:
        return np.array([g[0] for g in self.grid])

    @property
    def final_losses(self) -> np.ndarray:
        return np.array([g[1] for g in self.grid])

    @property
    def delta_losses(self) -> np.ndarray:
        return np.array([g[2] for g in self.grid])

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": [{"R": r, "final_loss": f, "delta_loss": d} for r, f, d in self.grid],
            "r_opt": self.r_opt,
            "context": self.context,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "final_loss", "delta_loss"])
        for r, f, d in self.grid:
            w.writerow([repr(r), repr(f), repr(d)])
        return buf.getvalue()


def final_terms(eta_max: float, T_total: int, ratio: float, momentum: MomentumConfig, t_warmup: int = 0):
    """``(S, M)`` at the last step of a linear-decay WSD run."""
    lr = lr_series(build_wsd(eta_max, T_total, t_warmup, ratio, 1.0))
    S = float(compensated_cumsum(lr)[-1])
    M = float(momentum_from_lr(lr, momentum)[-1])
    return S, M


def sweep_ratio(
    coeffs: LawCoefficients,
    T_total: int,
    eta_max: float,
    N: float | None = None,
    r_grid: Sequence[float] | None = None,
    momentum: MomentumConfig | None = None,
    t_warmup: int = 0,
) -> RecommendationReport:
    """Predicted final loss of linear-decay WSD runs over a grid of annealing ratios.

    Ratios that round to the same number of decay steps as an earlier grid
    point are dropped, so every retained point is a distinct schedule.  So are
    ratios whose decay phase would overlap the warmup.
    ``r_opt`` is the argmin; ties go to the smaller ratio.
    """
    if coeffs.variant not in FM_VARIANTS:
        raise ValueError(f"sweep_ratio needs a forward-momentum law, got {coeffs.variant}")
    momentum = momentum or MomentumConfig()
    grid = default_ratio_grid() if r_grid is None else np.asarray(r_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("r_grid needs at least 3 points")
    if np.any(grid <= 0) or np.any(grid > 1):
        raise ValueError("r_grid values must lie in (0, 1]")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("r_grid must be sorted strictly increasing")

    ratios, losses, seen = [], [], set()
    for r in grid.tolist():
        try:
            spec = build_wsd(eta_max, T_total, t_warmup, r, 1.0)
        except ScheduleError as exc:
            logger.warning("R=%g skipped: %s", r, exc)
            continue
        if spec.t_decay in seen:
            logger.warning("R=%g maps to an already-swept t_decay=%d; skipped", r, spec.t_decay)
            continue
        seen.add(spec.t_decay)
        S, M = final_terms(eta_max, T_total, r, momentum, t_warmup)
        ratios.append(r)
        losses.append(float(evaluate_law(coeffs, S, N, M)))
    if not losses:
        raise ValueError("no grid ratio yields a valid WSD schedule for these T_total and t_warmup")
    losses_arr = np.array(losses)
    k = int(np.argmin(losses_arr))
    delta = losses_arr - losses_arr[k]
    return RecommendationReport(
        grid=tuple(zip(ratios, losses, delta.tolist())),
        r_opt=ratios[k],
        context={
            "T_total": int(T_total),
            "eta_max": float(eta_max),
            "N": None if N is None else float(N),
            "t_warmup": int(t_warmup),
            "momentum": momentum.to_dict(),
            "coefficients": coeffs.to_dict(),
            "source": "fit",
        },
    )


def recommend_from_preset(preset: str, T: int, eta_max: float | None = None) -> dict[str, Any]:
    """R_opt from a literature preset.

    Uses the max-lr law when ``eta_max`` is given and the preset has one,
    otherwise the total-steps law.  All applicable predictions are listed.
    """
    key, entry = get_preset(preset)
    laws = entry["laws"]
    predictions = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if eta_max is not None and "max_lr" in laws:
            predictions.append(
                {"law": "max_lr", "x": float(eta_max), "r_opt": predict_r_opt_from_lr(eta_max, fit=laws["max_lr"]),
                 "coefficients": laws["max_lr"].to_dict()}
            )
        if "total_steps" in laws:
            predictions.append(
                {"law": "total_steps", "x": float(T), "r_opt": predict_r_opt_from_steps(T, fit=laws["total_steps"]),
                 "coefficients": laws["total_steps"].to_dict()}
            )
    if not predictions:
        raise ValueError(f"preset {key!r} needs --eta-max (it has no total-steps law)")
    chosen = predictions[0]
    return {
        "preset": key,
        "family": entry["family"],
        "provenance": chosen["coefficients"]["provenance"],
        "r_opt": chosen["r_opt"],
        "chosen_law": chosen["law"],
        "predictions": predictions,
        "warnings": [str(w.message) for w in caught],
        "context": {"T_total": int(T), "eta_max": None if eta_max is None else float(eta_max)},
    }
