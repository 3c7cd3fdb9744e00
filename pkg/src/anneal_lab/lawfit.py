"""Loss-law variants, robust fitting and loss-curve prediction.

Four law variants are supported::

    token_law                 L = lambda_N N^-alpha_N + lambda_D D^-alpha_D + sigma
    step_law                  L = lambda_N N^-alpha_N + lambda_T T^-alpha_T + sigma
    forward_momentum_reduced  L = lambda_S S^-alpha_S + lambda_M M + L0
    forward_momentum_full     L = lambda_S S^-alpha_S + lambda_N N^-alpha_N + lambda_M M + L0

``S`` is the cumulative learning rate, ``M`` the annealing momentum, ``N`` the
model size, ``D`` the tokens seen and ``T`` the number of completed steps.
For the baselines the model-size term is folded into ``sigma`` when the data
holds a single model size.

Fitting minimises the mean Huber loss of raw residuals with L-BFGS-B from a
fixed 3x3x3 multistart grid; see :class:`ForwardMomentumRegressor`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .curve import CurveError, LossCurve
from .schedule import ScheduleSpec, lr_series
from .terms import MomentumConfig, compensated_cumsum, momentum_from_lr

VARIANTS = ("token_law", "step_law", "forward_momentum_reduced", "forward_momentum_full")
FM_VARIANTS = ("forward_momentum_reduced", "forward_momentum_full")

# per-variant names for (scale, exponent, momentum, floor, size scale, size exponent)
_NAMES = {
    "token_law": ("lambda_D", "alpha_D", None, "sigma"),
    "step_law": ("lambda_T", "alpha_T", None, "sigma"),
    "forward_momentum_reduced": ("lambda_S", "alpha_S", "lambda_M", "L0"),
    "forward_momentum_full": ("lambda_S", "alpha_S", "lambda_M", "L0"),
}

EXPONENT_BOUNDS = (1e-6, 2.0)
LOG_SCALE_BOUNDS = (-40.0, 40.0)
LOG_FLOOR_BOUNDS = (math.log(1e-12), 10.0)


class FitDataError(ValueError):
    pass


@dataclass(frozen=True)
class LawCoefficients:
    variant: str
    lambda_S: float | None = None
    alpha_S: float | None = None
    lambda_N: float | None = None
    alpha_N: float | None = None
    lambda_M: float | None = None
    L0: float | None = None
    lambda_D: float | None = None
    alpha_D: float | None = None
    lambda_T: float | None = None
    alpha_T: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown law variant {self.variant!r}; expected one of {VARIANTS}")
        scale, expo, mom, floor = _NAMES[self.variant]
        for name in (scale, expo, floor):
            if getattr(self, name) is None:
                raise ValueError(f"{self.variant} needs {name}")
        if self.variant in FM_VARIANTS and self.lambda_M is None:
            object.__setattr__(self, "lambda_M", 0.0)
        if not getattr(self, scale) > 0:
            raise ValueError(f"{scale} must be > 0")
        if not 0 < getattr(self, expo) <= 2:
            raise ValueError(f"{expo} must lie in (0, 2]")
        if not getattr(self, floor) >= 0:
            raise ValueError(f"{floor} must be >= 0")
        if self.variant == "forward_momentum_full" and self.lambda_N is None:
            raise ValueError("forward_momentum_full needs lambda_N and alpha_N")
        if self.lambda_N is not None:
            if self.alpha_N is None:
                raise ValueError("lambda_N given without alpha_N")
            if not self.lambda_N > 0:
                raise ValueError("lambda_N must be > 0")
            if not 0 < self.alpha_N <= 2:
                raise ValueError("alpha_N must lie in (0, 2]")

    @property
    def has_size_term(self) -> bool:
        return self.lambda_N is not None

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LawCoefficients":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown coefficient field(s): {', '.join(unknown)}")
        return cls(**data)


def evaluate_law(coeffs: LawCoefficients, S, N=None, M=None):
    """Predicted loss.

    ``S`` is the progress variable of the variant: cumulative learning rate
    for the forward-momentum laws, tokens ``D`` for ``token_law`` and
    completed steps ``T`` for ``step_law``.  ``M`` defaults to 0.
    """
    S_arr = np.asarray(S, dtype=np.float64)
    if np.any(~(S_arr > 0)):
        raise ValueError("progress variable S (or D / T) must be > 0")
    scale, expo, mom, floor = _NAMES[coeffs.variant]
    out = getattr(coeffs, scale) * S_arr ** -getattr(coeffs, expo) + getattr(coeffs, floor)
    if mom is not None and M is not None:
        out = out + coeffs.lambda_M * np.asarray(M, dtype=np.float64)
    if coeffs.has_size_term:
        if N is None:
            raise ValueError(f"{coeffs.variant} with a model-size term needs N")
        N_arr = np.asarray(N, dtype=np.float64)
        if np.any(~(N_arr > 0)):
            raise ValueError("model size N must be > 0")
        out = out + coeffs.lambda_N * N_arr ** -coeffs.alpha_N
    if np.ndim(out) == 0:
        return float(out)
    return out


def huber(residuals, delta: float) -> np.ndarray:
    r = np.abs(np.asarray(residuals, dtype=np.float64))
    return np.where(r <= delta, 0.5 * r**2, delta * (r - 0.5 * delta))


def mape(predicted, observed) -> float:
    """Mean absolute percentage error, in percent."""
    p = np.asarray(predicted, dtype=np.float64)
    o = np.asarray(observed, dtype=np.float64)
    if p.shape != o.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {o.shape}")
    if o.size == 0:
        raise ValueError("mape of empty series")
    if np.any(o == 0):
        raise ValueError("observed series contains zeros")
    return float(100.0 * np.mean(np.abs(p - o) / np.abs(o)))


def moving_average(values, window: int = 50) -> np.ndarray:
    """Trailing moving average; the first ``window-1`` entries average the available prefix."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    y = np.asarray(values, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot smooth an empty series")
    if window == 1:
        return y.copy()
    n = y.size
    out = np.empty(n)
    head = min(window - 1, n)
    out[:head] = np.cumsum(y[:head]) / np.arange(1, head + 1)
    if n >= window:
        out[window - 1 :] = np.lib.stride_tricks.sliding_window_view(y, window).mean(axis=1)
    return out


def smooth_curve(curve: LossCurve, window: int = 50) -> LossCurve:
    """Trailing moving average of the losses; step indices are unchanged."""
    if len(curve) == 0:
        raise CurveError("cannot smooth an empty curve")
    return curve.with_losses(moving_average(curve.losses, window))


# ---------------------------------------------------------------------------
# features


def _model_size_term(variant: str, sizes: np.ndarray, model_size_term) -> bool:
    distinct = np.unique(sizes).size
    if variant == "forward_momentum_reduced":
        return False
    if variant == "forward_momentum_full":
        if distinct < 2:
            raise FitDataError(
                "forward_momentum_full needs >= 2 distinct model sizes; "
                "use forward_momentum_reduced to fold the size term into L0"
            )
        return True
    if model_size_term == "auto":
        return distinct >= 2
    if model_size_term and distinct < 2:
        raise FitDataError("model-size term requested but data holds a single model size")
    return bool(model_size_term)


def curve_features(
    curve: LossCurve,
    variant: str,
    momentum: MomentumConfig | None = None,
    warmup_exclusion: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature rows ``(progress, momentum, model_size)``, targets and steps of a curve.

    Steps inside the warmup phase are dropped when ``warmup_exclusion``;
    steps with zero cumulative learning rate are always dropped.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown law variant {variant!r}")
    steps = curve.steps
    y = curve.losses
    spec = curve.meta.schedule
    keep = np.ones(len(steps), dtype=bool)
    if spec is not None:
        if steps.size and (steps[0] < 0 or steps[-1] >= spec.t_total):
            raise FitDataError(
                f"curve {curve.label!r} has steps outside its schedule range [0, {spec.t_total})"
            )
        if warmup_exclusion:
            keep &= steps >= spec.t_warmup
    elif variant in FM_VARIANTS:
        raise FitDataError(f"curve {curve.label!r} has no schedule; {variant} needs one")

    if variant in FM_VARIANTS:
        lr = lr_series(spec)
        S = compensated_cumsum(lr)[steps]
        M = momentum_from_lr(lr, momentum or MomentumConfig())[steps]
        keep &= S > 0
        progress = S
    elif variant == "step_law":
        progress = (steps + 1).astype(np.float64)
        M = np.zeros(len(steps))
    else:
        progress = ((steps + 1) * curve.meta.tokens_per_step).astype(np.float64)
        M = np.zeros(len(steps))
    keep &= progress > 0
    N = np.full(len(steps), float(curve.meta.model_size))
    X = np.column_stack([progress, M, N])[keep]
    return X, y[keep], steps[keep]


def curves_to_xy(curves: Sequence[LossCurve], variant: str, momentum=None, warmup_exclusion=True):
    Xs, ys, groups = [], [], []
    for i, c in enumerate(curves):
        X, y, _ = curve_features(c, variant, momentum, warmup_exclusion)
        Xs.append(X)
        ys.append(y)
        groups.append(np.full(len(y), i))
    if not Xs:
        raise FitDataError("no curves given")
    return np.vstack(Xs), np.concatenate(ys), np.concatenate(groups)


# ---------------------------------------------------------------------------
# estimator


class ForwardMomentumRegressor(RegressorMixin, BaseEstimator):
    """Robust nonlinear regression of a loss law on ``(progress, momentum, model_size)`` rows.

    Positive scales and the loss floor are optimised in log space, exponents
    are boxed to ``(0, 2]`` and the momentum coefficient is free.  Features
    are rescaled to order one internally and the coefficients mapped back
    afterwards.  Gradients come from central differences with step
    ``fd_step * max(1, |theta_i|)``.  Every start of the 3x3x3 grid over
    (scale, exponent, floor) runs to completion; the lowest final objective
    wins and ties go to the earliest start.

    Rows are sorted before fitting, so the result does not depend on their
    order.
    """

    def __init__(
        self,
        variant: str = "forward_momentum_reduced",
        huber_delta: float = 1e-3,
        max_iter: int = 1000,
        model_size_term="auto",
        fd_step: float = 1e-6,
    ):
        self.variant = variant
        self.huber_delta = huber_delta
        self.max_iter = max_iter
        self.model_size_term = model_size_term
        self.fd_step = fd_step

    # -- parameter layout -------------------------------------------------

    def _layout(self) -> list[str]:
        names = ["log_scale", "exponent"]
        if self.variant in FM_VARIANTS:
            names.append("momentum")
        names.append("log_floor")
        if self.size_term_:
            names += ["log_size_scale", "size_exponent"]
        return names

    def _bounds(self, layout):
        table = {
            "log_scale": LOG_SCALE_BOUNDS,
            "exponent": EXPONENT_BOUNDS,
            "momentum": (None, None),
            "log_floor": LOG_FLOOR_BOUNDS,
            "log_size_scale": LOG_SCALE_BOUNDS,
            "size_exponent": EXPONENT_BOUNDS,
        }
        return [table[n] for n in layout]

    def _components(self, theta, log_p, m, log_n):
        """Additive pieces of the scaled prediction, keyed by the parameter they depend on."""
        it = iter(theta)
        log_scale = next(it)
        expo = next(it)
        parts = {"power": np.exp(log_scale - expo * log_p)}
        if self.variant in FM_VARIANTS:
            parts["momentum"] = next(it) * m
        parts["floor"] = math.exp(next(it))
        if self.size_term_:
            log_size_scale = next(it)
            parts["size"] = np.exp(log_size_scale - next(it) * log_n)
        return parts

    def _scaled_predict(self, theta, log_p, m, log_n):
        return sum(self._components(theta, log_p, m, log_n).values())

    def _huber_mean(self, pred, y):
        a = np.abs(pred - y)
        c = np.minimum(a, self.huber_delta)
        # huber = c * (|r| - c/2); divided by delta^2 for better L-BFGS-B scaling
        return float(np.dot(c, a - 0.5 * c)) / (a.size * self.huber_delta**2)

    def _objective(self, theta, log_p, m, log_n, y):
        return self._huber_mean(self._scaled_predict(theta, log_p, m, log_n), y)

    def _gradient(self, theta, log_p, m, log_n, y):
        """Central differences; shifted predictions are rebuilt from cached components."""
        parts = self._components(theta, log_p, m, log_n)
        pred = sum(parts.values())
        layout = self._layout()
        g = np.empty_like(theta)
        for i, name in enumerate(layout):
            h = self.fd_step * max(1.0, abs(theta[i]))
            if name == "log_scale":
                shifts = [parts["power"] * math.expm1(s) for s in (h, -h)]
            elif name == "exponent":
                shifts = [parts["power"] * np.expm1(-s * log_p) for s in (h, -h)]
            elif name == "momentum":
                shifts = [s * m for s in (h, -h)]
            elif name == "log_floor":
                shifts = [parts["floor"] * math.expm1(s) for s in (h, -h)]
            elif name == "log_size_scale":
                shifts = [parts["size"] * math.expm1(s) for s in (h, -h)]
            else:
                shifts = [parts["size"] * np.expm1(-s * log_n) for s in (h, -h)]
            up = self._huber_mean(pred + shifts[0], y)
            dn = self._huber_mean(pred + shifts[1], y)
            g[i] = (up - dn) / (2 * h)
        return g

    def _starts(self, y):
        y_min = float(np.min(y))
        y_mean = float(np.mean(y))
        spread = max(y_mean - 0.9 * y_min, 1e-12)
        for floor_frac, expo, mult in product((0.3, 0.6, 0.9), (0.2, 0.5, 1.0), (0.5, 1.0, 2.0)):
            floor = floor_frac * y_min
            theta = [math.log(max((y_mean - floor) * mult, 1e-12)), expo]
            if self.variant in FM_VARIANTS:
                theta.append(0.0)
            theta.append(math.log(floor))
            if self.size_term_:
                theta += [math.log(0.1 * spread), 0.3]
            yield np.array(theta, dtype=np.float64)

    # -- public API --------------------------------------------------------

    def fit(self, X, y):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown law variant {self.variant!r}")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        X, y = check_X_y(X, y, dtype=np.float64)
        if X.shape[1] != 3:
            raise ValueError(f"expected 3 feature columns (progress, momentum, model_size), got {X.shape[1]}")
        if np.any(X[:, 0] <= 0):
            raise FitDataError("progress column must be > 0")
        if np.any(X[:, 2] <= 0):
            raise FitDataError("model_size column must be > 0")
        if np.any(y <= 0):
            raise FitDataError("losses must be > 0")

        order = np.lexsort((y, X[:, 2], X[:, 1], X[:, 0]))
        X, y = X[order], y[order]
        self.size_term_ = _model_size_term(self.variant, X[:, 2], self.model_size_term)

        p_ref = float(np.median(X[:, 0]))
        m_max = float(np.max(np.abs(X[:, 1])))
        m_ref = m_max if m_max > 0 else 1.0
        n_ref = float(np.exp(np.mean(np.log(X[:, 2]))))
        args = (np.log(X[:, 0] / p_ref), X[:, 1] / m_ref, np.log(X[:, 2] / n_ref), y)

        layout = self._layout()
        bounds = self._bounds(layout)
        best = None
        n_starts = 0
        for k, theta0 in enumerate(self._starts(y)):
            n_starts += 1
            trace = [self._objective(theta0, *args)]
            res = minimize(
                self._objective,
                theta0,
                args=args,
                jac=self._gradient,
                method="L-BFGS-B",
                bounds=bounds,
                callback=lambda xk: trace.append(self._objective(xk, *args)),
                options={"maxiter": self.max_iter, "ftol": 1e-13, "gtol": 1e-7, "maxcor": 20},
            )
            if not np.isfinite(res.fun):
                continue
            if best is None or res.fun < best[1].fun:
                best = (k, res, trace)
        if best is None:
            raise FitDataError("every multistart run produced a non-finite objective")

        k, res, trace = best
        theta = res.x
        grad = self._gradient(theta, *args)
        self.theta_ = theta
        self.layout_ = layout
        self.best_start_ = k
        self.n_starts_ = n_starts
        self.n_iter_ = int(res.nit)
        self.converged_ = bool(res.success)
        self.message_ = str(res.message)
        self.objective_ = float(np.mean(huber(self._scaled_predict(theta, *args[:3]) - y, self.huber_delta)))
        self.objective_trace_ = [v * self.huber_delta**2 for v in trace]
        # reported for the unscaled mean-Huber objective
        self.grad_norm_ = float(np.linalg.norm(_project_gradient(theta, grad, bounds))) * self.huber_delta**2
        self.coef_ = self._unscale(theta, p_ref, m_ref, n_ref)
        self.n_features_in_ = 3
        return self

    def _unscale(self, theta, p_ref, m_ref, n_ref) -> LawCoefficients:
        vals = dict(zip(self._layout(), theta.tolist()))
        scale_name, expo_name, mom_name, floor_name = _NAMES[self.variant]
        expo = vals["exponent"]
        kw = {
            scale_name: math.exp(vals["log_scale"]) * p_ref**expo,
            expo_name: expo,
            floor_name: math.exp(vals["log_floor"]),
        }
        if mom_name is not None:
            kw[mom_name] = vals["momentum"] / m_ref
        if self.size_term_:
            b = vals["size_exponent"]
            kw["lambda_N"] = math.exp(vals["log_size_scale"]) * n_ref**b
            kw["alpha_N"] = b
        return LawCoefficients(variant=self.variant, **kw)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 3:
            raise ValueError(f"expected 3 feature columns, got {X.shape[1]}")
        return evaluate_law(self.coef_, X[:, 0], X[:, 2], X[:, 1])


def _project_gradient(theta, grad, bounds):
    g = grad.copy()
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and theta[i] <= lo and g[i] > 0:
            g[i] = 0.0
        if hi is not None and theta[i] >= hi and g[i] < 0:
            g[i] = 0.0
    return g


# ---------------------------------------------------------------------------
# curve-level fitting


@dataclass(frozen=True)
class FitConfig:
    huber_delta: float = 1e-3
    max_iter: int = 1000
    warmup_exclusion: bool = True
    momentum: MomentumConfig = field(default_factory=MomentumConfig)
    model_size_term: Any = "auto"
    fd_step: float = 1e-6
    smoothing_window: int | None = None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["momentum"] = self.momentum.to_dict()
        d["multistart_grid"] = {
            "floor_fraction_of_min_loss": [0.3, 0.6, 0.9],
            "exponent": [0.2, 0.5, 1.0],
            "scale_multiplier": [0.5, 1.0, 2.0],
            "lambda_M": 0.0,
        }
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FitConfig":
        data = {k: v for k, v in data.items() if k not in ("multistart_grid", "variant")}
        if "momentum" in data:
            data["momentum"] = MomentumConfig.from_dict(data["momentum"])
        return cls(**data)


@dataclass(frozen=True)
class CurveFit:
    label: str
    mape_percent: float
    n_points: int


@dataclass(frozen=True)
class FitReport:
    coefficients: LawCoefficients
    curves: tuple[CurveFit, ...]
    mean_mape_percent: float
    residual_stats: dict[str, float]
    optimizer_trace: dict[str, Any]
    config: FitConfig

    @property
    def converged(self) -> bool:
        return bool(self.optimizer_trace["converged"])

    @property
    def momentum(self) -> MomentumConfig:
        return self.config.momentum

    def to_dict(self) -> dict[str, Any]:
        cfg = self.config.to_dict()
        cfg["variant"] = self.coefficients.variant
        return {
            "coefficients": self.coefficients.to_dict(),
            "curves": [asdict(c) for c in self.curves],
            "mean_mape_percent": self.mean_mape_percent,
            "residual_stats": dict(self.residual_stats),
            "optimizer_trace": dict(self.optimizer_trace),
            "config": cfg,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FitReport":
        return cls(
            coefficients=LawCoefficients.from_dict(data["coefficients"]),
            curves=tuple(CurveFit(**c) for c in data["curves"]),
            mean_mape_percent=float(data["mean_mape_percent"]),
            residual_stats=dict(data["residual_stats"]),
            optimizer_trace=dict(data["optimizer_trace"]),
            config=FitConfig.from_dict(data["config"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        return cls.from_dict(json.loads(text))


def fit(
    curves: Sequence[LossCurve],
    variant: str = "forward_momentum_reduced",
    config: FitConfig | None = None,
) -> FitReport:
    """Fit one law variant jointly to a set of loss curves.

    Optimiser non-convergence is reported through ``converged=False`` in the
    optimizer trace rather than raised.
    """
    config = config or FitConfig()
    curves = list(curves)
    if not curves:
        raise FitDataError("fit needs at least one curve")
    if config.smoothing_window:
        curves = [smooth_curve(c, config.smoothing_window) for c in curves]
    X, y, groups = curves_to_xy(curves, variant, config.momentum, config.warmup_exclusion)
    if y.size == 0:
        raise FitDataError("no points left to fit after warmup exclusion")
    if not np.all(np.isfinite(y)):
        raise FitDataError("non-finite loss values")

    est = ForwardMomentumRegressor(
        variant=variant,
        huber_delta=config.huber_delta,
        max_iter=config.max_iter,
        model_size_term=config.model_size_term,
        fd_step=config.fd_step,
    ).fit(X, y)

    pred = est.predict(X)
    resid = pred - y
    per_curve = []
    for i, c in enumerate(curves):
        mask = groups == i
        if not mask.any():
            raise FitDataError(f"curve {c.label!r} has no points after warmup exclusion")
        per_curve.append(CurveFit(label=c.label or f"curve{i}", mape_percent=mape(pred[mask], y[mask]), n_points=int(mask.sum())))
    trace = est.objective_trace_
    return FitReport(
        coefficients=est.coef_,
        curves=tuple(per_curve),
        mean_mape_percent=float(np.mean([c.mape_percent for c in per_curve])),
        residual_stats={
            "n_points": int(y.size),
            "mean": float(np.mean(resid)),
            "std": float(np.std(resid)),
            "rmse": float(np.sqrt(np.mean(resid**2))),
            "max_abs": float(np.max(np.abs(resid))),
        },
        optimizer_trace={
            "iterations": est.n_iter_,
            "max_iterations": config.max_iter,
            "converged": est.converged_,
            "message": est.message_,
            "final_objective": est.objective_,
            "gradient_norm": est.grad_norm_,
            "best_start": est.best_start_,
            "n_starts": est.n_starts_,
            "objective_history": [float(v) for v in trace],
        },
        config=config,
    )


def predict_curve(
    coeffs: LawCoefficients,
    spec: ScheduleSpec,
    N: float | None = None,
    momentum: MomentumConfig | None = None,
    steps: Sequence[int] | None = None,
    label: str = "predicted",
) -> LossCurve:
    """Loss predicted by a fitted forward-momentum law under schedule ``spec``.

    Defaults to every post-warmup step.
    """
    from .curve import CurveMeta

    if coeffs.variant not in FM_VARIANTS:
        raise ValueError(
            f"predict_curve needs a forward-momentum law; {coeffs.variant} is indexed by tokens/steps, not S and M"
        )
    if coeffs.has_size_term and N is None:
        raise ValueError("coefficients carry a model-size term; pass N")
    lr = lr_series(spec)
    S = compensated_cumsum(lr)
    M = momentum_from_lr(lr, momentum or MomentumConfig())
    if steps is None:
        idx = np.arange(max(spec.t_warmup, int(np.argmax(S > 0))), spec.t_total)
    else:
        idx = np.asarray(steps, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= spec.t_total):
            raise IndexError(f"prediction steps outside [0, {spec.t_total})")
    loss = evaluate_law(coeffs, S[idx], N, M[idx])
    meta = CurveMeta(model_size=float(N) if N is not None else 1.0, schedule=spec, max_lr=spec.eta_max, label=label)
    return LossCurve(idx, np.atleast_1d(loss), meta)
