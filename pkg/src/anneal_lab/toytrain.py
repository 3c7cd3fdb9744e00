"""Scheduled SGD on seeded stochastic quadratics.

Produces genuine loss curves at desk scale: ``f(x) = 0.5 * x^T H x + f_star``
with a diagonal ``H`` whose spectrum is log-spaced in ``[1, condition_number]``.
The minimiser is the origin and ``x_1 = (1, ..., 1) / sqrt(dim)``, so the
initial distance ``D`` is 1.  Stochastic gradients are ``H x + noise_sigma * xi``.

Updates follow ``x_{t+1} = x_t - gamma * eta_t * g_t`` where ``eta_t`` is the
schedule normalised to a peak of 1.  The curve point at step ``t`` is the loss
after the update that used ``eta_t``.

Noise comes from a Philox generator keyed by the run seed and drawn in
row-major ``(step, coordinate)`` order, so a run is reproducible regardless
of which worker executes it.  Results assume IEEE-754 double precision with
round-to-nearest.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np

from .curve import CurveMeta, LossCurve
from .schedule import ScheduleSpec, lr_series

NOISE_CHUNK = 1024


class DivergenceError(RuntimeError):
    def __init__(self, step: int, label: str = ""):
        self.step = step
        self.label = label
        where = f" in run {label!r}" if label else ""
        super().__init__(f"SGD diverged{where}: non-finite iterate at step {step}")


@dataclass(frozen=True, eq=False)
class ConvexProblem:
    dim: int
    curvature: np.ndarray
    noise_sigma: float
    x_init: np.ndarray
    D: float
    G: float
    seed: int
    f_star: float = 0.0

    @property
    def x_star(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def lambda_max(self) -> float:
        return float(self.curvature.max())

    def value(self, x: np.ndarray) -> float:
        return 0.5 * float(np.dot(self.curvature * x, x)) + self.f_star

    def gradient(self, x: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        g = self.curvature * x
        if noise is not None:
            g = g + self.noise_sigma * noise
        return g

    def stability_limit(self) -> float:
        """Largest base lr for which noiseless SGD at peak schedule does not blow up."""
        return 2.0 / self.lambda_max


def make_problem(
    dim: int, seed: int = 0, noise_sigma: float = 0.0, condition_number: float = 1.0, f_star: float = 0.0
) -> ConvexProblem:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if not condition_number >= 1:
        raise ValueError(f"condition_number must be >= 1, got {condition_number}")
    if not noise_sigma >= 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    curvature = np.logspace(0.0, math.log10(condition_number), dim) if dim > 1 else np.array([1.0])
    if dim > 1:
        curvature[0], curvature[-1] = 1.0, float(condition_number)
    x_init = np.full(dim, 1.0 / math.sqrt(dim))
    D = float(np.linalg.norm(x_init))
    # a-priori gradient bound: deterministic part at distance D plus typical noise norm
    G = float(curvature.max() * D + noise_sigma * math.sqrt(dim))
    curvature.setflags(write=False)
    x_init.setflags(write=False)
    return ConvexProblem(dim, curvature, float(noise_sigma), x_init, D, G, int(seed), float(f_star))


@dataclass(frozen=True, eq=False)
class RunResult:
    curve: LossCurve
    final_suboptimality: float
    seed: int
    max_grad_norm: float


def normalized_schedule(spec: ScheduleSpec) -> np.ndarray:
    lr = lr_series(spec)
    peak = float(lr.max())
    if peak <= 0:
        raise ValueError("schedule never has a positive learning rate")
    return lr / peak


def scaled_schedule(spec: ScheduleSpec, peak: float) -> ScheduleSpec:
    """Same shape as ``spec`` with its peak learning rate set to ``peak``."""
    if spec.kind == "piecewise":
        top = max(v for _, v in spec.breakpoints)
        return spec.replace(eta_max=peak, breakpoints=[[s, v * peak / top] for s, v in spec.breakpoints])
    return spec.replace(eta_max=peak)


def _noise_chunks(seed: int, T: int, dim: int):
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    for start in range(0, T, NOISE_CHUNK):
        yield rng.standard_normal((min(NOISE_CHUNK, T - start), dim))


def run_sgd(
    problem: ConvexProblem,
    spec: ScheduleSpec,
    gamma: float,
    seed: int | None = None,
    T: int | None = None,
    label: str = "",
) -> RunResult:
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    T = spec.t_total if T is None else int(T)
    if T != spec.t_total:
        raise ValueError(f"T={T} does not match the schedule's t_total={spec.t_total}")
    seed = problem.seed if seed is None else int(seed)
    eta = normalized_schedule(spec)
    h = problem.curvature
    sigma = problem.noise_sigma
    x = problem.x_init.copy()
    losses = np.empty(T)
    max_g = 0.0
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for chunk in _noise_chunks(seed, T, problem.dim):
            for xi in chunk:
                g = h * x
                if sigma:
                    g = g + sigma * xi
                max_g = max(max_g, float(np.sqrt(np.dot(g, g))))
                x = x - (gamma * eta[t]) * g
                f = 0.5 * float(np.dot(h * x, x))
                if not (math.isfinite(f) and np.all(np.isfinite(x))):
                    raise DivergenceError(t, label)
                losses[t] = f + problem.f_star
                t += 1
    meta = CurveMeta(
        model_size=float(problem.dim),
        schedule=scaled_schedule(spec, gamma),
        max_lr=float(gamma),
        seed=seed,
        label=label,
    )
    curve = LossCurve(np.arange(T), losses, meta)
    return RunResult(curve, float(losses[-1] - problem.f_star), seed, max_g)


def closed_form_iterates(problem: ConvexProblem, spec: ScheduleSpec, gamma: float) -> np.ndarray:
    """Noiseless iterates ``x_{t+1} = prod_k (I - gamma eta_k H) x_1``, one row per step."""
    eta = normalized_schedule(spec)
    factors = 1.0 - gamma * np.outer(eta, problem.curvature)
    return np.cumprod(factors, axis=0) * problem.x_init


# ---------------------------------------------------------------------------
# benchmark families


@dataclass(frozen=True)
class BenchmarkConfig:
    schedules: tuple[dict, ...]
    total_steps: tuple[int, ...]
    gammas: tuple[float, ...]
    seeds: tuple[int, ...]
    dim: int = 16
    condition_number: float = 100.0
    noise_sigma: float = 0.5
    f_star: float = 1.0
    problem_seed: int = 0

    def __post_init__(self):
        for name in ("schedules", "total_steps", "gammas", "seeds"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"benchmark config needs at least one entry in {name!r}")
            object.__setattr__(self, name, value)
        for tmpl in self.schedules:
            if "t_total" in tmpl:
                raise ValueError("schedule templates take their length from total_steps; drop 't_total'")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k in ("schedules", "total_steps", "gammas", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BenchmarkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown benchmark config field(s): {', '.join(unknown)}")
        return cls(**data)

    def problem(self) -> ConvexProblem:
        return make_problem(self.dim, self.problem_seed, self.noise_sigma, self.condition_number, self.f_star)


@dataclass(frozen=True)
class RunPlan:
    label: str
    spec: ScheduleSpec
    gamma: float
    seed: int


def _schedule_tag(spec: ScheduleSpec) -> str:
    if spec.kind == "wsd":
        return f"wsd-R{spec.annealing_ratio:g}"
    return spec.kind


def plan_runs(config: BenchmarkConfig) -> list[RunPlan]:
    """Cartesian product schedules x total_steps x gammas x seeds in that nesting order."""
    plans = []
    for tmpl in config.schedules:
        for T in config.total_steps:
            spec = ScheduleSpec.from_dict({**tmpl, "t_total": int(T)})
            for gamma in config.gammas:
                for seed in config.seeds:
                    label = f"{_schedule_tag(spec)}-T{T}-g{gamma:g}-s{seed}"
                    plans.append(RunPlan(label, spec, float(gamma), int(seed)))
    labels = [p.label for p in plans]
    if len(set(labels)) != len(labels):
        raise ValueError("benchmark config produces duplicate run labels")
    return plans


def execute_plans(problem: ConvexProblem, plans: Sequence[RunPlan], workers: int = 1) -> list[RunResult | DivergenceError]:
    """Run every plan; divergences are returned in place rather than raised."""

    def one(plan: RunPlan):
        try:
            return run_sgd(problem, plan.spec, plan.gamma, plan.seed, label=plan.label)
        except DivergenceError as exc:
            return exc

    if workers <= 1:
        return [one(p) for p in plans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, plans))


def generate_benchmark_family(config: BenchmarkConfig, workers: int = 1) -> list[LossCurve]:
    problem = config.problem()
    results = execute_plans(problem, plan_runs(config), workers)
    for r in results:
        if isinstance(r, DivergenceError):
            raise r
    return [r.curve for r in results]
