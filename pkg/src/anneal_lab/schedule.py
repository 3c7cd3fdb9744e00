"""Learning-rate schedules evaluated at integer training steps.

Every schedule is a frozen :class:`ScheduleSpec`.  Evaluation is pure:
``lr_at(spec, t)`` for a single step and ``lr_series(spec)`` for the whole
run share the same vectorised code path, so the two agree bit for bit.

Intervals are left-closed.  For WSD the step ``t_constant`` belongs to the
decay branch, where it evaluates to exactly ``eta_max`` when the decay
exponent is 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

KINDS = ("constant", "cosine", "wsd", "piecewise")


class ScheduleError(ValueError):
    """Raised when a schedule's parameters violate its invariants."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    eta_max: float
    t_total: int
    t_warmup: int = 0
    annealing_ratio: float | None = None
    decay_exponent: float = 1.0
    final_lr_divisor: float = 10.0
    breakpoints: tuple[tuple[int, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        # normalise list input (e.g. from JSON) into hashable tuples
        bps = tuple((int(s), float(v)) for s, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "t_total", int(self.t_total))
        object.__setattr__(self, "t_warmup", int(self.t_warmup))
        object.__setattr__(self, "eta_max", float(self.eta_max))
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if not (self.eta_max > 0 and math.isfinite(self.eta_max)):
            raise ScheduleError(f"eta_max > 0 violated (eta_max={self.eta_max})")
        if self.t_total < 1:
            raise ScheduleError(f"t_total >= 1 violated (t_total={self.t_total})")
        if not 0 <= self.t_warmup < self.t_total:
            raise ScheduleError(
                f"0 <= t_warmup < t_total violated (t_warmup={self.t_warmup}, t_total={self.t_total})"
            )
        if self.kind == "wsd":
            r = self.annealing_ratio
            if r is None or not 0 < r <= 1:
                raise ScheduleError(f"0 < annealing_ratio <= 1 violated (annealing_ratio={r})")
            if self.decay_exponent < 1:
                raise ScheduleError(f"decay_exponent >= 1 violated (decay_exponent={self.decay_exponent})")
            if self.t_decay < 1:
                raise ScheduleError(
                    f"t_decay = round(R * t_total) >= 1 violated (R={r}, t_total={self.t_total})"
                )
            if self.t_warmup > self.t_constant:
                raise ScheduleError(
                    f"t_warmup <= t_constant violated (t_warmup={self.t_warmup}, "
                    f"t_constant={self.t_constant})"
                )
        elif self.annealing_ratio is not None:
            raise ScheduleError(f"annealing_ratio only applies to wsd schedules, not {self.kind!r}")
        if self.kind == "cosine" and self.final_lr_divisor < 1:
            raise ScheduleError(f"final_lr_divisor >= 1 violated (final_lr_divisor={self.final_lr_divisor})")
        if self.kind == "piecewise":
            bps = self.breakpoints
            if not bps:
                raise ScheduleError("piecewise schedule needs at least one breakpoint")
            if bps[0][0] != 0:
                raise ScheduleError(f"first breakpoint must sit at step 0, got step {bps[0][0]}")
            for (s0, _), (s1, _) in zip(bps, bps[1:]):
                if s1 <= s0:
                    raise ScheduleError(f"breakpoint steps strictly increasing violated ({s0} -> {s1})")
            for s, v in bps:
                if not (v >= 0 and math.isfinite(v)):
                    raise ScheduleError(f"breakpoint lr >= 0 violated at step {s} (lr={v})")
            if self.t_warmup != 0:
                raise ScheduleError("piecewise schedules encode warmup in their breakpoints; t_warmup must be 0")
        elif self.breakpoints:
            raise ScheduleError(f"breakpoints only apply to piecewise schedules, not {self.kind!r}")

    @property
    def t_decay(self) -> int:
        if self.kind != "wsd":
            return 0
        return round_half_up(self.annealing_ratio * self.t_total)

    @property
    def t_constant(self) -> int:
        """Absolute step index where the WSD decay starts."""
        if self.kind != "wsd":
            return self.t_total
        return self.t_total - self.t_decay

    @property
    def eta_min(self) -> float:
        if self.kind == "cosine":
            return self.eta_max / self.final_lr_divisor
        return 0.0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["breakpoints"] = [list(bp) for bp in self.breakpoints]
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScheduleSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScheduleError(f"unknown schedule field(s): {', '.join(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScheduleSpec":
        return cls.from_dict(json.loads(text))

    def replace(self, **changes: Any) -> "ScheduleSpec":
        d = self.to_dict()
        d.update(changes)
        return ScheduleSpec.from_dict(d)


def build_constant(eta_max: float, t_total: int, t_warmup: int = 0) -> ScheduleSpec:
    return ScheduleSpec("constant", eta_max, t_total, t_warmup)


def build_wsd(
    eta_max: float, t_total: int, t_warmup: int, annealing_ratio: float, decay_exponent: float = 1.0
) -> ScheduleSpec:
    """Warmup-stable-decay: linear warmup, flat plateau, then polynomial decay to zero.

    ``t_decay = round(annealing_ratio * t_total)`` (ties round up) and the
    decay starts at ``t_constant = t_total - t_decay``.
    """
    return ScheduleSpec(
        "wsd",
        eta_max,
        t_total,
        t_warmup,
        annealing_ratio=float(annealing_ratio),
        decay_exponent=float(decay_exponent),
    )


def build_cosine(
    eta_max: float, t_total: int, t_warmup: int = 0, final_lr_divisor: float = 10.0
) -> ScheduleSpec:
    """Linear warmup followed by a single half-cosine from eta_max down to eta_max/divisor.

    The cosine period equals the number of post-warmup steps.
    """
    return ScheduleSpec("cosine", eta_max, t_total, t_warmup, final_lr_divisor=float(final_lr_divisor))


def build_piecewise(breakpoints: Sequence[tuple[int, float]], t_total: int) -> ScheduleSpec:
    """Left-closed step function; ``eta_max`` is taken as the largest breakpoint lr."""
    bps = tuple((int(s), float(v)) for s, v in breakpoints)
    peak = max((v for _, v in bps), default=0.0)
    return ScheduleSpec("piecewise", peak, t_total, breakpoints=bps)


def _evaluate(spec: ScheduleSpec, t: np.ndarray) -> np.ndarray:
    t = t.astype(np.float64)
    eta = spec.eta_max
    if spec.kind == "piecewise":
        steps = np.array([s for s, _ in spec.breakpoints], dtype=np.float64)
        values = np.array([v for _, v in spec.breakpoints], dtype=np.float64)
        idx = np.searchsorted(steps, t, side="right") - 1
        return values[idx]

    out = np.full(t.shape, eta, dtype=np.float64)
    if spec.t_warmup > 0:
        warm = t < spec.t_warmup
        out[warm] = eta * (t[warm] / spec.t_warmup)
    else:
        warm = np.zeros(t.shape, dtype=bool)

    if spec.kind == "cosine":
        period = spec.t_total - spec.t_warmup
        post = ~warm
        eta_min = spec.eta_min
        phase = (t[post] - spec.t_warmup) / period
        # written as a drop from eta so the first post-warmup step is exactly eta_max
        out[post] = eta - 0.5 * (eta - eta_min) * (1.0 - np.cos(np.pi * phase))
    elif spec.kind == "wsd":
        decay = t >= spec.t_constant
        frac = 1.0 - (t[decay] - spec.t_constant) / spec.t_decay
        if spec.decay_exponent == 1.0:
            out[decay] = eta * frac
        else:
            out[decay] = eta * frac**spec.decay_exponent
    return out


def lr_at(spec: ScheduleSpec, t: int) -> float:
    """Learning rate applied at integer step ``t`` (``0 <= t < t_total``)."""
    if isinstance(t, (bool, np.bool_)) or int(t) != t:
        raise TypeError(f"step must be an integer, got {t!r}")
    t = int(t)
    if not 0 <= t < spec.t_total:
        raise IndexError(f"step {t} outside [0, {spec.t_total})")
    return float(_evaluate(spec, np.array([t]))[0])


def lr_series(spec: ScheduleSpec) -> np.ndarray:
    """Learning rate at every step ``0 .. t_total - 1``."""
    return _evaluate(spec, np.arange(spec.t_total))
