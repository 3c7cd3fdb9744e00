"""Loss curves: ordered (step, loss) points plus run metadata."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .schedule import ScheduleSpec


class CurveError(ValueError):
    pass


@dataclass(frozen=True)
class CurveMeta:
    model_size: float = 1.0
    batch_size: int = 1
    sequence_length: int = 1
    schedule: ScheduleSpec | None = None
    max_lr: float | None = None
    seed: int | None = None
    label: str = ""

    def __post_init__(self):
        if not self.model_size > 0:
            raise CurveError(f"model size must be > 0, got {self.model_size}")
        if self.batch_size < 1 or self.sequence_length < 1:
            raise CurveError("batch_size and sequence_length must be positive")

    @property
    def tokens_per_step(self) -> int:
        return self.batch_size * self.sequence_length

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_size": self.model_size,
            "batch_size": self.batch_size,
            "sequence_length": self.sequence_length,
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            "max_lr": self.max_lr,
            "seed": self.seed,
            "label": self.label,
        }


@dataclass(frozen=True)
class LossCurve:
    steps: np.ndarray
    losses: np.ndarray
    meta: CurveMeta = field(default_factory=CurveMeta)

    def __post_init__(self):
        steps = np.asarray(self.steps)
        losses = np.asarray(self.losses, dtype=np.float64)
        if steps.ndim != 1 or losses.ndim != 1 or steps.shape != losses.shape:
            raise CurveError("steps and losses must be 1-D arrays of equal length")
        if steps.size and not np.issubdtype(steps.dtype, np.integer):
            if not np.all(steps == np.round(steps)):
                raise CurveError("steps must be integers")
        steps = steps.astype(np.int64)
        if steps.size > 1:
            bad = np.nonzero(np.diff(steps) <= 0)[0]
            if bad.size:
                i = int(bad[0]) + 1
                raise CurveError(f"steps must be strictly increasing; violated at index {i} (step {steps[i]})")
        if not np.all(np.isfinite(losses)):
            raise CurveError("losses must be finite")
        if np.any(losses <= 0):
            raise CurveError("losses must be > 0")
        steps.setflags(write=False)
        losses.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "losses", losses)

    def __len__(self) -> int:
        return int(self.steps.shape[0])

    @property
    def label(self) -> str:
        return self.meta.label

    def with_losses(self, losses: np.ndarray) -> "LossCurve":
        return LossCurve(self.steps, losses, self.meta)

    def with_meta(self, **changes: Any) -> "LossCurve":
        return LossCurve(self.steps, self.losses, replace(self.meta, **changes))

    def subset(self, mask: np.ndarray) -> "LossCurve":
        return LossCurve(self.steps[mask], self.losses[mask], self.meta)
