"""Forward term S and annealing-momentum term M as per-step prefix series.

Both are functionals of the learning-rate sequence only.  With
``d[t] = lr[t-1] - lr[t]`` (``d[0] = 0``), decay produces positive momentum.

Two momentum flavours are supported:

* ``asmt``: Adam-style normalised accumulation with bias-corrected first and
  second moments of ``d``.
* ``cmmt``: exponentially discounted accumulation,
  ``M_C[s] = sum_{i<=s} sum_{k<=i} d[k] * lam**(i-k)``, evaluated in linear
  time through ``A[i] = lam * A[i-1] + d[i]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .schedule import ScheduleSpec, lr_series

BRUTEFORCE_MAX_STEPS = 10_000


@dataclass(frozen=True)
class MomentumConfig:
    variant: str = "asmt"
    beta1: float = 0.9
    beta2: float = 0.95
    epsilon: float = 1e-8
    lambda_decay: float = 0.999

    def __post_init__(self):
        if self.variant not in ("asmt", "cmmt"):
            raise ValueError(f"momentum variant must be 'asmt' or 'cmmt', got {self.variant!r}")
        if not 0 <= self.beta1 < 1:
            raise ValueError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0 <= self.beta2 < 1:
            raise ValueError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.lambda_decay < 1:
            raise ValueError(f"lambda_decay must lie in (0, 1), got {self.lambda_decay}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MomentumConfig":
        return cls(**data)


@dataclass(frozen=True)
class TermSeries:
    S: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        if self.S.shape != self.M.shape:
            raise ValueError(f"S and M lengths differ ({self.S.shape} vs {self.M.shape})")

    @property
    def length(self) -> int:
        return int(self.S.shape[0])

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "S", "M"])
        for t, (s, m) in enumerate(zip(self.S.tolist(), self.M.tolist())):
            writer.writerow([t, repr(s), repr(m)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def compensated_cumsum(x: np.ndarray) -> np.ndarray:
    """Prefix sums with the rounding error of each addition carried forward.

    Each ``s[i] = fl(s[i-1] + x[i])`` is paired with its exact error via
    TwoSum; the cumulative error is added back at the end.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    s = np.cumsum(x)
    prev = np.concatenate(([0.0], s[:-1]))
    bb = s - prev
    err = (prev - (s - bb)) + (x - bb)
    return s + np.cumsum(err)


def lr_decrements(lr: np.ndarray) -> np.ndarray:
    d = np.zeros_like(lr, dtype=np.float64)
    d[1:] = lr[:-1] - lr[1:]
    return d


def forward_series(spec: ScheduleSpec) -> np.ndarray:
    """``S[t] = sum_{k=0..t} lr[k]``, the left Riemann sum of the schedule."""
    return compensated_cumsum(lr_series(spec))


def asmt_increments(lr: np.ndarray, config: MomentumConfig) -> np.ndarray:
    """Per-step ASMT increments ``m_hat/sqrt(v_hat + eps)``; entry 0 is 0."""
    d = lr_decrements(np.asarray(lr, dtype=np.float64))
    T = d.shape[0]
    inc = np.zeros(T)
    if T < 2:
        return inc
    b1, b2 = config.beta1, config.beta2
    # moments start from m_0 = v_0 = 0; bias correction counts steps from 1
    m = lfilter([1.0 - b1], [1.0, -b1], d[1:])
    v = lfilter([1.0 - b2], [1.0, -b2], d[1:] ** 2)
    k = np.arange(1, T, dtype=np.float64)
    m_hat = m / -np.expm1(k * math.log(b1)) if b1 > 0 else m
    v_hat = v / -np.expm1(k * math.log(b2)) if b2 > 0 else v
    inc[1:] = m_hat / np.sqrt(v_hat + config.epsilon)
    return inc


def asmt_from_lr(lr: np.ndarray, config: MomentumConfig) -> np.ndarray:
    return compensated_cumsum(asmt_increments(lr, config))


def asmt_series(spec: ScheduleSpec, config: MomentumConfig | None = None) -> np.ndarray:
    config = config or MomentumConfig()
    if config.variant != "asmt":
        raise ValueError(f"asmt_series needs an asmt config, got variant {config.variant!r}")
    return asmt_from_lr(lr_series(spec), config)


def cmmt_from_lr(lr: np.ndarray, lambda_decay: float) -> np.ndarray:
    d = lr_decrements(np.asarray(lr, dtype=np.float64))
    A = lfilter([1.0], [1.0, -lambda_decay], d)
    return compensated_cumsum(A)


def cmmt_series(spec: ScheduleSpec, config: MomentumConfig) -> np.ndarray:
    if config.variant != "cmmt":
        raise ValueError(f"cmmt_series needs a cmmt config, got variant {config.variant!r}")
    return cmmt_from_lr(lr_series(spec), config.lambda_decay)


def cmmt_bruteforce(spec: ScheduleSpec, lambda_decay: float) -> float:
    """Final CMMT value from the literal O(T^2) double sum. Test oracle only."""
    if spec.t_total > BRUTEFORCE_MAX_STEPS:
        raise ValueError(
            f"refusing O(T^2) evaluation for t_total={spec.t_total} > {BRUTEFORCE_MAX_STEPS}"
        )
    lr = lr_series(spec)
    d = lr[:-1] - lr[1:]  # d[k-1] holds eta_{k-1} - eta_k for k = 1..s
    s = d.shape[0]
    inner = []
    for i in range(1, s + 1):
        k = np.arange(1, i + 1)
        inner.append(float(np.dot(d[:i], np.power(lambda_decay, (i - k).astype(np.float64)))))
    return math.fsum(inner)


def momentum_from_lr(lr: np.ndarray, config: MomentumConfig) -> np.ndarray:
    if config.variant == "asmt":
        return asmt_from_lr(lr, config)
    return cmmt_from_lr(lr, config.lambda_decay)


def momentum_series(spec: ScheduleSpec, config: MomentumConfig) -> np.ndarray:
    return momentum_from_lr(lr_series(spec), config)


def term_series(spec: ScheduleSpec, config: MomentumConfig | None = None) -> TermSeries:
    config = config or MomentumConfig()
    lr = lr_series(spec)
    return TermSeries(S=compensated_cumsum(lr), M=momentum_from_lr(lr, config))
