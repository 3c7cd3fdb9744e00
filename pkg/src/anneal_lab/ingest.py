"""Reading, validating, converting and aligning loss logs.

Accepted inputs:

* CSV with header ``step,loss``
* JSONL with one ``{"step": ..., "loss": ...}`` object per line
* a JSON run manifest (one object or a list) whose fields mirror
  :class:`RunManifest`; ``curve_path`` is resolved relative to the manifest.

Exported floats use ``repr``, the shortest text that parses back to the same
double, so parse -> export -> parse is lossless.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .curve import CurveError, CurveMeta, LossCurve
from .schedule import ScheduleSpec


class IngestError(ValueError):
    pass


def _check_series(steps: list[int], losses: list[float], source: str) -> None:
    for i in range(1, len(steps)):
        if steps[i] == steps[i - 1]:
            raise IngestError(f"{source}: duplicate step {steps[i]} at index {i}")
        if steps[i] < steps[i - 1]:
            raise IngestError(
                f"{source}: steps not strictly increasing at index {i} (step {steps[i]} after {steps[i - 1]})"
            )
    if not steps:
        raise IngestError(f"{source}: no data rows")


def _parse_point(step_text: Any, loss_text: Any, where: str) -> tuple[int, float]:
    try:
        if isinstance(step_text, bool):
            raise ValueError
        if isinstance(step_text, str):
            step = int(step_text.strip())
        else:
            step = int(step_text)
            if step != step_text:
                raise ValueError
    except (TypeError, ValueError):
        raise IngestError(f"{where}: step {step_text!r} is not an integer") from None
    if step < 0:
        raise IngestError(f"{where}: negative step {step}")
    try:
        if isinstance(loss_text, bool):
            raise ValueError
        loss = float(loss_text.strip() if isinstance(loss_text, str) else loss_text)
    except (TypeError, ValueError):
        raise IngestError(f"{where}: loss {loss_text!r} is not a number") from None
    if not math.isfinite(loss):
        raise IngestError(f"{where}: loss {loss_text!r} is not finite")
    if loss <= 0:
        raise IngestError(f"{where}: loss must be > 0, got {loss!r}")
    return step, loss


def parse_loss_text(text: str, source: str = "<string>") -> tuple[np.ndarray, np.ndarray]:
    """Parse ``step,loss`` CSV text.  Line numbers in errors count the header as line 1."""
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise IngestError(f"{source}: empty file") from None
    if [h.strip() for h in header] != ["step", "loss"]:
        raise IngestError(f"{source}: line 1: expected header 'step,loss', got {','.join(header)!r}")
    steps: list[int] = []
    losses: list[float] = []
    for row in rows:
        where = f"{source}: line {rows.line_num}"
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise IngestError(f"{where}: expected 2 fields, got {len(row)}")
        s, v = _parse_point(row[0], row[1], where)
        steps.append(s)
        losses.append(v)
    _check_series(steps, losses, source)
    return np.asarray(steps, dtype=np.int64), np.asarray(losses, dtype=np.float64)


def parse_loss_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_loss_text(text, str(path))


def parse_loss_jsonl(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror or exc}") from None
    steps: list[int] = []
    losses: list[float] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}: line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or "step" not in obj or "loss" not in obj:
            raise IngestError(f"{where}: expected an object with 'step' and 'loss'")
        s, v = _parse_point(obj["step"], obj["loss"], where)
        steps.append(s)
        losses.append(v)
    _check_series(steps, losses, str(path))
    return np.asarray(steps, dtype=np.int64), np.asarray(losses, dtype=np.float64)


def load_series(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch on suffix: ``.jsonl`` is JSON lines, anything else is CSV."""
    path = Path(path)
    if path.suffix.lower() == ".jsonl":
        return parse_loss_jsonl(path)
    return parse_loss_csv(path)


def format_loss_csv(steps: Iterable[int], losses: Iterable[float], header: Sequence[str] = ("step", "loss")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for s, v in zip(steps, losses):
        w.writerow([int(s), repr(float(v))])
    return buf.getvalue()


def export_loss_csv(curve: LossCurve, path: str | Path | None = None) -> str:
    text = format_loss_csv(curve.steps.tolist(), curve.losses.tolist())
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# unit conversion


def _tokens_per_step(batch_size_sequences: int, sequence_length: int) -> int:
    per = int(batch_size_sequences) * int(sequence_length)
    if per <= 0:
        raise ValueError(
            f"batch_size_sequences * sequence_length must be positive, got {batch_size_sequences} * {sequence_length}"
        )
    return per


def tokens_to_steps(tokens: int, batch_size_sequences: int, sequence_length: int) -> int:
    """Whole optimizer steps covered by ``tokens`` (floor division)."""
    if tokens < 0:
        raise ValueError("tokens must be >= 0")
    return int(tokens) // _tokens_per_step(batch_size_sequences, sequence_length)


def steps_to_tokens(steps: int, batch_size_sequences: int, sequence_length: int) -> int:
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return int(steps) * _tokens_per_step(batch_size_sequences, sequence_length)


# ---------------------------------------------------------------------------
# alignment


def align_curves(curves: Sequence[LossCurve], grid: Sequence[int]) -> list[LossCurve]:
    """Resample every curve onto ``grid`` by linear interpolation in step."""
    g = np.asarray(grid)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a non-empty 1-D list of steps")
    out = []
    for i, c in enumerate(curves):
        name = c.label or f"curve {i}"
        if len(c) == 0:
            raise ValueError(f"{name!r} is empty")
        lo, hi = int(c.steps[0]), int(c.steps[-1])
        bad = g[(g < lo) | (g > hi)]
        if bad.size:
            raise ValueError(f"grid step {bad[0]} lies outside the step range [{lo}, {hi}] of {name!r}")
        values = np.interp(g.astype(np.float64), c.steps.astype(np.float64), c.losses)
        out.append(LossCurve(g, values, c.meta))
    return out


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class RunManifest:
    curve_path: Path
    model_size_params: float
    batch_size_sequences: int = 1
    sequence_length: int = 1
    schedule: ScheduleSpec | None = None
    max_lr: float | None = None
    seed: int | None = None
    label: str = ""

    def __post_init__(self):
        if not self.model_size_params > 0:
            raise IngestError(f"model_size_params must be positive, got {self.model_size_params}")
        for name in ("batch_size_sequences", "sequence_length"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise IngestError(f"{name} must be a positive integer, got {v!r}")

    def to_dict(self, relative_to: Path | None = None) -> dict[str, Any]:
        path = self.curve_path
        if relative_to is not None:
            try:
                path = path.relative_to(relative_to)
            except ValueError:
                pass
        return {
            "curve_path": path.as_posix(),
            "model_size_params": self.model_size_params,
            "batch_size_sequences": self.batch_size_sequences,
            "sequence_length": self.sequence_length,
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            "max_lr": self.max_lr,
            "seed": self.seed,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> "RunManifest":
        if not isinstance(data, dict):
            raise IngestError("manifest entry must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise IngestError(f"unknown manifest field(s): {', '.join(unknown)}")
        for required in ("curve_path", "model_size_params"):
            if required not in data:
                raise IngestError(f"manifest entry missing {required!r}")
        fields = dict(data)
        path = Path(fields["curve_path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        fields["curve_path"] = path
        if fields.get("schedule") is not None:
            try:
                fields["schedule"] = ScheduleSpec.from_dict(fields["schedule"])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"manifest schedule for {path}: {exc}") from None
        return cls(**fields)

    def load_curve(self) -> LossCurve:
        if not self.curve_path.is_file():
            raise IngestError(f"curve file not found: {self.curve_path}")
        steps, losses = load_series(self.curve_path)
        meta = CurveMeta(
            model_size=float(self.model_size_params),
            batch_size=int(self.batch_size_sequences),
            sequence_length=int(self.sequence_length),
            schedule=self.schedule,
            max_lr=self.max_lr,
            seed=self.seed,
            label=self.label or self.curve_path.stem,
        )
        try:
            return LossCurve(steps, losses, meta)
        except CurveError as exc:
            raise IngestError(f"{self.curve_path}: {exc}") from None


def load_manifest(path: str | Path) -> list[RunManifest]:
    """Load a manifest file holding one entry or a list of entries.

    Every referenced curve file must exist.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise IngestError(f"cannot read manifest {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    entries = data if isinstance(data, list) else [data]
    runs = [RunManifest.from_dict(e, path.parent) for e in entries]
    for r in runs:
        if not r.curve_path.is_file():
            raise IngestError(f"curve file not found: {r.curve_path}")
    return runs


def load_curves(manifest_paths: Sequence[str | Path]) -> list[LossCurve]:
    curves: list[LossCurve] = []
    for p in manifest_paths:
        curves.extend(r.load_curve() for r in load_manifest(p))
    return curves


def write_manifest(runs: Sequence[RunManifest], path: str | Path) -> str:
    path = Path(path)
    text = json.dumps([r.to_dict(path.parent) for r in runs], indent=2, sort_keys=True) + "\n"
    path.write_text(text)
    return text
