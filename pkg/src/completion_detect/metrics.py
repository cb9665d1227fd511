"""Frame-level precision/recall/F1 and the cumulative completion-shift curve.

Post-completion is the positive class. A completion shift is the signed
difference between the predicted and ground-truth first post frame. An
undetected completion has predicted frame ``inf``; an incomplete sequence
has ground-truth frame 0, so any detection on it is a finite shift.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import POST, SequenceMeta, first_post

INF = math.inf
DEFAULT_GRID = (-50, 50)
HEADLINE_SHIFT = 10
TOTAL = "total"


@dataclass(frozen=True)
class FrameMetrics:
    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int

    @property
    def precision(self) -> float | None:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else None

    @property
    def recall(self) -> float | None:
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else None

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        if p + r == 0:
            return 0.0
        return 2 * p * r / (p + r)

    def __add__(self, other: "FrameMetrics") -> "FrameMetrics":
        return FrameMetrics(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
            self.true_negatives + other.true_negatives,
        )

    @classmethod
    def empty(cls) -> "FrameMetrics":
        return cls(0, 0, 0, 0)


def frame_metrics(
    pairs: Iterable[tuple[Sequence[int], Sequence[int]]],
    names: Sequence[str] | None = None,
) -> FrameMetrics:
    """Micro-averaged confusion counts over (predicted, ground truth) pairs."""
    tp = fp = fn = tn = 0
    for idx, (pred, gt) in enumerate(pairs):
        pred = np.asarray(pred) == POST
        gt = np.asarray(gt) == POST
        if pred.shape != gt.shape:
            name = names[idx] if names is not None else f"#{idx}"
            raise ValueError(
                f"sequence {name}: {pred.size} predicted labels vs {gt.size} ground-truth labels"
            )
        tp += int(np.sum(pred & gt))
        fp += int(np.sum(pred & ~gt))
        fn += int(np.sum(~pred & gt))
        tn += int(np.sum(~pred & ~gt))
    return FrameMetrics(tp, fp, fn, tn)


def format_percent(value: float | None) -> str:
    return "NA" if value is None else f"{100 * value:.1f}"


@dataclass(frozen=True)
class CompletionShift:
    sequence_id: str
    g: int
    p: float  # int frame or INF
    action: str = ""
    subject_id: str = ""
    is_complete: bool = True

    @property
    def shift(self) -> float:
        return INF if self.p == INF else int(self.p) - self.g

    @property
    def detected(self) -> bool:
        return self.p != INF


def completion_shift(pred: Sequence[int], meta: SequenceMeta) -> CompletionShift:
    g = meta.completion_frame if meta.is_complete else 0
    p = first_post(pred)
    return CompletionShift(
        sequence_id=meta.sequence_id,
        g=g,
        p=INF if p is None else p,
        action=meta.action,
        subject_id=meta.subject_id,
        is_complete=meta.is_complete,
    )


@dataclass(frozen=True)
class CompletionCurve:
    shifts: tuple[CompletionShift, ...]
    grid: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.shifts)

    def __call__(self, i: int) -> float:
        """C(i) for any integer i, inside or outside the grid."""
        return cumulative_fraction([s.shift for s in self.shifts], i)

    def at_max(self) -> float:
        return float(self.values[-1])


def cumulative_fraction(shifts: Sequence[float], i: float) -> float:
    if not shifts:
        raise ValueError("no shifts")
    return sum(1 for s in shifts if s <= i) / len(shifts)


def cumulative_curve(
    shifts: Sequence[CompletionShift], grid: tuple[int, int] = DEFAULT_GRID
) -> CompletionCurve:
    """C(i) = fraction of sequences with shift <= i, for i over ``grid``
    (inclusive). Undetected sequences (infinite shift) never count."""
    if not shifts:
        raise ValueError("cumulative curve needs at least one shift")
    lo, hi = grid
    if lo > hi:
        raise ValueError(f"bad grid {grid}")
    values = np.array([s.shift for s in shifts], dtype=np.float64)
    finite = np.sort(values[np.isfinite(values)])
    xs = np.arange(lo, hi + 1)
    counts = np.searchsorted(finite, xs, side="right")
    return CompletionCurve(tuple(shifts), xs, counts / len(values))


# --- reports -----------------------------------------------------------------


def _metric_row(name: str, fm: FrameMetrics) -> dict:
    return {
        "action": name,
        "tp": fm.true_positives,
        "fp": fm.false_positives,
        "fn": fm.false_negatives,
        "tn": fm.true_negatives,
        "precision": fm.precision,
        "recall": fm.recall,
        "f1": fm.f1,
    }


def _curve_stats(shifts: Sequence[CompletionShift], grid) -> dict:
    complete = [s for s in shifts if s.is_complete]
    incomplete = [s for s in shifts if not s.is_complete]
    out = {"n_complete": len(complete), "n_incomplete": len(incomplete)}
    if complete:
        c = cumulative_curve(complete, grid)
        out["c10_complete"] = c(HEADLINE_SHIFT)
        out["c0_complete"] = c(0)
        out["detected_complete"] = sum(s.detected for s in complete) / len(complete)
    else:
        out["c10_complete"] = out["c0_complete"] = out["detected_complete"] = None
    if incomplete:
        out["false_detection_incomplete"] = cumulative_curve(incomplete, grid).at_max()
    else:
        out["false_detection_incomplete"] = None
    return out


def summarize(
    shifts: Sequence[CompletionShift],
    confusion: Mapping[str, FrameMetrics],
    grid: tuple[int, int] = DEFAULT_GRID,
    skipped: Sequence[Mapping[str, str]] = (),
) -> dict:
    """Per-action and pooled rows. ``total`` pools confusion counts and shifts
    across actions (micro-average), it is not a mean of per-action rows.

    The headline number is ``c10_complete``: C(10) over complete sequences.
    """
    rows = []
    total_fm = FrameMetrics.empty()
    for action in sorted(confusion):
        fm = confusion[action]
        total_fm = total_fm + fm
        row = _metric_row(action, fm)
        row.update(_curve_stats([s for s in shifts if s.action == action], grid))
        row["skipped_folds"] = sum(1 for s in skipped if s["action"] == action)
        rows.append(row)
    total = _metric_row(TOTAL, total_fm)
    total.update(_curve_stats(list(shifts), grid))
    total["skipped_folds"] = len(skipped)
    rows.append(total)
    return {
        "grid": [int(grid[0]), int(grid[1])],
        "rows": rows,
        "skipped": [dict(s) for s in skipped],
    }


def format_summary(summary: dict) -> str:
    lines = [f"{'action':<12}{'prec':>7}{'rec':>7}{'F1':>7}{'C(10)':>8}{'FD-inc':>8}{'skip':>6}"]
    for r in summary["rows"]:
        c10 = "NA" if r["c10_complete"] is None else f"{r['c10_complete']:.3f}"
        fd = "NA" if r["false_detection_incomplete"] is None else f"{r['false_detection_incomplete']:.3f}"
        lines.append(
            f"{r['action']:<12}{format_percent(r['precision']):>7}{format_percent(r['recall']):>7}"
            f"{format_percent(r['f1']):>7}{c10:>8}{fd:>8}{r['skipped_folds']:>6}"
        )
    return "\n".join(lines)


SHIFT_FIELDS = ("sequence_id", "action", "subject", "is_complete", "g", "p", "shift")
METRIC_FIELDS = ("action", "tp", "fp", "fn", "tn", "precision", "recall", "f1")


def _fmt_frame(v: float) -> str:
    return "inf" if v == INF else str(int(v))


def write_shifts(path: str | os.PathLike, shifts: Sequence[CompletionShift]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SHIFT_FIELDS)
        for s in shifts:
            w.writerow(
                [s.sequence_id, s.action, s.subject_id, "true" if s.is_complete else "false",
                 s.g, _fmt_frame(s.p), _fmt_frame(s.shift)]
            )


def read_shifts(path: str | os.PathLike) -> list[CompletionShift]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            p = INF if row["p"] == "inf" else int(row["p"])
            s = CompletionShift(
                sequence_id=row["sequence_id"],
                g=int(row["g"]),
                p=p,
                action=row["action"],
                subject_id=row["subject"],
                is_complete=row["is_complete"] == "true",
            )
            if _fmt_frame(s.shift) != row["shift"]:
                raise ValueError(f"{path}: inconsistent shift for {s.sequence_id!r}")
            out.append(s)
    return out


def write_curve(
    path: str | os.PathLike, curves: Mapping[str, CompletionCurve]
) -> None:
    """Long-format curve file: one ``action,i,C`` row per grid point."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("action", "i", "C"))
        for name, curve in curves.items():
            for i, v in zip(curve.grid, curve.values):
                w.writerow((name, int(i), repr(float(v))))


def write_frame_metrics(path: str | os.PathLike, confusion: Mapping[str, FrameMetrics]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        total = FrameMetrics.empty()
        for name in sorted(confusion):
            total = total + confusion[name]
            _write_metric_row(w, name, confusion[name])
        _write_metric_row(w, TOTAL, total)


def _write_metric_row(w, name: str, fm: FrameMetrics) -> None:
    fmt = lambda v: "NA" if v is None else repr(v)  # noqa: E731
    w.writerow((name, fm.true_positives, fm.false_positives, fm.false_negatives,
                fm.true_negatives, fmt(fm.precision), fmt(fm.recall), fmt(fm.f1)))


def read_frame_metrics(path: str | os.PathLike) -> dict[str, FrameMetrics]:
    """Per-action confusion counts; the pooled ``total`` row is dropped since
    it is recomputed from the others."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["action"] == TOTAL:
                continue
            out[row["action"]] = FrameMetrics(
                int(row["tp"]), int(row["fp"]), int(row["fn"]), int(row["tn"])
            )
    return out
