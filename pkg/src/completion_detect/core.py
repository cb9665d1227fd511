"""Data model, on-disk formats and fold construction.

Frame indices are 0-based everywhere. A complete sequence's
``completion_frame`` is the first post-completion frame.

On-disk layout
--------------
Manifest: a CSV file with header::

    sequence_id,subject_id,action,is_complete,completion_frame,feature_file

``is_complete`` is ``true``/``false``; ``completion_frame`` is left empty
for incomplete sequences; ``feature_file`` is relative to the features
directory.

Feature file: one CSV per sequence, one row per frame, one column per
feature, no header. UTF-8, LF line endings.
"""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MANIFEST_FIELDS = (
    "sequence_id",
    "subject_id",
    "action",
    "is_complete",
    "completion_frame",
    "feature_file",
)


class DataError(ValueError):
    """Base class for dataset loading and validation failures."""


class LoadError(DataError):
    pass


class ValidationError(DataError):
    pass


class FrameRangeError(ValidationError):
    pass


class CompletionLabel(enum.IntEnum):
    PRE = 0
    POST = 1  # positive class for all metrics


PRE = CompletionLabel.PRE
POST = CompletionLabel.POST


@dataclass(frozen=True)
class SequenceMeta:
    sequence_id: str
    subject_id: str
    action: str
    is_complete: bool
    completion_frame: int | None = None
    feature_file: str = ""

    def __post_init__(self):
        if self.is_complete and self.completion_frame is None:
            raise ValidationError(
                f"sequence {self.sequence_id!r} is complete but has no completion_frame"
            )
        if not self.is_complete and self.completion_frame is not None:
            raise ValidationError(
                f"sequence {self.sequence_id!r} is incomplete but has completion_frame"
            )
        if self.completion_frame is not None and self.completion_frame < 0:
            raise FrameRangeError(
                f"sequence {self.sequence_id!r}: negative completion_frame"
            )


def derive_labels(meta: SequenceMeta, length: int) -> np.ndarray:
    """Per-frame ground-truth labels (0 = pre, 1 = post) for one sequence."""
    if length < 1:
        raise ValidationError(f"sequence {meta.sequence_id!r}: length must be >= 1")
    labels = np.zeros(length, dtype=np.int8)
    if meta.is_complete:
        if meta.completion_frame >= length:
            raise FrameRangeError(
                f"sequence {meta.sequence_id!r}: completion_frame "
                f"{meta.completion_frame} >= length {length}"
            )
        labels[meta.completion_frame:] = POST
    return labels


def first_post(labels: Sequence[int] | np.ndarray) -> int | None:
    """Index of the first post-completion label, or None if there is none."""
    hits = np.flatnonzero(np.asarray(labels) == POST)
    return int(hits[0]) if hits.size else None


def is_monotone(labels: Sequence[int] | np.ndarray) -> bool:
    labels = np.asarray(labels)
    return not np.any(labels[1:] < labels[:-1])


@dataclass(frozen=True)
class FeatureSequence:
    meta: SequenceMeta
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValidationError(
                f"sequence {self.meta.sequence_id!r}: frames must be a T x D matrix"
            )
        if frames.shape[0] < 1:
            raise ValidationError(f"sequence {self.meta.sequence_id!r}: no frames")
        if not np.all(np.isfinite(frames)):
            raise ValidationError(
                f"sequence {self.meta.sequence_id!r}: non-finite feature values"
            )
        if self.meta.is_complete and self.meta.completion_frame >= frames.shape[0]:
            raise FrameRangeError(
                f"sequence {self.meta.sequence_id!r}: completion_frame "
                f"{self.meta.completion_frame} >= length {frames.shape[0]}"
            )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def length(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def labels(self) -> np.ndarray:
        return derive_labels(self.meta, self.length)

    def labeled(self) -> "LabeledSequence":
        return LabeledSequence(self, self.labels())

    def with_frames(self, frames: np.ndarray) -> "FeatureSequence":
        """Same metadata over a different feature space (e.g. PCA-reduced)."""
        return FeatureSequence(self.meta, frames)


@dataclass(frozen=True)
class LabeledSequence:
    """Ground-truth labelled sequence; labels must be monotone pre* post*."""

    features: FeatureSequence
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        sid = self.features.meta.sequence_id
        if labels.shape != (self.features.length,):
            raise ValidationError(f"sequence {sid!r}: label count != frame count")
        if not np.all((labels == PRE) | (labels == POST)):
            raise ValidationError(f"sequence {sid!r}: labels must be 0 (pre) or 1 (post)")
        if not is_monotone(labels):
            raise ValidationError(f"sequence {sid!r}: ground-truth labels not monotone")
        if not self.features.meta.is_complete and np.any(labels == POST):
            raise ValidationError(f"sequence {sid!r}: incomplete sequence has post labels")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def frames(self) -> np.ndarray:
        return self.features.frames

    @property
    def meta(self) -> SequenceMeta:
        return self.features.meta


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[FeatureSequence, ...]
    actions: frozenset[str] = field(default=None)
    subjects: frozenset[str] = field(default=None)

    def __post_init__(self):
        seqs = tuple(self.sequences)
        object.__setattr__(self, "sequences", seqs)
        if self.actions is None:
            object.__setattr__(self, "actions", frozenset(s.meta.action for s in seqs))
        else:
            object.__setattr__(self, "actions", frozenset(self.actions))
        if self.subjects is None:
            object.__setattr__(self, "subjects", frozenset(s.meta.subject_id for s in seqs))
        else:
            object.__setattr__(self, "subjects", frozenset(self.subjects))
        self._validate()

    def _validate(self):
        seen = {}
        dims = {}
        for seq in self.sequences:
            m = seq.meta
            if m.sequence_id in seen:
                raise ValidationError(f"duplicate sequence_id {m.sequence_id!r}")
            seen[m.sequence_id] = seq
            if m.action not in self.actions:
                raise ValidationError(f"sequence {m.sequence_id!r}: undeclared action {m.action!r}")
            if m.subject_id not in self.subjects:
                raise ValidationError(
                    f"sequence {m.sequence_id!r}: undeclared subject {m.subject_id!r}"
                )
            if m.action in dims:
                other = dims[m.action]
                if other.dim != seq.dim:
                    raise ValidationError(
                        f"feature dimension mismatch in action {m.action!r}: "
                        f"{other.meta.sequence_id!r} has D={other.dim}, "
                        f"{m.sequence_id!r} has D={seq.dim}"
                    )
            else:
                dims[m.action] = seq

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def subset(self, sequences: Iterable[FeatureSequence]) -> "Dataset":
        return Dataset(tuple(sequences))

    def for_action(self, action: str) -> "Dataset":
        return self.subset(s for s in self.sequences if s.meta.action == action)

    def feature_dim(self, action: str) -> int:
        for s in self.sequences:
            if s.meta.action == action:
                return s.dim
        raise KeyError(action)


def loso_splits(dataset: Dataset) -> list[tuple[Dataset, Dataset]]:
    """Leave-one-subject-out folds, ordered by sorted subject id.

    Fold ``i`` tests on the ``i``-th subject in ``sorted(dataset.subjects)``.
    """
    subjects = sorted(dataset.subjects)
    if len(subjects) < 2:
        raise ValidationError(
            f"leave-one-subject-out needs at least 2 subjects, got {len(subjects)}"
        )
    folds = []
    for subject in subjects:
        test = [s for s in dataset if s.meta.subject_id == subject]
        train = [s for s in dataset if s.meta.subject_id != subject]
        folds.append((dataset.subset(train), dataset.subset(test)))
    return folds


def filter_complete(dataset: Dataset) -> Dataset:
    kept = [s for s in dataset if s.meta.is_complete]
    if not kept:
        raise ValidationError("no complete sequences left to train on")
    return dataset.subset(kept)


# --- serialisation -----------------------------------------------------------


def _parse_bool(text: str, where: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ValidationError(f"{where}: cannot parse is_complete value {text!r}")


def read_manifest(manifest_path: str | os.PathLike) -> list[SequenceMeta]:
    path = Path(manifest_path)
    if not path.is_file():
        raise LoadError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ValidationError(
                f"{path}: header must be {','.join(MANIFEST_FIELDS)}, got {reader.fieldnames}"
            )
        metas = []
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if None in row or any(v is None for v in row.values()):
                raise ValidationError(f"{where}: wrong number of fields")
            is_complete = _parse_bool(row["is_complete"], where)
            cf_text = row["completion_frame"].strip()
            try:
                completion_frame = int(cf_text) if cf_text else None
            except ValueError:
                raise ValidationError(f"{where}: bad completion_frame {cf_text!r}") from None
            try:
                metas.append(
                    SequenceMeta(
                        sequence_id=row["sequence_id"],
                        subject_id=row["subject_id"],
                        action=row["action"],
                        is_complete=is_complete,
                        completion_frame=completion_frame,
                        feature_file=row["feature_file"],
                    )
                )
            except DataError as exc:
                raise type(exc)(f"{where}: {exc}") from None
    return metas


def read_features(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"feature file not found: {path}")
    try:
        frames = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2, encoding="utf-8")
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return frames


def format_float(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def write_features(path: str | os.PathLike, frames: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.asarray(frames, dtype=np.float64):
            fh.write(",".join(format_float(v) for v in row))
            fh.write("\n")


def load_dataset(manifest_path: str | os.PathLike, features_dir: str | os.PathLike) -> Dataset:
    """Load and validate a dataset described by a manifest CSV."""
    features_dir = Path(features_dir)
    sequences = []
    for meta in read_manifest(manifest_path):
        frames = read_features(features_dir / meta.feature_file)
        try:
            sequences.append(FeatureSequence(meta, frames))
        except DataError as exc:
            raise type(exc)(f"{features_dir / meta.feature_file}: {exc}") from None
    return Dataset(tuple(sequences))


def save_dataset(
    dataset: Dataset, manifest_path: str | os.PathLike, features_dir: str | os.PathLike
) -> None:
    """Write ``dataset`` as a manifest plus one feature CSV per sequence.

    Sequences without a ``feature_file`` get ``<sequence_id>.csv``.
    """
    features_dir = Path(features_dir)
    features_dir.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for seq in dataset:
            m = seq.meta
            feature_file = m.feature_file or f"{m.sequence_id}.csv"
            writer.writerow(
                [
                    m.sequence_id,
                    m.subject_id,
                    m.action,
                    "true" if m.is_complete else "false",
                    "" if m.completion_frame is None else m.completion_frame,
                    feature_file,
                ]
            )
            write_features(features_dir / feature_file, seq.frames)
