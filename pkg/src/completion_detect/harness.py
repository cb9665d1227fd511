"""Per-action leave-one-subject-out experiments and report files.

Experiment config is an INI file with a single ``[experiment]`` section of
flat ``key = value`` pairs. Relative paths resolve against the config
file's directory. Keys (defaults in brackets):

    manifest             manifest CSV (required)
    features_dir         directory of feature CSVs (required)
    output_dir           where report files go (required)
    model                pca_hmm | lstm | pca_lstm  [pca_hmm]
    actions              comma-separated subset, or "all"  [all]
    variance_threshold   PCA retained variance  [0.90]
    train_complete_only  drop incomplete sequences from training  [false]
    seed                 base seed for LSTM training  [0]
    save_models          write per-fold models under output_dir/models  [false]
    grid_min, grid_max   shift grid for curve files  [-50, 50]
    lstm_epochs, lstm_lr_first_epoch, lstm_lr_rest, lstm_hidden_size,
    lstm_grad_clip_norm, lstm_init_scale   LSTM training settings

Environment variables are never consulted.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import os
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .core import Dataset, FeatureSequence, ValidationError, filter_complete, load_dataset, loso_splits
from .hmm import CompletionHmm, TrainingError, UnobservableStateError, save_hmm, train_hmm, viterbi
from .lstm import LstmError, LstmModel, TrainConfig, lstm_predict, save_lstm, train_lstm
from .pca import PcaError, PcaModel, fit_pca, save_pca

logger = logging.getLogger(__name__)

MODELS = ("pca_hmm", "lstm", "pca_lstm")
SUMMARY_FILE = "summary.json"
SHIFTS_FILE = "shifts.csv"
METRICS_FILE = "frame_metrics.csv"
SKIPPED_FILE = "skipped.csv"
CURVE_COMPLETE_FILE = "curve_complete.csv"
CURVE_INCOMPLETE_FILE = "curve_incomplete.csv"


class ConfigError(ValueError):
    pass


class TrainingFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path
    features_dir: Path
    output_dir: Path
    model: str = "pca_hmm"
    actions: tuple[str, ...] | None = None
    variance_threshold: float = 0.90
    train_complete_only: bool = False
    seed: int = 0
    save_models: bool = False
    grid: tuple[int, int] = metrics.DEFAULT_GRID
    lstm: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {self.model!r}")
        if not 0.0 < self.variance_threshold <= 1.0:
            raise ConfigError("variance_threshold must be in (0, 1]")
        if self.grid[0] > self.grid[1]:
            raise ConfigError(f"grid_min {self.grid[0]} > grid_max {self.grid[1]}")

    @property
    def uses_pca(self) -> bool:
        return self.model in ("pca_hmm", "pca_lstm")


_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def load_experiment_config(path: str | os.PathLike, **overrides) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"config not found: {path}")
    if "experiment" not in parser:
        raise ConfigError(f"{path}: missing [experiment] section")
    sec = dict(parser["experiment"])
    base = path.parent

    def take(key, conv=str, default=None, required=False):
        if key not in sec:
            if required:
                raise ConfigError(f"{path}: missing required key {key!r}")
            return default
        raw = sec.pop(key).strip()
        try:
            if conv is bool:
                return _BOOL[raw.lower()]
            return conv(raw)
        except (KeyError, ValueError):
            raise ConfigError(f"{path}: bad value for {key!r}: {raw!r}") from None

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    actions = take("actions", default="all")
    lstm_kwargs = {}
    for key, conv in (("epochs", int), ("lr_first_epoch", float), ("lr_rest", float),
                      ("hidden_size", int), ("grad_clip_norm", float), ("init_scale", float)):
        v = take(f"lstm_{key}", conv)
        if v is not None:
            lstm_kwargs[key] = v
    kwargs = dict(
        manifest=resolve(take("manifest", required=True)),
        features_dir=resolve(take("features_dir", required=True)),
        output_dir=resolve(take("output_dir", required=True)),
        model=take("model", default="pca_hmm"),
        actions=None if actions.lower() == "all"
        else tuple(a.strip() for a in actions.split(",") if a.strip()),
        variance_threshold=take("variance_threshold", float, 0.90),
        train_complete_only=take("train_complete_only", bool, False),
        seed=take("seed", int, 0),
        save_models=take("save_models", bool, False),
        grid=(take("grid_min", int, metrics.DEFAULT_GRID[0]),
              take("grid_max", int, metrics.DEFAULT_GRID[1])),
    )
    if sec:
        raise ConfigError(f"{path}: unknown keys {sorted(sec)}")
    try:
        kwargs["lstm"] = TrainConfig(**lstm_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


def fold_seed(base_seed: int, action: str, subject: str) -> int:
    """Stable per-fold seed; independent of which other actions/folds exist."""
    return (base_seed * 1_000_003 + zlib.crc32(f"{action}\0{subject}".encode())) % (2**32)


@dataclass
class FoldModel:
    kind: str
    pca: PcaModel | None = None
    hmm: CompletionHmm | None = None
    lstm: LstmModel | None = None
    lstm_config: TrainConfig | None = None

    def project(self, frames: np.ndarray) -> np.ndarray:
        return frames if self.pca is None else self.pca.transform(frames)

    def predict(self, seq: FeatureSequence) -> np.ndarray:
        x = self.project(seq.frames)
        if self.hmm is not None:
            return viterbi(self.hmm, x)
        labels, _ = lstm_predict(self.lstm, x)
        return labels

    def save(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        if self.pca is not None:
            save_pca(self.pca, directory / "pca.csv")
        if self.hmm is not None:
            save_hmm(self.hmm, directory / "hmm.csv")
        if self.lstm is not None:
            save_lstm(self.lstm, directory / "lstm.csv", self.lstm_config)


class FoldSkipped(Exception):
    pass


def fit_fold(train: Dataset, config: ExperimentConfig, seed: int = 0) -> FoldModel:
    """Fit one fold's model on training sequences only.

    Raises ``FoldSkipped`` when the fold has nothing usable to train on and
    ``TrainingFailure`` when fitting itself breaks.
    """
    if config.train_complete_only:
        try:
            train = filter_complete(train)
        except ValidationError as exc:
            raise FoldSkipped(str(exc)) from None
    labeled = [s.labeled() for s in train]
    pca = None
    if config.uses_pca:
        try:
            pca = fit_pca(np.concatenate([s.frames for s in labeled]), config.variance_threshold)
        except PcaError as exc:
            raise TrainingFailure(f"PCA: {exc}") from None
        labeled = [s.features.with_frames(pca.transform(s.frames)).labeled() for s in labeled]

    if config.model == "pca_hmm":
        try:
            hmm = train_hmm(labeled)
        except UnobservableStateError as exc:
            raise FoldSkipped(str(exc)) from None
        except TrainingError as exc:
            raise TrainingFailure(f"HMM: {exc}") from None
        return FoldModel(config.model, pca=pca, hmm=hmm)

    lstm_config = replace(config.lstm, seed=seed)
    try:
        lstm = train_lstm(labeled, lstm_config)
    except LstmError as exc:
        raise TrainingFailure(f"LSTM: {exc}") from None
    return FoldModel(config.model, pca=pca, lstm=lstm, lstm_config=lstm_config)


@dataclass
class RunResult:
    shifts: list[metrics.CompletionShift]
    confusion: dict[str, metrics.FrameMetrics]
    skipped: list[dict]
    summary: dict


def evaluate(dataset: Dataset, config: ExperimentConfig) -> RunResult:
    """Run LOSO per action over an in-memory dataset; no files written."""
    actions = sorted(dataset.actions) if config.actions is None else list(config.actions)
    missing = [a for a in actions if a not in dataset.actions]
    if missing:
        raise ValidationError(f"actions not in dataset: {missing}")
    if metrics.TOTAL in actions:
        raise ValidationError(f"action name {metrics.TOTAL!r} is reserved")

    shifts: list[metrics.CompletionShift] = []
    confusion: dict[str, metrics.FrameMetrics] = {}
    skipped: list[dict] = []
    for action in actions:
        subset = dataset.for_action(action)
        subjects = sorted(subset.subjects)
        fm = metrics.FrameMetrics.empty()
        for subject, (train, test) in zip(subjects, loso_splits(subset)):
            try:
                model = fit_fold(train, config, fold_seed(config.seed, action, subject))
            except FoldSkipped as exc:
                logger.warning("skipping fold %s/%s: %s", action, subject, exc)
                skipped.append({"action": action, "subject": subject, "reason": str(exc)})
                continue
            if config.save_models:
                model.save(config.output_dir / "models" / action / subject)
            preds = [model.predict(seq) for seq in test]
            fm = fm + metrics.frame_metrics(
                [(p, seq.labels()) for p, seq in zip(preds, test)],
                names=[seq.meta.sequence_id for seq in test],
            )
            shifts.extend(metrics.completion_shift(p, seq.meta) for p, seq in zip(preds, test))
        confusion[action] = fm
    summary = metrics.summarize(shifts, confusion, config.grid, skipped)
    return RunResult(shifts, confusion, skipped, summary)


def _curves(shifts, complete: bool, grid) -> dict[str, metrics.CompletionCurve]:
    chosen = [s for s in shifts if s.is_complete == complete]
    out = {}
    for action in sorted({s.action for s in chosen}):
        out[action] = metrics.cumulative_curve([s for s in chosen if s.action == action], grid)
    if chosen:
        out[metrics.TOTAL] = metrics.cumulative_curve(chosen, grid)
    return out


def write_report(result: RunResult, output_dir: str | os.PathLike, grid) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_shifts(out / SHIFTS_FILE, result.shifts)
    metrics.write_frame_metrics(out / METRICS_FILE, result.confusion)
    metrics.write_curve(out / CURVE_COMPLETE_FILE, _curves(result.shifts, True, grid))
    metrics.write_curve(out / CURVE_INCOMPLETE_FILE, _curves(result.shifts, False, grid))
    with open(out / SKIPPED_FILE, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=("action", "subject", "reason"), lineterminator="\n")
        w.writeheader()
        w.writerows(result.skipped)
    (out / SUMMARY_FILE).write_text(summary_json(result.summary), encoding="utf-8")


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def run_loso(config: ExperimentConfig) -> RunResult:
    """Load the dataset, evaluate every requested action, write report files."""
    dataset = load_dataset(config.manifest, config.features_dir)
    result = evaluate(dataset, config)
    write_report(result, config.output_dir, config.grid)
    return result


def recompute_summary(run_dir: str | os.PathLike) -> dict:
    """Rebuild the summary from a run's shifts, frame-metrics and skip files."""
    run_dir = Path(run_dir)
    previous = json.loads((run_dir / SUMMARY_FILE).read_text(encoding="utf-8"))
    grid = tuple(previous["grid"])
    shifts = metrics.read_shifts(run_dir / SHIFTS_FILE)
    confusion = metrics.read_frame_metrics(run_dir / METRICS_FILE)
    with open(run_dir / SKIPPED_FILE, encoding="utf-8", newline="") as fh:
        skipped = list(csv.DictReader(fh))
    return metrics.summarize(shifts, confusion, grid, skipped)


def read_summary(run_dir: str | os.PathLike) -> dict:
    return json.loads((Path(run_dir) / SUMMARY_FILE).read_text(encoding="utf-8"))


def fold_models(dataset: Dataset, config: ExperimentConfig, action: str) -> list[FoldModel | None]:
    """Fitted model per fold (sorted subject order); None where skipped."""
    subset = dataset.for_action(action)
    out: list[FoldModel | None] = []
    for subject, (train, _) in zip(sorted(subset.subjects), loso_splits(subset)):
        try:
            out.append(fit_fold(train, config, fold_seed(config.seed, action, subject)))
        except FoldSkipped:
            out.append(None)
    return out


__all__ = [
    "ConfigError", "ExperimentConfig", "FoldModel", "FoldSkipped", "RunResult", "TrainingFailure",
    "evaluate", "fit_fold", "fold_models", "fold_seed", "load_experiment_config",
    "recompute_summary", "run_loso", "write_report",
]
