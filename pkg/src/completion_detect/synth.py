"""Synthetic datasets with known completion moments.

Frames are drawn from isotropic Gaussians, one regime before the completion
frame and one from it onwards, which is exactly the generative model the
HMM assumes. Incomplete sequences stay in the pre regime, optionally
switching to a distractor regime part way through (an attempt that looks
like progress but never completes).
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import Dataset, FeatureSequence, SequenceMeta


@dataclass(frozen=True)
class SynthConfig:
    feature_dim: int
    pre_mean: tuple[float, ...]
    post_mean: tuple[float, ...]
    noise_std: float = 1.0
    length_range: tuple[int, int] = (20, 40)
    completion_fraction_range: tuple[float, float] = (0.3, 0.7)
    incomplete_fraction: float = 0.2
    subjects: int = 4
    sequences_per_subject: int = 25
    seed: int = 0
    actions: tuple[str, ...] = ("synthetic",)
    distractor_mean: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("pre_mean", "post_mean", "distractor_mean"):
            v = getattr(self, name)
            if v is None:
                continue
            v = tuple(float(x) for x in v)
            if len(v) != self.feature_dim:
                raise ValueError(f"{name} has {len(v)} entries, expected {self.feature_dim}")
            object.__setattr__(self, name, v)
        lo, hi = self.length_range
        if lo < 2 or hi < lo:
            raise ValueError(f"bad length_range {self.length_range}")
        a, b = self.completion_fraction_range
        if not 0.0 < a <= b < 1.0:
            raise ValueError(f"completion_fraction_range must satisfy 0 < a <= b < 1, got {(a, b)}")
        if not 0.0 <= self.incomplete_fraction <= 1.0:
            raise ValueError("incomplete_fraction must be in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.subjects < 1 or self.sequences_per_subject < 1:
            raise ValueError("need at least one subject and one sequence per subject")
        object.__setattr__(self, "actions", tuple(self.actions))

    @classmethod
    def with_separation(cls, feature_dim: int, separation: float, **kwargs) -> "SynthConfig":
        """Regimes placed symmetrically about the origin along the all-ones
        diagonal, ``separation * noise_std`` apart."""
        noise = kwargs.get("noise_std", 1.0)
        half = 0.5 * separation * noise / math.sqrt(feature_dim)
        return cls(feature_dim, (-half,) * feature_dim, (half,) * feature_dim, **kwargs)

    @property
    def separation(self) -> float:
        """Distance between regime means in units of noise_std."""
        gap = np.linalg.norm(np.subtract(self.post_mean, self.pre_mean))
        return float(gap / self.noise_std) if self.noise_std > 0 else math.inf


def _completion_window(length: int, frac: tuple[float, float]) -> tuple[int, int]:
    lo = max(1, math.ceil(frac[0] * length))
    hi = min(length - 1, math.floor(frac[1] * length))
    return lo, max(lo, hi)


def generate(config: SynthConfig) -> Dataset:
    """Deterministic synthetic dataset for ``config``.

    Each subject gets ``round(incomplete_fraction * sequences_per_subject)``
    incomplete sequences per action, at random positions.
    """
    rng = np.random.default_rng(config.seed)
    pre = np.asarray(config.pre_mean)
    post = np.asarray(config.post_mean)
    distractor = None if config.distractor_mean is None else np.asarray(config.distractor_mean)
    n_seq = config.sequences_per_subject
    n_incomplete = int(round(config.incomplete_fraction * n_seq))
    width = len(str(config.subjects))

    sequences = []
    for action in config.actions:
        for s in range(config.subjects):
            subject = f"s{s + 1:0{width}d}"
            incomplete = set(rng.choice(n_seq, size=n_incomplete, replace=False).tolist())
            for j in range(n_seq):
                length = int(rng.integers(config.length_range[0], config.length_range[1] + 1))
                lo, hi = _completion_window(length, config.completion_fraction_range)
                switch = int(rng.integers(lo, hi + 1))
                noise = rng.normal(0.0, 1.0, size=(length, config.feature_dim)) * config.noise_std
                means = np.repeat(pre[None, :], length, axis=0)
                is_complete = j not in incomplete
                if is_complete:
                    means[switch:] = post
                elif distractor is not None:
                    means[switch:] = distractor
                meta = SequenceMeta(
                    sequence_id=f"{action}_{subject}_{j:03d}",
                    subject_id=subject,
                    action=action,
                    is_complete=is_complete,
                    completion_frame=switch if is_complete else None,
                    feature_file=f"{action}_{subject}_{j:03d}.csv",
                )
                sequences.append(FeatureSequence(meta, means + noise))
    return Dataset(tuple(sequences))


def _vector(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _pair(text: str, kind=float):
    a, b = (kind(v) for v in text.split(","))
    return (a, b)


def load_synth_config(path: str | os.PathLike) -> SynthConfig:
    """Read a ``[synth]`` INI section.

    Either ``pre_mean``/``post_mean`` (comma separated) or ``separation``
    must be given. Vectors and ranges are comma separated.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(f"synth config not found: {path}")
    if "synth" not in parser:
        raise ValueError(f"{path}: missing [synth] section")
    sec = parser["synth"]
    known = {
        "feature_dim", "pre_mean", "post_mean", "separation", "noise_std", "length_range",
        "completion_fraction_range", "incomplete_fraction", "subjects",
        "sequences_per_subject", "seed", "actions", "distractor_mean",
    }
    unknown = set(sec) - known
    if unknown:
        raise ValueError(f"{path}: unknown synth keys {sorted(unknown)}")
    kwargs: dict = {}
    if "noise_std" in sec:
        kwargs["noise_std"] = sec.getfloat("noise_std")
    if "length_range" in sec:
        kwargs["length_range"] = _pair(sec["length_range"], int)
    if "completion_fraction_range" in sec:
        kwargs["completion_fraction_range"] = _pair(sec["completion_fraction_range"])
    for key in ("incomplete_fraction",):
        if key in sec:
            kwargs[key] = sec.getfloat(key)
    for key in ("subjects", "sequences_per_subject", "seed"):
        if key in sec:
            kwargs[key] = sec.getint(key)
    if "actions" in sec:
        kwargs["actions"] = tuple(a.strip() for a in sec["actions"].split(",") if a.strip())
    if "distractor_mean" in sec:
        kwargs["distractor_mean"] = _vector(sec["distractor_mean"])
    dim = sec.getint("feature_dim")
    if "separation" in sec:
        return SynthConfig.with_separation(dim, sec.getfloat("separation"), **kwargs)
    return SynthConfig(dim, _vector(sec["pre_mean"]), _vector(sec["post_mean"]), **kwargs)
