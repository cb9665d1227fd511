"""Supervised two-state Gaussian HMM with a one-way pre -> post structure.

State 0 is pre-completion, state 1 is post-completion. The model always
starts in the pre state and can never leave the post state, so both the
initial probability of post and the post -> pre transition are exactly zero,
held as ``-inf`` in log space.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import POST, PRE, LabeledSequence, first_post, format_float

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
REG_SCALE = 1e-6


class TrainingError(RuntimeError):
    pass


class UnobservableStateError(TrainingError):
    pass


class SingularCovarianceError(TrainingError):
    pass


@dataclass(frozen=True)
class GaussianEmission:
    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    log_det: float

    @classmethod
    def from_moments(cls, mean, covariance) -> "GaussianEmission":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError("covariance is not positive definite") from None
        inv_chol = np.linalg.solve(chol, np.eye(mean.size))
        precision = inv_chol.T @ inv_chol
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        return cls(mean, cov, precision, float(log_det))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log pdf at one point (k,) or at each row of (T, k)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"input dimension {x.shape[-1]} != emission dimension {self.dim}")
        diff = x - self.mean
        maha = np.einsum("...i,ij,...j->...", diff, self.precision, diff)
        return -0.5 * (self.dim * LOG_2PI + self.log_det + maha)


def emission_log_density(e: GaussianEmission, x: np.ndarray) -> float:
    return float(e.log_density(np.asarray(x).reshape(-1)))


@dataclass(frozen=True)
class CompletionHmm:
    initial_log_prob: np.ndarray  # (2,)
    transition_log_prob: np.ndarray  # (2, 2), row = from
    emissions: tuple[GaussianEmission, GaussianEmission]

    def __post_init__(self):
        init = np.asarray(self.initial_log_prob, dtype=np.float64)
        trans = np.asarray(self.transition_log_prob, dtype=np.float64)
        if init[POST] != -np.inf or init[PRE] != 0.0:
            raise ValueError("initial state must be pre-completion with probability 1")
        if trans[POST, PRE] != -np.inf:
            raise ValueError("post -> pre transition must be impossible")
        if not np.allclose(np.exp(trans).sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")
        if self.emissions[0].dim != self.emissions[1].dim:
            raise ValueError("emission dimensions differ")
        object.__setattr__(self, "initial_log_prob", init)
        object.__setattr__(self, "transition_log_prob", trans)
        object.__setattr__(self, "emissions", tuple(self.emissions))

    @property
    def feature_dim(self) -> int:
        return self.emissions[0].dim

    def emission_log_densities(self, sequence: np.ndarray) -> np.ndarray:
        """(T, 2) matrix of per-frame, per-state emission log densities."""
        x = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
        if x.shape[1] != self.feature_dim:
            raise ValueError(
                f"sequence dimension {x.shape[1]} != model dimension {self.feature_dim}"
            )
        return np.column_stack([e.log_density(x) for e in self.emissions])


def _state_emission(frames: np.ndarray, state_name: str) -> GaussianEmission:
    n, k = frames.shape
    if n < 2:
        raise UnobservableStateError(
            f"{state_name} state has {n} training frame(s); need at least 2"
        )
    mean = frames.mean(axis=0)
    cov = np.atleast_2d(np.cov(frames, rowvar=False, ddof=1))
    eps = REG_SCALE * np.trace(cov) / k
    cov = cov + eps * np.eye(k)
    return GaussianEmission.from_moments(mean, cov)


def train_hmm(sequences: Sequence[LabeledSequence]) -> CompletionHmm:
    """Estimate all HMM parameters by counting over labelled training data.

    Bigram counts are pooled over every sequence. Emissions are full
    covariance Gaussians with ``1e-6 * trace / k`` added to the diagonal.
    """
    if not sequences:
        raise TrainingError("no training sequences")
    dims = {s.frames.shape[1] for s in sequences}
    if len(dims) != 1:
        raise TrainingError(f"training sequences have mixed feature dimensions {sorted(dims)}")

    first = np.zeros(2)
    bigrams = np.zeros((2, 2))
    for s in sequences:
        lab = s.labels
        first[lab[0]] += 1
        np.add.at(bigrams, (lab[:-1], lab[1:]), 1)

    if first[POST] > 0:
        logger.warning(
            "%d training sequence(s) start post-completion; clamping initial "
            "distribution to (1, 0)",
            int(first[POST]),
        )

    frames = np.concatenate([s.frames for s in sequences])
    labels = np.concatenate([s.labels for s in sequences])
    if not np.any(labels == POST):
        raise UnobservableStateError("post-completion state unobservable in training data")
    if not np.any(labels == PRE):
        raise UnobservableStateError("pre-completion state unobservable in training data")

    pre_out = bigrams[PRE].sum()
    if pre_out == 0:
        raise UnobservableStateError("no transitions out of the pre-completion state")
    # post -> pre never occurs in monotone ground truth; it is pinned to zero
    # regardless so the structure holds by construction.
    with np.errstate(divide="ignore"):
        trans = np.array(
            [
                [np.log(bigrams[PRE, PRE] / pre_out), np.log(bigrams[PRE, POST] / pre_out)],
                [-np.inf, 0.0],
            ]
        )

    emissions = (
        _state_emission(frames[labels == PRE], "pre-completion"),
        _state_emission(frames[labels == POST], "post-completion"),
    )
    return CompletionHmm(np.array([0.0, -np.inf]), trans, emissions)


def viterbi_from_log_emissions(
    initial_log_prob: np.ndarray, transition_log_prob: np.ndarray, log_emissions: np.ndarray
) -> tuple[np.ndarray, float]:
    """Two-state Viterbi over precomputed (T, 2) emission log densities.

    Returns the best state path and its log score. Ties go to the pre
    state, which amounts to choosing the latest completion among equally
    scored paths.
    """
    a = transition_log_prob
    t_max = log_emissions.shape[0]
    delta = np.empty((t_max, 2))
    from_pre = np.zeros((t_max, 2), dtype=bool)  # backpointer: came from pre?
    delta[0] = initial_log_prob + log_emissions[0]
    for t in range(1, t_max):
        prev = delta[t - 1]
        for j in (PRE, POST):
            via_pre = prev[PRE] + a[PRE, j]
            via_post = prev[POST] + a[POST, j]
            if via_pre >= via_post:
                delta[t, j] = via_pre + log_emissions[t, j]
                from_pre[t, j] = True
            else:
                delta[t, j] = via_post + log_emissions[t, j]

    path = np.empty(t_max, dtype=np.int8)
    state = PRE if delta[-1, PRE] >= delta[-1, POST] else POST
    score = float(delta[-1, state])
    for t in range(t_max - 1, -1, -1):
        path[t] = state
        if t > 0:
            state = PRE if from_pre[t, state] else POST
    return path, score


def viterbi(hmm: CompletionHmm, sequence: np.ndarray) -> np.ndarray:
    """Most probable pre/post label path for a (T, k) feature sequence."""
    x = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    if x.shape[0] < 1:
        raise ValueError("empty sequence")
    path, _ = viterbi_from_log_emissions(
        hmm.initial_log_prob, hmm.transition_log_prob, hmm.emission_log_densities(x)
    )
    return path


def viterbi_with_score(hmm: CompletionHmm, sequence: np.ndarray) -> tuple[np.ndarray, float]:
    x = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    return viterbi_from_log_emissions(
        hmm.initial_log_prob, hmm.transition_log_prob, hmm.emission_log_densities(x)
    )


def decode_completion(hmm: CompletionHmm, sequence: np.ndarray) -> int | None:
    return first_post(viterbi(hmm, sequence))


# --- serialisation -----------------------------------------------------------


def save_hmm(hmm: CompletionHmm, path: str | os.PathLike) -> None:
    """CSV bundle: header line, ``initial`` row, two ``transition`` rows, then
    per state a ``mean_<state>`` row and k ``cov_<state>`` rows."""
    fmt = lambda v: ",".join(format_float(x) for x in v)  # noqa: E731
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# completion-hmm k={hmm.feature_dim}\n")
        fh.write("initial," + fmt(hmm.initial_log_prob) + "\n")
        for row in hmm.transition_log_prob:
            fh.write("transition," + fmt(row) + "\n")
        for name, e in zip(("pre", "post"), hmm.emissions):
            fh.write(f"mean_{name}," + fmt(e.mean) + "\n")
            for row in e.covariance:
                fh.write(f"cov_{name}," + fmt(row) + "\n")


def load_hmm(path: str | os.PathLike) -> CompletionHmm:
    rows: dict[str, list[list[float]]] = {}
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            if not line.strip():
                continue
            tag, *values = line.rstrip("\n").split(",")
            rows.setdefault(tag, []).append([float(v) for v in values])
    emissions = tuple(
        GaussianEmission.from_moments(rows[f"mean_{n}"][0], rows[f"cov_{n}"])
        for n in ("pre", "post")
    )
    return CompletionHmm(np.array(rows["initial"][0]), np.array(rows["transition"]), emissions)
