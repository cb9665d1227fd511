"""Principal component reduction keeping a fixed fraction of the variance."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import format_float

# Relative slack when comparing a cumulative variance ratio to the threshold;
# cumsum and sum round differently, so a ratio of exactly 1.0 can come out
# as 1 - 1e-16.
_RATIO_SLACK = 1e-12


class PcaError(ValueError):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x D, rows orthonormal
    explained_variance: np.ndarray
    variance_ratio_retained: float
    threshold: float

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, frames: np.ndarray) -> np.ndarray:
        """Project one frame (D,) or many frames (N, D)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[-1] != self.input_dim:
            raise PcaError(
                f"frame dimension {frames.shape[-1]} does not match model dimension {self.input_dim}"
            )
        return (frames - self.mean) @ self.components.T

    def inverse_transform(self, reduced: np.ndarray) -> np.ndarray:
        return np.asarray(reduced) @ self.components + self.mean


def transform(model: PcaModel, frame: np.ndarray) -> np.ndarray:
    return model.transform(frame)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _select_k(eigenvalues: np.ndarray, threshold: float) -> int:
    total = eigenvalues.sum()
    ratios = np.cumsum(eigenvalues) / total
    return int(np.argmax(ratios >= threshold * (1.0 - _RATIO_SLACK))) + 1


def _eig_covariance(centered: np.ndarray):
    n = centered.shape[0]
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    return evals[order], evecs[:, order].T


def _eig_gram(centered: np.ndarray):
    # Nonzero spectrum of X^T X / (n-1) equals that of X X^T / (n-1);
    # eigenvectors map across as v = X^T u / sqrt((n-1) * lambda).
    n = centered.shape[0]
    gram = centered @ centered.T / (n - 1)
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    return evals, evecs, centered


def fit_pca(
    frames: np.ndarray, variance_threshold: float = 0.90, method: str = "auto"
) -> PcaModel:
    """Fit PCA on ``frames`` (N x D), keeping the fewest components whose
    cumulative explained-variance ratio reaches ``variance_threshold``.

    ``method`` is ``"covariance"`` (eigendecomposition of the D x D sample
    covariance), ``"gram"`` (N x N Gram matrix, cheaper when D >> N) or
    ``"auto"``. Both give the same model up to round-off.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise PcaError("frames must be an N x D matrix")
    n, d = x.shape
    if n < 2:
        raise PcaError(f"need at least 2 frames to fit PCA, got {n}")
    if not np.all(np.isfinite(x)):
        raise PcaError("frames contain non-finite values")
    if not 0.0 < variance_threshold <= 1.0:
        raise PcaError(f"variance_threshold must be in (0, 1], got {variance_threshold}")
    if method == "auto":
        method = "gram" if d > n else "covariance"

    mean = x.mean(axis=0)
    centered = x - mean

    if method == "covariance":
        evals, vecs = _eig_covariance(centered)
    elif method == "gram":
        evals, u, _ = _eig_gram(centered)
    else:
        raise PcaError(f"unknown method {method!r}")

    # eigenvalues at round-off level are zero directions, not signal
    tol = max(evals.max(initial=0.0), 0.0) * max(n, d) * np.finfo(float).eps
    evals = np.where(evals > tol, evals, 0.0)
    if evals.sum() <= 0.0:
        raise PcaError("data has zero total variance")

    k = _select_k(evals, variance_threshold)
    kept = evals[:k]
    if method == "gram":
        vecs = (centered.T @ u[:, :k]).T / np.sqrt((n - 1) * kept)[:, None]
    components = _fix_signs(vecs[:k])

    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=kept.copy(),
        variance_ratio_retained=float(kept.sum() / evals.sum()),
        threshold=float(variance_threshold),
    )


def save_pca(model: PcaModel, path: str | os.PathLike) -> None:
    """CSV bundle: a ``#`` header line, then ``mean``, ``component`` (k rows)
    and ``explained_variance`` rows, each prefixed by its tag."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"# pca k={model.k} d={model.input_dim} threshold={format_float(model.threshold)} "
            f"ratio={format_float(model.variance_ratio_retained)}\n"
        )
        fh.write("mean," + ",".join(map(format_float, model.mean)) + "\n")
        for row in model.components:
            fh.write("component," + ",".join(map(format_float, row)) + "\n")
        fh.write(
            "explained_variance," + ",".join(map(format_float, model.explained_variance)) + "\n"
        )


def load_pca(path: str | os.PathLike) -> PcaModel:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        fields = dict(item.split("=", 1) for item in header[2:])
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    mean = np.array([float(v) for v in rows[0][1:]])
    components = np.array([[float(v) for v in r[1:]] for r in rows if r[0] == "component"])
    explained = np.array([float(v) for v in rows[-1][1:]])
    return PcaModel(
        mean=mean,
        components=components.reshape(-1, mean.shape[0]),
        explained_variance=explained,
        variance_ratio_retained=float(fields["ratio"]),
        threshold=float(fields["threshold"]),
    )
