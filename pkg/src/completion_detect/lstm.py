"""Single-layer LSTM frame classifier with a two-way softmax head.

Plain numpy implementation: forward pass, exact backpropagation through time
and a per-sequence SGD training loop. Gate blocks are stacked in the order
input, forget, cell candidate, output.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import POST, LabeledSequence, first_post, format_float

logger = logging.getLogger(__name__)

PARAM_NAMES = ("input_weights", "recurrent_weights", "gate_biases", "output_weights", "output_bias")


class LstmError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    lr_first_epoch: float = 1e-3
    lr_rest: float = 1e-4
    seed: int = 0
    grad_clip_norm: float = 5.0
    init_scale: float = 0.08
    hidden_size: int = 128

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr_first_epoch <= 0 or self.lr_rest <= 0:
            raise ValueError("learning rates must be positive")
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")

    def learning_rate(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``."""
        return self.lr_first_epoch if epoch == 0 else self.lr_rest


@dataclass
class LstmModel:
    input_weights: np.ndarray  # (4H, k)
    recurrent_weights: np.ndarray  # (4H, H)
    gate_biases: np.ndarray  # (4H,)
    output_weights: np.ndarray  # (2, H)
    output_bias: np.ndarray  # (2,)

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.shape[1]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_size: int = 128) -> "LstmModel":
        h4 = 4 * hidden_size
        return cls(
            np.zeros((h4, input_dim)),
            np.zeros((h4, hidden_size)),
            np.zeros(h4),
            np.zeros((2, hidden_size)),
            np.zeros(2),
        )

    @classmethod
    def random(
        cls, input_dim: int, hidden_size: int, rng: np.random.Generator, scale: float = 0.08
    ) -> "LstmModel":
        h = hidden_size
        u = lambda *shape: rng.uniform(-scale, scale, size=shape)  # noqa: E731
        model = cls(u(4 * h, input_dim), u(4 * h, h), u(4 * h), u(2, h), u(2))
        model.gate_biases[h : 2 * h] = 1.0  # forget gate
        return model

    def params(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def copy(self) -> "LstmModel":
        return LstmModel(*(p.copy() for p in self.params()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


@dataclass
class ForwardCache:
    x: np.ndarray
    gates: np.ndarray  # (T, 4H) post-activation i, f, g, o
    cells: np.ndarray  # (T+1, H), row 0 is the zero initial state
    hiddens: np.ndarray  # (T+1, H)
    tanh_cells: np.ndarray  # (T, H)
    probs: np.ndarray  # (T, 2)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check_input(model: LstmModel, sequence) -> np.ndarray:
    x = np.atleast_2d(np.asarray(sequence, dtype=np.float64))
    if x.shape[0] < 1:
        raise ValueError("empty sequence")
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input dimension {x.shape[1]} != model input dimension {model.input_dim}")
    return x


def lstm_forward(model: LstmModel, sequence: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Per-frame class probabilities (T, 2) plus activations for backprop.

    Hidden and cell states start at zero.
    """
    x = _check_input(model, sequence)
    t_max, h = x.shape[0], model.hidden_size
    wh = model.recurrent_weights
    z_in = x @ model.input_weights.T + model.gate_biases

    gates = np.empty((t_max, 4 * h))
    cells = np.zeros((t_max + 1, h))
    hiddens = np.zeros((t_max + 1, h))
    tanh_cells = np.empty((t_max, h))
    for t in range(t_max):
        z = z_in[t] + wh @ hiddens[t]
        g = gates[t]
        g[: 2 * h] = _sigmoid(z[: 2 * h])
        g[2 * h : 3 * h] = np.tanh(z[2 * h : 3 * h])
        g[3 * h :] = _sigmoid(z[3 * h :])
        cells[t + 1] = g[h : 2 * h] * cells[t] + g[:h] * g[2 * h : 3 * h]
        tanh_cells[t] = np.tanh(cells[t + 1])
        hiddens[t + 1] = g[3 * h :] * tanh_cells[t]
        if not np.all(np.isfinite(hiddens[t + 1])):
            raise LstmError(f"non-finite activation at frame {t}")

    logits = hiddens[1:] @ model.output_weights.T + model.output_bias
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs, ForwardCache(x, gates, cells, hiddens, tanh_cells, probs)


def sequence_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-frame cross-entropy."""
    labels = np.asarray(labels, dtype=np.intp)
    picked = probs[np.arange(labels.size), labels]
    return float(-np.mean(np.log(picked)))


def lstm_gradients(
    model: LstmModel, sequence: np.ndarray, labels: np.ndarray
) -> tuple[LstmModel, float]:
    """Exact BPTT gradient of the mean frame cross-entropy.

    Returns the gradient (as an ``LstmModel`` holding gradient arrays) and
    the loss.
    """
    probs, c = lstm_forward(model, sequence)
    labels = np.asarray(labels, dtype=np.intp)
    t_max, h = probs.shape[0], model.hidden_size
    if labels.shape != (t_max,):
        raise ValueError(f"expected {t_max} labels, got {labels.shape}")
    loss = sequence_loss(probs, labels)

    d_logits = probs.copy()
    d_logits[np.arange(t_max), labels] -= 1.0
    d_logits /= t_max

    grad_wo = d_logits.T @ c.hiddens[1:]
    grad_bo = d_logits.sum(axis=0)
    d_h_out = d_logits @ model.output_weights  # (T, H)

    wh = model.recurrent_weights
    d_z = np.empty((t_max, 4 * h))
    d_h_next = np.zeros(h)
    d_c_next = np.zeros(h)
    for t in range(t_max - 1, -1, -1):
        g = c.gates[t]
        i, f, gg, o = g[:h], g[h : 2 * h], g[2 * h : 3 * h], g[3 * h :]
        d_h = d_h_out[t] + d_h_next
        d_c = d_c_next + d_h * o * (1.0 - c.tanh_cells[t] ** 2)
        dz = d_z[t]
        dz[:h] = d_c * gg * i * (1.0 - i)
        dz[h : 2 * h] = d_c * c.cells[t] * f * (1.0 - f)
        dz[2 * h : 3 * h] = d_c * i * (1.0 - gg**2)
        dz[3 * h :] = d_h * c.tanh_cells[t] * o * (1.0 - o)
        d_h_next = wh.T @ dz
        d_c_next = d_c * f

    grad = LstmModel(
        d_z.T @ c.x,
        d_z.T @ c.hiddens[:-1],
        d_z.sum(axis=0),
        grad_wo,
        grad_bo,
    )
    return grad, loss


def _clip(grad: LstmModel, max_norm: float) -> float:
    norm = float(np.sqrt(sum(np.sum(p * p) for p in grad.params())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for p in grad.params():
            p *= scale
    return norm


StepCallback = Callable[[int, int, float, float], None]


def train_lstm(
    sequences: Sequence[LabeledSequence],
    config: TrainConfig = TrainConfig(),
    on_step: StepCallback | None = None,
) -> LstmModel:
    """Train with plain SGD, one update per full sequence.

    ``on_step(epoch, sequence_index, learning_rate, loss)`` is called after
    every update (0-based epoch).
    """
    if not sequences:
        raise LstmError("no training sequences")
    dims = {s.frames.shape[1] for s in sequences}
    if len(dims) != 1:
        raise LstmError(f"training sequences have mixed feature dimensions {sorted(dims)}")

    rng = np.random.default_rng(config.seed)
    model = LstmModel.random(dims.pop(), config.hidden_size, rng, config.init_scale)
    for epoch in range(config.epochs):
        lr = config.learning_rate(epoch)
        total = 0.0
        for idx in rng.permutation(len(sequences)):
            seq = sequences[idx]
            grad, loss = lstm_gradients(model, seq.frames, seq.labels)
            if not np.isfinite(loss):
                raise LstmError(
                    f"non-finite loss at epoch {epoch + 1}, sequence {seq.meta.sequence_id!r}"
                )
            if not np.isfinite(_clip(grad, config.grad_clip_norm)):
                raise LstmError(
                    f"non-finite gradient at epoch {epoch + 1}, sequence {seq.meta.sequence_id!r}"
                )
            for p, g in zip(model.params(), grad.params()):
                p -= lr * g
            total += loss
            if on_step is not None:
                on_step(epoch, int(idx), lr, loss)
        logger.info("epoch %d/%d lr=%g mean loss %.6f", epoch + 1, config.epochs, lr,
                    total / len(sequences))
    if not model.all_finite():
        raise LstmError("training produced non-finite parameters")
    return model


def lstm_predict(model: LstmModel, sequence: np.ndarray) -> tuple[np.ndarray, int | None]:
    """Per-frame argmax labels (no monotonic smoothing) and first post frame.

    A frame is post only when its post probability strictly exceeds its
    pre probability.
    """
    probs, _ = lstm_forward(model, sequence)
    labels = labels_from_probs(probs)
    return labels, first_post(labels)


def labels_from_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs)
    return (probs[:, POST] > probs[:, 0]).astype(np.int8)


# --- serialisation -----------------------------------------------------------


def save_lstm(model: LstmModel, path: str | os.PathLike, config: TrainConfig | None = None) -> None:
    """CSV bundle of the five parameter blocks plus a JSON sidecar.

    Every CSV row is ``<block name>,<values...>``; matrices are written row
    by row. The sidecar ``<path>.json`` records H, k and the train config.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, p in zip(PARAM_NAMES, model.params()):
            for row in np.atleast_2d(p):
                fh.write(name + "," + ",".join(format_float(v) for v in row) + "\n")
    sidecar = {"hidden_size": model.hidden_size, "input_dim": model.input_dim}
    if config is not None:
        sidecar["seed"] = config.seed
        sidecar["config"] = asdict(config)
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_lstm(path: str | os.PathLike) -> tuple[LstmModel, TrainConfig | None]:
    path = Path(path)
    sidecar = json.loads(path.with_name(path.name + ".json").read_text())
    blocks: dict[str, list[list[float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            name, *values = line.rstrip("\n").split(",")
            blocks.setdefault(name, []).append([float(v) for v in values])
    arrays = []
    for name in PARAM_NAMES:
        a = np.array(blocks[name])
        arrays.append(a.ravel() if name in ("gate_biases", "output_bias") else a)
    model = LstmModel(*arrays)
    if model.hidden_size != sidecar["hidden_size"] or model.input_dim != sidecar["input_dim"]:
        raise LstmError(f"{path}: parameter shapes disagree with sidecar")
    config = None
    if "config" in sidecar:
        known = {f.name for f in fields(TrainConfig)}
        config = replace(TrainConfig(), **{k: v for k, v in sidecar["config"].items() if k in known})
    return model, config
