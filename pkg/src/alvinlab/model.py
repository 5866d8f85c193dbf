"""A small encoder+classifier trained by mini-batch gradient descent.

Architecture is fixed: one tanh hidden layer (the representation space used by
all anchor and clustering strategies) followed by a linear softmax classifier.
Training records a per-epoch correctness bit for every labeled example; those
bit sequences drive the minority/majority inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Example
from .errors import TrainingDiverged, UsageError
from .numkit import RngState, softmax_rows

DEFAULT_HIDDEN_DIM = 32


@dataclass(frozen=True)
class ModelParams:
    """Immutable parameter snapshot: encoder and classifier weights."""

    w_enc: np.ndarray  # (hidden_dim, input_dim)
    b_enc: np.ndarray  # (hidden_dim,)
    w_cls: np.ndarray  # (num_classes, hidden_dim)
    b_cls: np.ndarray  # (num_classes,)

    def __post_init__(self):
        h, d = self.w_enc.shape
        c, h2 = self.w_cls.shape
        if h2 != h or self.b_enc.shape != (h,) or self.b_cls.shape != (c,):
            raise UsageError("inconsistent parameter shapes")
        for t in (self.w_enc, self.b_enc, self.w_cls, self.b_cls):
            if not np.all(np.isfinite(t)):
                raise UsageError("non-finite parameter entries")

    @property
    def input_dim(self) -> int:
        return self.w_enc.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_enc.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w_cls.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 0.05  # desk-scale default for sgd; use ~0.005 for adam
    optimizer: str = "sgd"  # "sgd" | "adam"
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise UsageError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise UsageError(f"unknown optimizer {self.optimizer!r}")
        if self.l2 < 0:
            raise UsageError("l2 must be >= 0")


@dataclass(frozen=True)
class PredictionTrace:
    """Per-example correctness bits at the end of each training epoch."""

    ids: tuple[int, ...]
    bits: np.ndarray  # (len(ids), epochs) of 0/1
    epoch_losses: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.bits.shape[0] != len(self.ids):
            raise UsageError("trace rows must match ids")

    @property
    def epochs(self) -> int:
        return self.bits.shape[1]

    def sequence(self, ex_id: int) -> np.ndarray:
        try:
            row = self.ids.index(ex_id)
        except ValueError:
            raise UsageError(f"id {ex_id} not in trace") from None
        return self.bits[row]


def init_params(
    input_dim: int,
    num_classes: int,
    rng: RngState,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
) -> ModelParams:
    """Gaussian init scaled by 1/sqrt(fan_in); biases start at zero."""
    w_enc = rng.normals(hidden_dim * input_dim).reshape(hidden_dim, input_dim) / np.sqrt(input_dim)
    w_cls = rng.normals(num_classes * hidden_dim).reshape(num_classes, hidden_dim) / np.sqrt(hidden_dim)
    return ModelParams(
        w_enc=w_enc,
        b_enc=np.zeros(hidden_dim),
        w_cls=w_cls,
        b_cls=np.zeros(num_classes),
    )


def encode_matrix(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """tanh(W_enc x + b_enc) for each row of `features`."""
    return np.tanh(features @ params.w_enc.T + params.b_enc)


def logits_matrix(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return encode_matrix(params, features) @ params.w_cls.T + params.b_cls


def proba_matrix(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return softmax_rows(logits_matrix(params, features))


def encode(params: ModelParams, x: Example) -> np.ndarray:
    if x.features.shape[0] != params.input_dim:
        raise UsageError(
            f"example {x.id}: dimension {x.features.shape[0]} != model input {params.input_dim}"
        )
    return encode_matrix(params, x.features[None, :])[0]


def predict_proba(params: ModelParams, x: Example) -> np.ndarray:
    if x.features.shape[0] != params.input_dim:
        raise UsageError(
            f"example {x.id}: dimension {x.features.shape[0]} != model input {params.input_dim}"
        )
    return proba_matrix(params, x.features[None, :])[0]


def gradient_embedding(params: ModelParams, x: Example) -> np.ndarray:
    """Last-layer loss gradient under the model's own predicted label.

    Equals flatten((p - onehot(argmax p)) outer z), row-major over classes,
    i.e. d/dW_cls of cross-entropy at the hypothetical label argmax p.
    """
    z = encode(params, x)
    p = predict_proba(params, x)
    diff = p.copy()
    diff[int(np.argmax(p))] -= 1.0
    return np.outer(diff, z).ravel()


def loss_and_grads(
    params: ModelParams,
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy (+ L2 penalty) and analytic parameter gradients."""
    n = features.shape[0]
    z = encode_matrix(params, features)
    logits = z @ params.w_cls.T + params.b_cls
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    data_loss = -float(np.mean(log_probs[np.arange(n), labels]))
    reg = 0.5 * l2 * (float(np.sum(params.w_enc**2)) + float(np.sum(params.w_cls**2)))

    probs = np.exp(log_probs)
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dw_cls = dlogits.T @ z + l2 * params.w_cls
    db_cls = dlogits.sum(axis=0)
    dz = dlogits @ params.w_cls
    dpre = dz * (1.0 - z * z)
    dw_enc = dpre.T @ features + l2 * params.w_enc
    db_enc = dpre.sum(axis=0)
    grads = {"w_enc": dw_enc, "b_enc": db_enc, "w_cls": dw_cls, "b_cls": db_cls}
    return data_loss + reg, grads


def train(
    init: ModelParams,
    labeled: list[Example],
    cfg: TrainConfig,
    rng: RngState | None = None,
) -> tuple[ModelParams, PredictionTrace]:
    """Mini-batch cross-entropy training with per-epoch correctness tracing.

    Examples are sorted by id before shuffling, so training is invariant to
    their storage order. The adaptive optimizer applies L2 as decoupled weight
    decay; sgd folds it into the gradient.
    """
    if not labeled:
        raise UsageError("labeled set is empty")
    if rng is None:
        rng = RngState(cfg.seed)

    ordered = sorted(labeled, key=lambda ex: ex.id)
    features = np.stack([ex.features for ex in ordered])
    labels = np.array([ex.label for ex in ordered], dtype=np.int64)
    if features.shape[1] != init.input_dim:
        raise UsageError("example dimension does not match model input")
    n = len(ordered)

    tensors = {
        "w_enc": init.w_enc.copy(),
        "b_enc": init.b_enc.copy(),
        "w_cls": init.w_cls.copy(),
        "b_cls": init.b_cls.copy(),
    }
    adam_m = {k: np.zeros_like(v) for k, v in tensors.items()}
    adam_v = {k: np.zeros_like(v) for k, v in tensors.items()}
    adam_t = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    bits = np.zeros((n, cfg.epochs), dtype=np.uint8)
    epoch_losses = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            rows = perm[start : start + cfg.batch_size]
            params = ModelParams(**tensors)
            grad_l2 = cfg.l2 if cfg.optimizer == "sgd" else 0.0
            loss, grads = loss_and_grads(params, features[rows], labels[rows], l2=grad_l2)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: learning rate {cfg.learning_rate} too high?"
                )
            batch_losses.append(loss)
            if cfg.optimizer == "sgd":
                for k in tensors:
                    tensors[k] -= cfg.learning_rate * grads[k]
            else:
                adam_t += 1
                corr1 = 1.0 - beta1**adam_t
                corr2 = 1.0 - beta2**adam_t
                for k in tensors:
                    g = grads[k]
                    adam_m[k] = beta1 * adam_m[k] + (1.0 - beta1) * g
                    adam_v[k] = beta2 * adam_v[k] + (1.0 - beta2) * g * g
                    step = (adam_m[k] / corr1) / (np.sqrt(adam_v[k] / corr2) + eps)
                    tensors[k] -= cfg.learning_rate * step
                    if cfg.l2 and k.startswith("w"):
                        tensors[k] -= cfg.learning_rate * cfg.l2 * tensors[k]

        params = ModelParams(**tensors)
        preds = np.argmax(proba_matrix(params, features), axis=1)
        bits[:, epoch] = (preds == labels).astype(np.uint8)
        epoch_losses.append(float(np.mean(batch_losses)))

    final = ModelParams(
        w_enc=tensors["w_enc"].copy(),
        b_enc=tensors["b_enc"].copy(),
        w_cls=tensors["w_cls"].copy(),
        b_cls=tensors["b_cls"].copy(),
    )
    trace = PredictionTrace(
        ids=tuple(ex.id for ex in ordered),
        bits=bits,
        epoch_losses=tuple(epoch_losses),
    )
    return final, trace


def save_params(params: ModelParams, path: str | Path) -> None:
    """Debug checkpoint: named tensors as CSV rows `name,i,j,value`."""
    path = Path(path)
    with path.open("w") as fh:
        for name in ("w_enc", "b_enc", "w_cls", "b_cls"):
            t = np.atleast_2d(getattr(params, name))
            for i in range(t.shape[0]):
                for j in range(t.shape[1]):
                    fh.write(f"{name},{i},{j},{t[i, j]!r}\n")


def load_params(path: str | Path) -> ModelParams:
    entries: dict[str, dict[tuple[int, int], float]] = {}
    for line in Path(path).read_text().splitlines():
        name, i, j, value = line.split(",")
        entries.setdefault(name, {})[(int(i), int(j))] = float(value)

    def tensor(name: str) -> np.ndarray:
        cells = entries[name]
        rows = 1 + max(i for i, _ in cells)
        cols = 1 + max(j for _, j in cells)
        out = np.zeros((rows, cols))
        for (i, j), v in cells.items():
            out[i, j] = v
        return out

    return ModelParams(
        w_enc=tensor("w_enc"),
        b_enc=tensor("b_enc")[0],
        w_cls=tensor("w_cls"),
        b_cls=tensor("b_cls")[0],
    )
