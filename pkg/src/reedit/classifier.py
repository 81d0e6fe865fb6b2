"""From-scratch (n+1)-class MLP, the binary variants, and the
unseen-model threshold.

One hidden layer of 30 ReLU units, softmax output, cross-entropy loss,
Adam, inverted dropout during training. Training is single-threaded and
fully deterministic given TrainConfig.seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Decision, ParseError, Verdict
from .features import FeatureTable, slice_features


class DegenerateData(Exception):
    """Training table holds fewer than two classes."""


class DimensionMismatch(Exception):
    pass


class ContainsNegatives(Exception):
    pass


class MissingThreshold(Exception):
    pass


HIDDEN_UNITS = 30
STD_FLOOR = 1e-8  # stds below this are treated as degenerate and set to 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 0.001
    batch_size: int = 16
    dropout: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: int = HIDDEN_UNITS

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("epochs, learning_rate, batch_size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class UnseenThreshold:
    tau: float
    target_neg_accuracy: float = 0.9
    achieved_accuracy: float = 0.0
    unachievable: bool = False


@dataclass
class MlpModel:
    """Weights plus the feature standardization fitted on training data.

    W1 is hidden x input, W2 is out x hidden. `group`/`metrics_k` record the
    feature slice the model was trained on so evaluation applies the same
    slice; `tau` is the optional unseen-model threshold.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    label_count: int
    n: int = 0
    variant: str = "multiclass"
    group: str = "combined"
    metrics_k: int = 6
    registry_fingerprint: str = ""
    seed: int = 0
    tau: float | None = None
    tau_warning: bool = False

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]


def _relu(x):
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params, x: np.ndarray, dropout_mask: np.ndarray | None = None):
    """Forward pass; returns (probabilities, hidden activations)."""
    W1, b1, W2, b2 = params
    h = _relu(x @ W1.T + b1)
    if dropout_mask is not None:
        h = h * dropout_mask
    logits = h @ W2.T + b2
    return softmax(logits), h


def cross_entropy_loss(params, x: np.ndarray, y: np.ndarray,
                       dropout_mask: np.ndarray | None = None) -> float:
    probs, _ = forward(params, x, dropout_mask)
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def cross_entropy_gradients(params, x: np.ndarray, y: np.ndarray,
                            dropout_mask: np.ndarray | None = None):
    """Analytic gradients of the mean cross-entropy w.r.t. every parameter."""
    W1, b1, W2, b2 = params
    m = len(y)
    probs, h = forward(params, x, dropout_mask)
    delta = probs.copy()
    delta[np.arange(m), y] -= 1.0
    delta /= m
    gW2 = delta.T @ h
    gb2 = delta.sum(axis=0)
    dh = delta @ W2
    if dropout_mask is not None:
        dh = dh * dropout_mask
    dh = dh * (h > 0)
    gW1 = dh.T @ x
    gb1 = dh.sum(axis=0)
    return gW1, gb1, gW2, gb2


def _standardize_fit(matrix: np.ndarray):
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


def _train(
    x: np.ndarray,
    y: np.ndarray,
    label_count: int,
    cfg: TrainConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Core Adam training loop over standardized features.

    Parameters, first and second moments live in flat vectors (matrix views
    share the storage) so each step is a handful of vectorized updates.
    """
    mean, std = _standardize_fit(x)
    xs = (x - mean) / std
    dim = xs.shape[1]

    init_rng = np.random.default_rng([cfg.seed, 1])
    shuffle_rng = np.random.default_rng([cfg.seed, 2])
    dropout_rng = np.random.default_rng([cfg.seed, 3])

    sizes = [cfg.hidden * dim, cfg.hidden, label_count * cfg.hidden, label_count]
    offsets = np.cumsum([0] + sizes)
    theta = np.zeros(offsets[-1])
    theta[: sizes[0]] = init_rng.normal(0.0, np.sqrt(2.0 / dim), size=sizes[0])
    theta[offsets[2]: offsets[3]] = init_rng.normal(
        0.0, np.sqrt(2.0 / cfg.hidden), size=sizes[2]
    )
    W1 = theta[offsets[0]: offsets[1]].reshape(cfg.hidden, dim)
    b1 = theta[offsets[1]: offsets[2]]
    W2 = theta[offsets[2]: offsets[3]].reshape(label_count, cfg.hidden)
    b2 = theta[offsets[3]: offsets[4]]
    params = (W1, b1, W2, b2)

    m_state = np.zeros_like(theta)
    v_state = np.zeros_like(theta)
    grad = np.empty_like(theta)

    keep = 1.0 - cfg.dropout
    lr, beta1, beta2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps
    step = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(xs))
        for start in range(0, len(xs), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb, yb = xs[batch], y[batch]
            if cfg.dropout > 0.0:
                mask = (dropout_rng.random((len(batch), cfg.hidden)) < keep) / keep
            else:
                mask = None
            gW1, gb1, gW2, gb2 = cross_entropy_gradients(params, xb, yb, mask)
            grad[offsets[0]: offsets[1]] = gW1.ravel()
            grad[offsets[1]: offsets[2]] = gb1
            grad[offsets[2]: offsets[3]] = gW2.ravel()
            grad[offsets[3]: offsets[4]] = gb2
            step += 1
            m_state *= beta1
            m_state += (1 - beta1) * grad
            v_state *= beta2
            v_state += (1 - beta2) * grad * grad
            mhat = m_state / (1 - beta1**step)
            vhat = v_state / (1 - beta2**step)
            theta -= lr * mhat / (np.sqrt(vhat) + eps)
    return W1.copy(), b1.copy(), W2.copy(), b2.copy(), mean, std


def train_multiclass(table: FeatureTable, cfg: TrainConfig = TrainConfig(),
                     group: str = "combined", metrics_k: int = 6) -> MlpModel:
    """Train the (n+1)-class model on a feature table (optionally sliced)."""
    labels = np.asarray(table.labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateData(f"need at least 2 classes, got {classes.size}")
    if labels.min() < 0:
        raise ValueError("labels must lie in {0..n}")
    label_count = int(labels.max()) + 1
    x = slice_features(table.matrix, group, metrics_k)
    W1, b1, W2, b2, mean, std = _train(x, labels, label_count, cfg)
    return MlpModel(
        W1=W1, b1=b1, W2=W2, b2=b2, mean=mean, std=std,
        label_count=label_count, n=table.n, variant="multiclass",
        group=group, metrics_k=metrics_k,
        registry_fingerprint=table.registry_fingerprint, seed=cfg.seed,
    )


def predict_probabilities(model: MlpModel, matrix: np.ndarray) -> np.ndarray:
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if m.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected {model.input_dim} features, got {m.shape[1]}")
    xs = (m - model.mean) / model.std
    probs, _ = forward((model.W1, model.b1, model.W2, model.b2), xs)
    return probs


def predict(model: MlpModel, vector: np.ndarray) -> Verdict:
    """Softmax over n+1 labels; argmax 0 means NonEdited, ties break toward
    the lowest label index."""
    probs = predict_probabilities(model, vector)[0]
    best = int(np.argmax(probs))
    if best == 0:
        return Verdict(Decision.NON_EDITED, probs)
    return Verdict(Decision.EDITED_BY, probs, model_index=best)


def predict_with_unseen(model: MlpModel, vector: np.ndarray,
                        threshold: UnseenThreshold | None = None) -> Verdict:
    """Route low-confidence non-edited predictions to EditedByUnseen."""
    if threshold is None:
        if model.tau is None:
            raise MissingThreshold("model carries no calibrated tau")
        threshold = UnseenThreshold(tau=model.tau)
    probs = predict_probabilities(model, vector)[0]
    best = int(np.argmax(probs))
    if best != 0:
        return Verdict(Decision.EDITED_BY, probs, model_index=best)
    if probs[0] > threshold.tau:
        return Verdict(Decision.NON_EDITED, probs)
    return Verdict(Decision.EDITED_BY_UNSEEN, probs)


def calibrate_unseen(model: MlpModel, negatives: FeatureTable,
                     target: float = 0.9) -> UnseenThreshold:
    """Pick the largest tau whose validation-negative detection accuracy
    (fraction with p_0 > tau) still meets the target.

    Candidate cuts are midpoints between consecutive distinct sorted p_0
    values (plus a cut below the minimum); with no feasible cut, tau = 0 is
    returned with the unachievable flag set.
    """
    labels = np.asarray(negatives.labels)
    if np.any(labels != 0):
        raise ContainsNegatives("calibration table must contain only label-0 rows")
    if len(negatives) < 20:
        raise ValueError(f"need >= 20 negatives to calibrate, got {len(negatives)}")
    x = slice_features(negatives.matrix, model.group, model.metrics_k)
    p0 = predict_probabilities(model, x)[:, 0]
    distinct = np.unique(p0)
    cuts = [distinct[0] / 2.0]
    cuts.extend((distinct[i] + distinct[i + 1]) / 2.0 for i in range(len(distinct) - 1))
    best_tau, best_acc = None, None
    for tau in cuts:  # ascending
        acc = float(np.mean(p0 > tau))
        if acc >= target:
            best_tau, best_acc = float(tau), acc
    if best_tau is None or best_tau <= 0.0:
        return UnseenThreshold(tau=0.0, target_neg_accuracy=target,
                               achieved_accuracy=float(np.mean(p0 > 0.0)),
                               unachievable=True)
    return UnseenThreshold(tau=best_tau, target_neg_accuracy=target,
                           achieved_accuracy=best_acc)


# ---------------------------------------------------------------------------
# binary variants
# ---------------------------------------------------------------------------

def block_view(matrix: np.ndarray, index: int) -> np.ndarray:
    """The 12-entry block of editor `index` (1-based) from 12n-wide rows."""
    m = np.atleast_2d(matrix)
    return m[:, (index - 1) * 12: index * 12]


def binary_samples(table: FeatureTable, model_index: int | None = None):
    """Per-block binary training samples.

    With model_index=None (the shared classifier): every block of every
    pair, positive iff the block belongs to the pair's generating editor.
    With a model_index: that editor's block from every pair, positive iff
    the pair was generated by that editor.
    """
    xs, ys = [], []
    labels = np.asarray(table.labels)
    for i in range(1, table.n + 1):
        if model_index is not None and i != model_index:
            continue
        blocks = block_view(table.matrix, i)
        xs.append(blocks)
        ys.append((labels == i).astype(np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def train_bin(table: FeatureTable, cfg: TrainConfig = TrainConfig()) -> MlpModel:
    """One shared binary classifier over all per-editor 12-dim blocks."""
    x, y = binary_samples(table)
    if np.unique(y).size < 2:
        raise DegenerateData("binary training needs both classes")
    W1, b1, W2, b2, mean, std = _train(x, y, 2, cfg)
    return MlpModel(W1=W1, b1=b1, W2=W2, b2=b2, mean=mean, std=std,
                    label_count=2, n=table.n, variant="bin",
                    registry_fingerprint=table.registry_fingerprint, seed=cfg.seed)


def train_bin_multiple(table: FeatureTable, cfg: TrainConfig = TrainConfig()) -> list[MlpModel]:
    """One binary classifier per candidate editor."""
    models = []
    for i in range(1, table.n + 1):
        x, y = binary_samples(table, model_index=i)
        if np.unique(y).size < 2:
            raise DegenerateData(f"editor {i} has a single-class training set")
        W1, b1, W2, b2, mean, std = _train(x, y, 2, cfg)
        models.append(MlpModel(W1=W1, b1=b1, W2=W2, b2=b2, mean=mean, std=std,
                               label_count=2, n=table.n, variant="bin-multiple",
                               registry_fingerprint=table.registry_fingerprint,
                               seed=cfg.seed))
    return models


def predict_bin(models, vector: np.ndarray) -> Verdict:
    """Score each editor's block; positive if any block classifies positive,
    attributed to the block with the highest positive probability.

    `models` is either one shared binary model or a list of n per-editor
    models. The verdict's pseudo-probabilities normalize
    [1 - max_i p_i, p_1, ..., p_n]; the decision follows the block rule,
    not the argmax of that vector.
    """
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.size % 12 != 0:
        raise DimensionMismatch(f"expected a 12n vector, got shape {v.shape}")
    n = v.size // 12
    if isinstance(models, MlpModel):
        model_list = [models] * n
    else:
        model_list = list(models)
        if len(model_list) != n:
            raise DimensionMismatch(f"expected {n} models, got {len(model_list)}")
    pos = np.empty(n)
    for i in range(1, n + 1):
        block = block_view(v[None, :], i)
        pos[i - 1] = predict_probabilities(model_list[i - 1], block)[0, 1]
    scores = np.concatenate([[1.0 - pos.max()], pos])
    probs = scores / scores.sum()
    if np.all(pos <= 0.5):
        return Verdict(Decision.NON_EDITED, probs)
    best = int(np.argmax(pos)) + 1
    return Verdict(Decision.EDITED_BY, probs, model_index=best)


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

_FMT = "%.9g"


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(_FMT % x for x in np.asarray(v).ravel())


def save_model(model: MlpModel, path) -> None:
    """Self-describing text checkpoint (9 significant digits)."""
    lines = [
        "!model v1",
        f"variant {model.variant}",
        f"label_count {model.label_count}",
        f"input_dim {model.input_dim}",
        f"hidden {model.W1.shape[0]}",
        f"n {model.n}",
        f"group {model.group}",
        f"metrics_k {model.metrics_k}",
        f"registry {model.registry_fingerprint or '-'}",
        f"seed {model.seed}",
    ]
    if model.tau is not None:
        lines.append(f"tau {_FMT % model.tau}")
        lines.append(f"tau_warning {int(model.tau_warning)}")
    lines.append("mean " + _fmt_vec(model.mean))
    lines.append("std " + _fmt_vec(model.std))
    for r in range(model.W1.shape[0]):
        lines.append("W1 " + _fmt_vec(model.W1[r]))
    lines.append("b1 " + _fmt_vec(model.b1))
    for r in range(model.W2.shape[0]):
        lines.append("W2 " + _fmt_vec(model.W2[r]))
    lines.append("b2 " + _fmt_vec(model.b2))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> MlpModel:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    lines = p.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "!model v1":
        raise ParseError("not a model checkpoint", 1)
    meta: dict[str, str] = {}
    w1_rows, w2_rows = [], []
    vectors: dict[str, np.ndarray] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        if key == "W1":
            w1_rows.append(np.array(rest.split(), dtype=np.float64))
        elif key == "W2":
            w2_rows.append(np.array(rest.split(), dtype=np.float64))
        elif key in ("mean", "std", "b1", "b2"):
            vectors[key] = np.array(rest.split(), dtype=np.float64)
        else:
            meta[key] = rest
    try:
        model = MlpModel(
            W1=np.stack(w1_rows), b1=vectors["b1"],
            W2=np.stack(w2_rows), b2=vectors["b2"],
            mean=vectors["mean"], std=vectors["std"],
            label_count=int(meta["label_count"]), n=int(meta["n"]),
            variant=meta.get("variant", "multiclass"),
            group=meta.get("group", "combined"),
            metrics_k=int(meta.get("metrics_k", 6)),
            registry_fingerprint="" if meta.get("registry") == "-" else meta.get("registry", ""),
            seed=int(meta.get("seed", 0)),
            tau=float(meta["tau"]) if "tau" in meta else None,
            tau_warning=bool(int(meta.get("tau_warning", 0))),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed checkpoint: {exc}") from exc
    if model.W1.shape != (int(meta["hidden"]), int(meta["input_dim"])):
        raise ParseError("checkpoint dimensions are inconsistent")
    return model
