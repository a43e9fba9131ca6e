"""The four diagnosis models: training views, training loop, F1 evaluation.

Model A tells good squats from shallow ones and trains only on those two
labels. Model B flags posterior/anterior pelvic tilt (3 classes), Model C
flags hips rising too fast (binary), and Model D flags hip- or
knee-dominant descents (3 classes); B, C, D train on the full corpus with
every other label mapped to class 0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .errors import ChannelMismatch, EmptyClass
from .forest import RandomForest
from .nets import Adam, Cnn1d, LstmNet
from .preprocess import FeatureTensor, TENSOR_CHANNELS

MODEL_IDS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    n_classes: int
    class_map: dict  # raw label -> class index (labels absent map to 0)
    restrict_labels: Optional[frozenset] = None  # train only on these labels
    purpose: str = ""

    def label_to_class(self, label: int) -> int:
        return self.class_map.get(int(label), 0)


MODEL_SPECS = {
    "A": ModelSpec("A", 2, {1: 0, 2: 1}, restrict_labels=frozenset({1, 2}),
                   purpose="squat too shallow"),
    "B": ModelSpec("B", 3, {3: 1, 4: 2}, purpose="abnormal pelvic tilt"),
    "C": ModelSpec("C", 2, {5: 1}, purpose="hip rising too fast"),
    "D": ModelSpec("D", 3, {6: 1, 7: 2}, purpose="excessive hip/knee dominance"),
}

# Recurrent-head dropout per model; the binary heads take the higher rate.
LSTM_DROPOUT = {"A": 0.5, "B": 0.4, "C": 0.5, "D": 0.4}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    class_weighted: bool = True
    lstm_units: int = 100
    cnn_filters: tuple = (64, 128)
    cnn_dense: int = 512


def build_training_view(model_id: str, corpus: Sequence[FeatureTensor]):
    """(tensor, class) pairs for one model; Model A keeps only labels 1-2."""
    spec = MODEL_SPECS[model_id]
    pairs = []
    for tensor in corpus:
        if tensor.label is None:
            raise ValueError(f"unlabeled tensor {tensor.clip_id}")
        label = int(tensor.label)
        if spec.restrict_labels is not None and label not in spec.restrict_labels:
            continue
        pairs.append((tensor, spec.label_to_class(label)))
    present = {c for _, c in pairs}
    for cls in range(spec.n_classes):
        if cls not in present:
            raise EmptyClass(f"model {model_id}: class {cls} has no examples")
    return pairs


# -- metrics -------------------------------------------------------------------

@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray


def confusion_counts(y_true, y_pred, n_classes: int) -> ConfusionCounts:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    tp = np.zeros(n_classes, dtype=int)
    fp = np.zeros(n_classes, dtype=int)
    fn = np.zeros(n_classes, dtype=int)
    for c in range(n_classes):
        tp[c] = int(((y_pred == c) & (y_true == c)).sum())
        fp[c] = int(((y_pred == c) & (y_true != c)).sum())
        fn[c] = int(((y_pred != c) & (y_true == c)).sum())
    return ConfusionCounts(tp, fp, fn)


def f1_score(counts: ConfusionCounts, cls: int) -> float:
    """2TP / (2TP + FP + FN); 0 when the denominator is 0."""
    denom = 2 * counts.tp[cls] + counts.fp[cls] + counts.fn[cls]
    if denom == 0:
        return 0.0
    return 2.0 * counts.tp[cls] / denom


def macro_f1(counts: ConfusionCounts) -> float:
    return float(np.mean([f1_score(counts, c) for c in range(len(counts.tp))]))


# -- trained model container ----------------------------------------------------

@dataclass
class TrainedModel:
    model_id: str
    arch: str  # cnn1d | lstm | forest
    n_classes: int
    channels: tuple
    net: object
    train_seed: int
    config: TrainConfig
    best_epoch: int = 0
    val_macro_f1: float = 0.0
    schema_version: int = 1

    @property
    def version(self) -> str:
        return f"{self.model_id}:{self.arch}:s{self.train_seed}:v{self.schema_version}"

    @property
    def channel_indices(self) -> np.ndarray:
        try:
            return np.array([TENSOR_CHANNELS.index(c) for c in self.channels])
        except ValueError as err:
            raise ChannelMismatch(f"model {self.model_id} expects unknown channel: {err}")

    @property
    def n_outputs(self) -> int:
        """Attribution outputs: one sigmoid unit for binary, K for softmax."""
        return 1 if self.n_classes == 2 else self.n_classes

    def slice_input(self, X: np.ndarray) -> np.ndarray:
        """Select this model's channels from full 12-channel tensors."""
        if X.shape[-2] != len(TENSOR_CHANNELS):
            raise ChannelMismatch(
                f"expected {len(TENSOR_CHANNELS)}-channel tensors, got {X.shape[-2]}")
        return X[..., self.channel_indices, :]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        """Class probabilities for (B, 12, 50) tensors."""
        return self.net.predict_proba(self.slice_input(np.asarray(X, dtype=float)))

    def predict(self, tensor) -> np.ndarray:
        data = tensor.data if isinstance(tensor, FeatureTensor) else np.asarray(tensor)
        return self.predict_batch(data[None])[0]

    def output_probs(self, X_model_space: np.ndarray) -> np.ndarray:
        """(B, n_outputs) probabilities over already-sliced model inputs."""
        probs = self.net.predict_proba(X_model_space)
        return probs[:, 1:2] if self.n_classes == 2 else probs


def pairs_to_arrays(pairs, channels: Sequence[str]):
    idx = [TENSOR_CHANNELS.index(c) for c in channels]
    X = np.stack([t.data[idx] for t, _ in pairs])
    y = np.array([c for _, c in pairs], dtype=int)
    return X, y


def _class_weights(y: np.ndarray, n_classes: int, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.ones(n_classes)
    counts = np.bincount(y, minlength=n_classes).astype(float)
    counts[counts == 0] = 1.0
    return len(y) / (n_classes * counts)


def train(
    model_id: str,
    arch: str,
    splits: dict,
    seed: int,
    config: TrainConfig = TrainConfig(),
    channels: Sequence[str] = TENSOR_CHANNELS,
) -> TrainedModel:
    """Train one diagnosis model on (tensor, class) split dict.

    Neural nets run Adam on class-weighted cross-entropy with early stopping
    on validation macro-F1 (patience from the config, best weights restored).
    The forest grows its trees in one pass. Deterministic under the seed.
    """
    spec = MODEL_SPECS[model_id]
    channels = tuple(channels)
    if not channels:
        raise ValueError("selected channel set is empty")
    X_train, y_train = pairs_to_arrays(splits["train"], channels)
    X_val, y_val = pairs_to_arrays(splits["val"], channels)

    if arch == "forest":
        net = RandomForest(len(channels), spec.n_classes, seed).fit(X_train, y_train)
        model = TrainedModel(model_id, arch, spec.n_classes, channels, net, seed, config)
        val_pred = net.predict_proba(X_val).argmax(axis=1)
        model.val_macro_f1 = macro_f1(confusion_counts(y_val, val_pred, spec.n_classes))
        return model

    if arch == "cnn1d":
        net = Cnn1d(len(channels), spec.n_classes, seed=_sub(seed, 1),
                    filters1=config.cnn_filters[0], filters2=config.cnn_filters[1],
                    dense_units=config.cnn_dense)
    elif arch == "lstm":
        net = LstmNet(len(channels), spec.n_classes, seed=_sub(seed, 1),
                      units=config.lstm_units, dropout=LSTM_DROPOUT[model_id])
    else:
        raise ValueError(f"unknown architecture {arch!r}")

    weights = _class_weights(y_train, spec.n_classes, config.class_weighted)
    optimizer = Adam(net.params, lr=config.learning_rate)
    best_params = {k: v.copy() for k, v in net.params.items()}
    best_f1 = -1.0
    best_epoch = 0
    since_best = 0

    for epoch in range(config.max_epochs):
        order = np.random.default_rng([seed, 2, epoch]).permutation(len(X_train))
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start:start + config.batch_size]
            drop_rng = (np.random.default_rng([seed, 3, epoch, bi])
                        if arch == "lstm" else None)
            _, grads = net.loss_and_grads(X_train[batch], y_train[batch],
                                          weights[y_train[batch]], train_rng=drop_rng)
            optimizer.step(net.params, grads)

        val_pred = net.predict_proba(X_val).argmax(axis=1)
        score = macro_f1(confusion_counts(y_val, val_pred, spec.n_classes))
        if score > best_f1 + 1e-9:
            best_f1 = score
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in net.params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    net.params = best_params
    model = TrainedModel(model_id, arch, spec.n_classes, channels, net, seed, config,
                         best_epoch=best_epoch, val_macro_f1=best_f1)
    return model


def _sub(seed: int, salt: int) -> list:
    return [seed, salt]


@dataclass
class EvalReport:
    model_id: str
    per_class_f1: list
    macro_f1: float
    mean_latency_ms: float
    counts: ConfusionCounts
    n_examples: int

    def as_dict(self):
        return {
            "model_id": self.model_id,
            "per_class_f1": [float(v) for v in self.per_class_f1],
            "macro_f1": float(self.macro_f1),
            "mean_latency_ms": float(self.mean_latency_ms),
            "tp": self.counts.tp.tolist(),
            "fp": self.counts.fp.tolist(),
            "fn": self.counts.fn.tolist(),
            "n_examples": self.n_examples,
        }


def evaluate(model: TrainedModel, test_pairs, latency_repeats: int = 3) -> EvalReport:
    """Per-class F1 over argmax predictions plus mean per-example latency.

    Latency is the batched inference wall time over the whole split divided
    by the example count, minimized over a few repeats to suppress noise.
    """
    X = np.stack([t.data for t, _ in test_pairs])
    y = np.array([c for _, c in test_pairs], dtype=int)
    best = np.inf
    for _ in range(max(1, latency_repeats)):
        t0 = time.perf_counter()
        probs = model.predict_batch(X)
        best = min(best, time.perf_counter() - t0)
    pred = probs.argmax(axis=1)
    counts = confusion_counts(y, pred, model.n_classes)
    per_class = [f1_score(counts, c) for c in range(model.n_classes)]
    return EvalReport(model.model_id, per_class, macro_f1(counts),
                      best / len(X) * 1000.0, counts, len(X))
