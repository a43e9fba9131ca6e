"""End-to-end pipelines: corpus -> tensors -> trained models -> selection.

The shipped per-model choices pair each head with the architecture and
channel-selection strategy that won its comparison: A = lstm/positive,
B = cnn1d/intersected, C = lstm/intersected, D = lstm/intersected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attribution import (AttributionMap, ChannelScore, SelectionResult,
                          channel_scores, select_channels, shapley_attribute)
from .preprocess import (Excluded, FeatureTensor, TENSOR_CHANNELS, clip_to_tensor,
                         split_dataset)
from .training import (EvalReport, MODEL_IDS, TrainConfig, TrainedModel,
                       build_training_view, evaluate, pairs_to_arrays, train)

log = logging.getLogger(__name__)

DEFAULT_CHOICES = {
    "A": ("lstm", "positive"),
    "B": ("cnn1d", "intersected"),
    "C": ("lstm", "intersected"),
    "D": ("lstm", "intersected"),
}

EXPLAIN_SAMPLES = 64


def corpus_to_tensors(clips) -> tuple[list[FeatureTensor], list[Excluded]]:
    """Sanitize and assemble every clip; excluded clips are returned apart."""
    tensors, excluded = [], []
    for clip in clips:
        raw = clip.clip if hasattr(clip, "clip") else clip
        outcome = clip_to_tensor(raw)
        if isinstance(outcome, Excluded):
            excluded.append(outcome)
        else:
            tensors.append(outcome)
    return tensors, excluded


@dataclass
class ModelBundle:
    """One head's artifacts across the selection pipeline."""

    model_id: str
    arch: str
    strategy: str
    base_model: TrainedModel
    attribution: Optional[AttributionMap] = None
    scores: Optional[ChannelScore] = None
    selection: Optional[SelectionResult] = None
    model: TrainedModel = None
    base_report: Optional[EvalReport] = None
    report: Optional[EvalReport] = None


def stratified_sample(pairs, k: int, seed: int):
    """Up to k (tensor, class) pairs, classes as evenly represented as the
    data allows, deterministic under the seed."""
    rng = np.random.default_rng(seed)
    by_class = {}
    for tensor, cls in pairs:
        by_class.setdefault(cls, []).append(tensor)
    for members in by_class.values():
        rng.shuffle(members)
    out = []
    round_idx = 0
    while len(out) < k:
        added = False
        for cls in sorted(by_class):
            members = by_class[cls]
            if round_idx < len(members):
                out.append((members[round_idx], cls))
                added = True
                if len(out) == k:
                    break
        if not added:
            break
        round_idx += 1
    return out


def training_mean_baseline(pairs, channels: Sequence[str]) -> np.ndarray:
    """Per-(channel, timestep) mean of the training split, model space."""
    X, _ = pairs_to_arrays(pairs, channels)
    return X.mean(axis=0)


def train_model_with_selection(
    model_id: str,
    corpus: Sequence[FeatureTensor],
    arch: str,
    strategy: str,
    seed: int,
    config: TrainConfig = TrainConfig(),
    n_permutations: int = 4,
    explain_samples: int = EXPLAIN_SAMPLES,
) -> ModelBundle:
    """Train on all 12 channels, attribute, select, and retrain if needed."""
    view = build_training_view(model_id, corpus)
    splits = split_dataset(view, seed=seed, key=lambda pair: pair[1])
    base = train(model_id, arch, splits, seed=seed, config=config)
    bundle = ModelBundle(model_id, arch, strategy, base_model=base)
    bundle.base_report = evaluate(base, splits["test"])

    if strategy == "all":
        bundle.model = base
        bundle.report = bundle.base_report
        return bundle

    baseline = training_mean_baseline(splits["train"], base.channels)
    explain = stratified_sample(splits["train"], explain_samples, seed=seed + 17)
    X_explain, _ = pairs_to_arrays(explain, base.channels)
    bundle.attribution = shapley_attribute(base, X_explain, baseline,
                                           n_permutations=n_permutations, seed=seed + 29)
    bundle.scores = channel_scores(bundle.attribution)
    bundle.selection = select_channels(bundle.scores, strategy)
    log.info("model %s strategy %s selected channels %s%s", model_id, strategy,
             bundle.selection.channels, " (fallback)" if bundle.selection.fallback else "")

    bundle.model = train(model_id, arch, splits, seed=seed, config=config,
                         channels=bundle.selection.channels)
    bundle.report = evaluate(bundle.model, splits["test"])
    return bundle


def train_all_models(
    corpus: Sequence[FeatureTensor],
    seed: int,
    choices: Optional[dict] = None,
    config: TrainConfig = TrainConfig(),
    n_permutations: int = 4,
) -> dict[str, ModelBundle]:
    """All four heads with their architecture/strategy choices."""
    choices = choices or DEFAULT_CHOICES
    bundles = {}
    for model_id in MODEL_IDS:
        arch, strategy = choices[model_id]
        bundles[model_id] = train_model_with_selection(
            model_id, corpus, arch, strategy, seed=seed, config=config,
            n_permutations=n_permutations)
    return bundles
