"""Shapley-value attribution over (channel, timestep) inputs.

Masked players take their baseline value. Exact values enumerate every
subset (feasible up to 20 players); the model-scale estimator samples
random permutations and walks each one, so a 12 x 50 tensor has 600
players per explained output. Channel scores average the map over
timesteps, and two selection strategies reduce the channel set: the
intersection of each output's top-6 channels, or every channel whose
score is non-negative for all outputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import TooManyPlayers

log = logging.getLogger(__name__)

TOP_K = 6
FALLBACK_K = 3


def _as_2d(values: np.ndarray) -> np.ndarray:
    return values[:, None] if values.ndim == 1 else values


def exact_shapley(f: Callable, x: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Classic Shapley values by full subset enumeration.

    ``f`` maps a (m, n) batch of inputs to (m,) or (m, K) outputs. Returns
    (n,) or (n, K) matching f's output shape. Satisfies the efficiency,
    symmetry, and dummy axioms by construction.
    """
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    n = x.size
    if n > 20:
        raise TooManyPlayers(f"{n} players; exact enumeration capped at 20")

    masks = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    values = _as_2d(np.asarray(f(np.where(masks.astype(bool), x, baseline))))
    sizes = masks.sum(axis=1)

    fact = [math.factorial(k) for k in range(n + 1)]
    weight = np.array([fact[s] * fact[n - 1 - s] / fact[n] for s in range(n)])

    phi = np.zeros((n, values.shape[1]))
    indices = np.arange(2 ** n)
    for i in range(n):
        without = indices[(indices >> i) & 1 == 0]
        gain = values[without | (1 << i)] - values[without]
        phi[i] = (weight[sizes[without], None] * gain).sum(axis=0)
    squeeze = np.asarray(f(x[None])).ndim == 1
    return phi[:, 0] if squeeze else phi


def permutation_shapley(
    f: Callable,
    x: np.ndarray,
    baseline: np.ndarray,
    n_permutations: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo permutation-sampling estimate with a standard error.

    Walks each sampled permutation, crediting every player its marginal
    gain when it joins the growing coalition. Deterministic under the seed.
    """
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    n = x.size
    if n_permutations < 1:
        raise ValueError("need at least one permutation")
    rng = np.random.default_rng(seed)

    probe = np.asarray(f(x[None]))
    k_out = 1 if probe.ndim == 1 else probe.shape[1]
    total = np.zeros((n, k_out))
    total_sq = np.zeros((n, k_out))
    steps = np.arange(n + 1)[:, None]
    for _ in range(n_permutations):
        perm = rng.permutation(n)
        position = np.empty(n, dtype=int)
        position[perm] = np.arange(n)
        prefix = position[None, :] < steps              # (n+1, n)
        vals = _as_2d(np.asarray(f(np.where(prefix, x, baseline))))
        contrib = np.empty((n, k_out))
        contrib[perm] = np.diff(vals, axis=0)
        total += contrib
        total_sq += contrib * contrib

    phi = total / n_permutations
    var = total_sq / n_permutations - phi * phi
    se = np.sqrt(np.maximum(var, 0.0) / n_permutations)
    if probe.ndim == 1:
        return phi[:, 0], se[:, 0]
    return phi, se


@dataclass
class AttributionMap:
    model_id: str
    output_names: list
    channels: tuple
    values: np.ndarray     # (n_outputs, channels, timesteps)
    stderr: np.ndarray
    baseline: np.ndarray   # (channels, timesteps)
    n_permutations: int
    n_samples: int
    seed: int


@dataclass
class ChannelScore:
    model_id: str
    output_names: list
    channels: tuple
    scores: np.ndarray     # (n_outputs, channels)


@dataclass
class SelectionResult:
    strategy: str
    channels: list
    fallback: bool = False


def shapley_attribute(
    model,
    samples: np.ndarray,
    baseline: np.ndarray,
    n_permutations: int = 4,
    seed: int = 0,
    max_rows: int = 1536,
) -> AttributionMap:
    """Permutation-sampled attribution map averaged over a sample set.

    ``samples`` is (S, C, T) in the model's own channel space and
    ``baseline`` is (C, T). Every model output gets a map; one batched
    forward pass per permutation walk serves all outputs at once. The
    standard error is over permutations of the sample-averaged estimate.
    """
    samples = np.asarray(samples, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if samples.ndim != 3 or samples.shape[1:] != baseline.shape:
        raise ValueError("samples must be (S, C, T) matching the baseline shape")
    S, C, T = samples.shape
    n = C * T
    k_out = model.n_outputs
    flat_samples = samples.reshape(S, n)
    flat_base = baseline.reshape(n)
    rng = np.random.default_rng(seed)
    chunk = max(1, max_rows // (n + 1))
    steps = np.arange(n + 1)[:, None]

    total = np.zeros((n, k_out))
    total_sq = np.zeros((n, k_out))
    for _ in range(max(1, n_permutations)):
        perm = rng.permutation(n)
        position = np.empty(n, dtype=int)
        position[perm] = np.arange(n)
        prefix = position[None, :] < steps                      # (n+1, n)
        acc = np.zeros((n, k_out))
        for start in range(0, S, chunk):
            block = flat_samples[start:start + chunk]           # (b, n)
            masked = np.where(prefix[None], block[:, None, :], flat_base)
            vals = model.output_probs(masked.reshape(-1, C, T)).reshape(
                len(block), n + 1, k_out)
            acc[perm] += np.diff(vals, axis=1).sum(axis=0)
        acc /= S
        total += acc
        total_sq += acc * acc

    p = max(1, n_permutations)
    phi = total / p
    var = total_sq / p - phi * phi
    se = np.sqrt(np.maximum(var, 0.0) / p)
    names = (["class_1"] if k_out == 1 else [f"class_{c}" for c in range(k_out)])
    return AttributionMap(
        model_id=getattr(model, "model_id", "?"),
        output_names=names,
        channels=tuple(getattr(model, "channels", range(C))),
        values=phi.T.reshape(k_out, C, T),
        stderr=se.T.reshape(k_out, C, T),
        baseline=baseline,
        n_permutations=p,
        n_samples=S,
        seed=seed,
    )


def channel_scores(attribution: AttributionMap) -> ChannelScore:
    """Mean attribution per channel per output (timesteps averaged out)."""
    return ChannelScore(
        model_id=attribution.model_id,
        output_names=list(attribution.output_names),
        channels=attribution.channels,
        scores=attribution.values.mean(axis=2),
    )


def _ranked(channels, key_scores) -> list:
    order = np.argsort(-key_scores, kind="stable")
    return [channels[i] for i in order]


def select_channels(scores: ChannelScore, strategy: str) -> SelectionResult:
    """Channel subset per strategy, ordered by output-mean score descending.

    ``intersected`` intersects every output's top-6 channels; ``positive``
    keeps channels scoring >= 0 for every output; ``all`` keeps everything.
    An empty result falls back to the top-3 by mean score (logged).
    """
    channels = list(scores.channels)
    mean_scores = scores.scores.mean(axis=0)
    by_mean = _ranked(channels, mean_scores)

    if strategy == "all":
        return SelectionResult("all", by_mean)
    if strategy == "intersected":
        kept = set(channels)
        for row in scores.scores:
            kept &= set(_ranked(channels, row)[:TOP_K])
    elif strategy == "positive":
        kept = {c for i, c in enumerate(channels)
                if bool(np.all(scores.scores[:, i] >= 0.0))}
    else:
        raise ValueError(f"unknown selection strategy {strategy!r}")

    if not kept:
        fallback = by_mean[:FALLBACK_K]
        log.warning("selection %r for model %s came up empty; falling back to %s",
                    strategy, scores.model_id, fallback)
        return SelectionResult(strategy, fallback, fallback=True)
    ordered = [c for c in by_mean if c in kept]
    return SelectionResult(strategy, ordered)
