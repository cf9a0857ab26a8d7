"""Contrastive re-identification training over labeled clips.

The loss pulls same-identity token outputs together and pushes different
identities apart with a hinge at margin m:

    L = sum_pos d(h_a, h_p) + sum_neg max(0, m - d(h_a, h_n))

with d the L2 distance between aggregated tokens. Pairs are enumerated
exhaustively over the clip: positives are same-identity pairs from
different frames, negatives are all different-identity pairs (within-frame
ones included). Optimization is plain full-gradient descent; gradients are
exact reverse-mode through the whole transformer via
:func:`tritrack.transformer.backward`.

Subgradient conventions: the gradient of the L2 distance at coincident
points is 0, and the hinge contributes 0 at and beyond the margin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import transformer
from .embeddings import ClipBatch
from .errors import DivergenceError, TrainingDataError
from .transformer import AttentionConfig, TransformerWeights

DEFAULT_MARGIN = 10.0
DEFAULT_LEARNING_RATE = 0.001


@dataclass(frozen=True)
class LossConfig:
    """Margin, step size and step count for the training loop."""

    margin: float = DEFAULT_MARGIN
    learning_rate: float = DEFAULT_LEARNING_RATE
    iterations: int = 1

    def __post_init__(self):
        if self.margin <= 0:
            raise TrainingDataError("margin must be positive")
        if self.learning_rate < 0:
            raise TrainingDataError("learning rate must be >= 0")
        if self.iterations < 0:
            raise TrainingDataError("iterations must be >= 0")


@dataclass
class PairSet:
    """Anchor pairs by grid coordinates ((t, i), (t', i'))."""

    positives: list = field(default_factory=list)
    negatives: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)


def build_pairs(batch: ClipBatch) -> PairSet:
    """Exhaustively enumerate identity pairs in a labeled clip.

    Positives: unordered same-identity pairs from different frames.
    Negatives: unordered different-identity pairs, same-frame included.
    Tokens that are padding or carry a negative identity label are skipped.
    """
    if batch.identities is None:
        raise TrainingDataError("clip carries no identity labels")
    coords = []
    for t in range(batch.num_frames):
        for i in range(batch.max_people):
            if batch.valid[t, i] and batch.identities[t, i] >= 0:
                coords.append((t, i, int(batch.identities[t, i])))
    if not coords:
        raise TrainingDataError("clip has no labeled valid tokens")
    pairs = PairSet()
    for a in range(len(coords)):
        ta, ia, ida = coords[a]
        for b in range(a + 1, len(coords)):
            tb, ib, idb = coords[b]
            if ida == idb:
                if ta != tb:
                    pairs.positives.append(((ta, ia), (tb, ib)))
            else:
                pairs.negatives.append(((ta, ia), (tb, ib)))
    return pairs


def reid_loss(outputs: np.ndarray, pairs: PairSet,
              cfg: LossConfig = LossConfig()) -> float:
    """Contrastive loss over aggregated token outputs (a (T, P, D) grid)."""
    loss, _ = loss_and_output_grad(outputs, pairs, cfg)
    return loss


def loss_and_output_grad(outputs: np.ndarray, pairs: PairSet,
                         cfg: LossConfig = LossConfig()):
    """Loss plus its gradient with respect to every token output."""
    outputs = np.asarray(outputs, dtype=np.float64)
    grad = np.zeros_like(outputs)
    loss = 0.0
    for (ta, ia), (tb, ib) in pairs.positives:
        diff = outputs[ta, ia] - outputs[tb, ib]
        dist = float(np.linalg.norm(diff))
        loss += dist
        if dist > 0.0:
            g = diff / dist
            grad[ta, ia] += g
            grad[tb, ib] -= g
    m = cfg.margin
    for (ta, ia), (tb, ib) in pairs.negatives:
        diff = outputs[ta, ia] - outputs[tb, ib]
        dist = float(np.linalg.norm(diff))
        if dist < m:
            loss += m - dist
            if dist > 0.0:
                g = diff / dist
                grad[ta, ia] -= g
                grad[tb, ib] += g
    return loss, grad


def loss_gradients(batch: ClipBatch, weights: TransformerWeights,
                   cfg: LossConfig = LossConfig(),
                   attn_cfg: AttentionConfig = AttentionConfig()):
    """Exact gradients of the clip loss with respect to every weight tensor.

    Returns ``(grads, loss)`` where ``grads`` is weight-shaped.
    """
    pairs = build_pairs(batch)
    outputs, caches = transformer.forward_with_cache(batch, weights, attn_cfg)
    loss, d_outputs = loss_and_output_grad(outputs, pairs, cfg)
    grads = transformer.backward(d_outputs, caches, weights, attn_cfg)
    return grads, loss


def clip_loss(batch: ClipBatch, weights: TransformerWeights,
              cfg: LossConfig = LossConfig(),
              attn_cfg: AttentionConfig = AttentionConfig()) -> float:
    """Forward-only loss of one clip (used by finite-difference checks)."""
    pairs = build_pairs(batch)
    outputs = transformer.forward(batch, weights, attn_cfg)
    loss, _ = loss_and_output_grad(outputs, pairs, cfg)
    return loss


def copy_weights(weights: TransformerWeights) -> TransformerWeights:
    out = weights.zeros_like()
    out.add_scaled(weights, 1.0)
    return out


def train(clips, weights_init: TransformerWeights,
          cfg: LossConfig = LossConfig(),
          attn_cfg: AttentionConfig = AttentionConfig()):
    """Plain gradient descent: ``w <- w - lr * grad(L)`` once per clip per
    iteration, clips visited in the given order.

    Returns ``(weights, loss_history)`` where the history holds the pre-step
    loss of every clip step. Raises :class:`DivergenceError` when a loss
    turns non-finite. Fully deterministic for fixed inputs.
    """
    clips = list(clips)
    if not clips:
        raise TrainingDataError("need at least one labeled clip")
    weights = copy_weights(weights_init)
    history = []
    step = 0
    for _ in range(cfg.iterations):
        for clip in clips:
            grads, loss = loss_gradients(clip, weights, cfg, attn_cfg)
            if not np.isfinite(loss):
                raise DivergenceError("loss became non-finite", step)
            history.append(loss)
            weights.add_scaled(grads, -cfg.learning_rate)
            step += 1
    return weights, history
