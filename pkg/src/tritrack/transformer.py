"""Per-attribute attention transformer over clip token grids.

Three blocks, each a self-attention sublayer followed by a feed-forward
sublayer. Attention is single-head but computed separately per attribute:
appearance, pose and location segments each have their own query/key/value
projections. The three row-stochastic attention maps are fused into one
total map by the beta weights, and that single map aggregates the
concatenated value vectors (with a residual connection). The feed-forward
sublayer and the mean-variance normalization also treat each attribute
segment separately; normalization is applied post-sublayer at the end of
each block.

Setting one beta to 1 and the rest to 0 makes the total attention equal the
corresponding single-attribute attention, which is how the cue ablations
(appearance-only / pose-only / location-only) are expressed.

Every layer has a hand-derived backward pass so training can compute exact
reverse-mode gradients without an autodiff framework; the *_backward
functions mirror their forward counterparts and consume the caches the
forwards produce.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import ATTRIBUTES, AttributeDims, ClipBatch, DEFAULT_DIMS
from .errors import DimensionError, EmptyClipError

NUM_BLOCKS = 3
NORM_EPS = 1e-5

# Payload order of the per-attribute tensors in checkpoints and gradient
# containers. Changing it breaks the weights file format.
TENSOR_ORDER = ("wq", "wk", "wv", "ff1", "b1", "ff2", "b2", "gain", "bias")


@dataclass(frozen=True)
class AttentionConfig:
    """Fusion weights for the three per-attribute attention maps."""

    beta_app: float = 1.0 / 3.0
    beta_pose: float = 1.0 / 3.0
    beta_loc: float = 1.0 / 3.0

    def __post_init__(self):
        betas = (self.beta_app, self.beta_pose, self.beta_loc)
        if any(b < 0 or not np.isfinite(b) for b in betas):
            raise DimensionError("beta weights must be finite and >= 0")
        if all(b == 0 for b in betas):
            raise DimensionError("at least one beta weight must be positive")

    def beta(self, attribute: str) -> float:
        return {"app": self.beta_app, "pose": self.beta_pose,
                "loc": self.beta_loc}[attribute]

    @property
    def total(self) -> float:
        return self.beta_app + self.beta_pose + self.beta_loc


@dataclass
class AttributeParams:
    """Projection, feed-forward and normalization tensors for one attribute.

    Matrices act on column vectors (projection of token x is ``W @ x``);
    the feed-forward hidden width equals the attribute width.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    ff1: np.ndarray
    b1: np.ndarray
    ff2: np.ndarray
    b2: np.ndarray
    gain: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        d = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "ff1", "ff2"):
            m = getattr(self, name)
            if m.shape != (d, d):
                raise DimensionError(f"{name} must be square ({d}, {d}), got {m.shape}")
        for name in ("b1", "b2", "gain", "bias"):
            v = getattr(self, name)
            if v.shape != (d,):
                raise DimensionError(f"{name} must have shape ({d},), got {v.shape}")

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    def tensors(self):
        for name in TENSOR_ORDER:
            yield name, getattr(self, name)

    @classmethod
    def zeros(cls, dim: int) -> "AttributeParams":
        sq = lambda: np.zeros((dim, dim))
        vec = lambda: np.zeros(dim)
        return cls(wq=sq(), wk=sq(), wv=sq(), ff1=sq(), b1=vec(),
                   ff2=sq(), b2=vec(), gain=vec(), bias=vec())


@dataclass
class BlockWeights:
    """One transformer block: per-attribute parameter bundles."""

    app: AttributeParams
    pose: AttributeParams
    loc: AttributeParams

    def attr(self, name: str) -> AttributeParams:
        return getattr(self, name)


@dataclass
class TransformerWeights:
    """All blocks plus the attribute layout they were built for."""

    blocks: list[BlockWeights]
    dims: AttributeDims = DEFAULT_DIMS

    def __post_init__(self):
        if len(self.blocks) != NUM_BLOCKS:
            raise DimensionError(f"expected {NUM_BLOCKS} blocks, got {len(self.blocks)}")
        widths = {"app": self.dims.app, "pose": self.dims.pose, "loc": self.dims.loc}
        for block in self.blocks:
            for att in ATTRIBUTES:
                if block.attr(att).dim != widths[att]:
                    raise DimensionError(
                        f"{att} parameters have dim {block.attr(att).dim}, "
                        f"expected {widths[att]}")

    def named_tensors(self):
        """(name, array) pairs in the canonical checkpoint order."""
        for b, block in enumerate(self.blocks):
            for att in ATTRIBUTES:
                for name, tensor in block.attr(att).tensors():
                    yield f"block{b}.{att}.{name}", tensor

    @classmethod
    def zeros(cls, dims: AttributeDims = DEFAULT_DIMS) -> "TransformerWeights":
        widths = {"app": dims.app, "pose": dims.pose, "loc": dims.loc}
        blocks = [BlockWeights(**{att: AttributeParams.zeros(widths[att])
                                  for att in ATTRIBUTES})
                  for _ in range(NUM_BLOCKS)]
        return cls(blocks=blocks, dims=dims)

    def zeros_like(self) -> "TransformerWeights":
        return TransformerWeights.zeros(self.dims)

    def add_scaled(self, other: "TransformerWeights", factor: float) -> None:
        """In-place ``self += factor * other`` over every tensor."""
        for (_, mine), (_, theirs) in zip(self.named_tensors(),
                                          other.named_tensors()):
            mine += factor * theirs


def init_weights(dims: AttributeDims = DEFAULT_DIMS,
                 seed: int = 0) -> TransformerWeights:
    """Seeded initialization: matrices uniform(-1/sqrt(d), 1/sqrt(d)),
    gains 1, all bias vectors 0. Deterministic for a given seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    widths = {"app": dims.app, "pose": dims.pose, "loc": dims.loc}

    def one_attr(d: int) -> AttributeParams:
        lim = 1.0 / np.sqrt(d)
        sq = lambda: rng.uniform(-lim, lim, size=(d, d))
        return AttributeParams(wq=sq(), wk=sq(), wv=sq(),
                               ff1=sq(), b1=np.zeros(d),
                               ff2=sq(), b2=np.zeros(d),
                               gain=np.ones(d), bias=np.zeros(d))

    blocks = [BlockWeights(**{att: one_attr(widths[att]) for att in ATTRIBUTES})
              for _ in range(NUM_BLOCKS)]
    return TransformerWeights(blocks=blocks, dims=dims)


def attribute_attention(q: np.ndarray, k: np.ndarray, dim: int | None = None,
                        mask: np.ndarray | None = None) -> np.ndarray:
    """Masked softmax attention matrix for one attribute.

    Row r holds softmax over valid columns of (q_r . k_c) / sqrt(dim);
    invalid columns get exactly zero weight and rows of invalid tokens are
    all-zero. Uses max-subtraction for stability.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape or q.ndim != 2:
        raise DimensionError(f"q and k must share shape (N, d), got {q.shape} vs {k.shape}")
    n, d = q.shape
    if dim is None:
        dim = d
    if mask is None:
        mask = np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n,):
        raise DimensionError("mask must have one entry per token")
    if not mask.any():
        raise EmptyClipError("attention over a clip with no valid tokens")

    scores = (q @ k.T) / np.sqrt(float(dim))
    scores[:, ~mask] = -np.inf
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    weights[~mask, :] = 0.0
    return weights


def total_attention(per_attribute, cfg: AttentionConfig) -> np.ndarray:
    """Beta-weighted sum of the three per-attribute attention matrices.

    ``per_attribute`` maps attribute name to its N x N matrix (a dict or a
    3-tuple in (app, pose, loc) order).
    """
    if not isinstance(per_attribute, dict):
        per_attribute = dict(zip(ATTRIBUTES, per_attribute))
    shapes = {per_attribute[a].shape for a in ATTRIBUTES}
    if len(shapes) != 1:
        raise DimensionError(f"attention matrices disagree on shape: {shapes}")
    out = np.zeros(next(iter(shapes)))
    for att in ATTRIBUTES:
        out += cfg.beta(att) * per_attribute[att]
    return out


def attribute_weighted(tokens: np.ndarray, cfg: AttentionConfig,
                       dims: AttributeDims = DEFAULT_DIMS) -> np.ndarray:
    """Scale each attribute segment by sqrt(beta).

    Plain L2 distances between the scaled tokens then satisfy
    ``d^2 = sum_att beta_att * ||delta_att||^2``, which is how the beta
    weighting enters association when no transformer weights are in play.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.shape[-1] != dims.total:
        raise DimensionError(
            f"tokens must have width {dims.total}, got {tokens.shape[-1]}")
    out = tokens.copy()
    for att, seg in dims.slices().items():
        out[..., seg] *= np.sqrt(cfg.beta(att))
    return out


def _flatten(tokens: np.ndarray, valid: np.ndarray, dims: AttributeDims):
    tokens = np.asarray(tokens, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if tokens.shape[-1] != dims.total:
        raise DimensionError(
            f"tokens must have width {dims.total}, got {tokens.shape[-1]}")
    shape = tokens.shape
    flat = tokens.reshape(-1, dims.total)
    mask = valid.reshape(-1)
    if mask.shape[0] != flat.shape[0]:
        raise DimensionError("valid mask must match the token grid")
    return flat, mask, shape


def _attention_core(x: np.ndarray, mask: np.ndarray, w: BlockWeights,
                    cfg: AttentionConfig, dims: AttributeDims):
    """Shared forward computation of the self-attention sublayer."""
    segs = dims.slices()
    cache = {"x": x, "mask": mask, "per_attr": {}}
    per_attr_attention = {}
    for att in ATTRIBUTES:
        p = w.attr(att)
        xa = x[:, segs[att]]
        q = xa @ p.wq.T
        k = xa @ p.wk.T
        v = xa @ p.wv.T
        a = attribute_attention(q, k, p.dim, mask)
        per_attr_attention[att] = a
        cache["per_attr"][att] = {"q": q, "k": k, "v": v, "a": a}
    total = total_attention(per_attr_attention, cfg)
    cache["total"] = total
    out = x.copy()
    for att in ATTRIBUTES:
        out[:, segs[att]] += total @ cache["per_attr"][att]["v"]
    out[~mask, :] = 0.0
    return out, cache


def _attention_backward(d_out: np.ndarray, cache, w: BlockWeights,
                        cfg: AttentionConfig, dims: AttributeDims,
                        grads: BlockWeights):
    segs = dims.slices()
    x, mask, total = cache["x"], cache["mask"], cache["total"]
    d_out = d_out.copy()
    d_out[~mask, :] = 0.0
    dx = d_out.copy()
    # The total map multiplies every attribute's values, so its gradient
    # accumulates across the three segments.
    d_total = np.zeros_like(total)
    for att in ATTRIBUTES:
        c = cache["per_attr"][att]
        d_seg = d_out[:, segs[att]]
        d_total += d_seg @ c["v"].T
        dv = total.T @ d_seg
        xa = x[:, segs[att]]
        grads.attr(att).wv += dv.T @ xa
        dx[:, segs[att]] += dv @ w.attr(att).wv
    for att in ATTRIBUTES:
        beta = cfg.beta(att)
        if beta == 0.0:
            continue
        c = cache["per_attr"][att]
        p = w.attr(att)
        da = beta * d_total
        # softmax rows: invalid rows and masked columns have zero weight,
        # so the elementwise products vanish there automatically
        ds = c["a"] * (da - np.sum(da * c["a"], axis=1, keepdims=True))
        scale = 1.0 / np.sqrt(float(p.dim))
        dq = scale * (ds @ c["k"])
        dk = scale * (ds.T @ c["q"])
        xa = x[:, segs[att]]
        grads.attr(att).wq += dq.T @ xa
        grads.attr(att).wk += dk.T @ xa
        dx[:, segs[att]] += dq @ p.wq + dk @ p.wk
    dx[~mask, :] = 0.0
    return dx


def _layer_norm(g: np.ndarray):
    mu = g.mean(axis=1, keepdims=True)
    centered = g - mu
    var = np.mean(centered * centered, axis=1, keepdims=True)
    istd = 1.0 / np.sqrt(var + NORM_EPS)
    xhat = centered * istd
    return xhat, istd


def _feed_forward_core(x: np.ndarray, mask: np.ndarray, w: BlockWeights,
                       dims: AttributeDims):
    segs = dims.slices()
    out = np.empty_like(x)
    cache = {"mask": mask, "per_attr": {}}
    for att in ATTRIBUTES:
        p = w.attr(att)
        h = x[:, segs[att]]
        z = h @ p.ff1.T + p.b1
        u = np.maximum(z, 0.0)
        g = h + u @ p.ff2.T + p.b2
        xhat, istd = _layer_norm(g)
        out[:, segs[att]] = p.gain * xhat + p.bias
        cache["per_attr"][att] = {"h": h, "z": z, "u": u,
                                  "xhat": xhat, "istd": istd}
    out[~mask, :] = 0.0
    return out, cache


def _feed_forward_backward(d_out: np.ndarray, cache, w: BlockWeights,
                           dims: AttributeDims, grads: BlockWeights):
    segs = dims.slices()
    mask = cache["mask"]
    d_out = d_out.copy()
    d_out[~mask, :] = 0.0
    dx = np.empty_like(d_out)
    for att in ATTRIBUTES:
        p = w.attr(att)
        c = cache["per_attr"][att]
        dy = d_out[:, segs[att]]
        grads.attr(att).gain += np.sum(dy * c["xhat"], axis=0)
        grads.attr(att).bias += np.sum(dy, axis=0)
        dxhat = dy * p.gain
        dg = c["istd"] * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - c["xhat"] * np.mean(dxhat * c["xhat"], axis=1, keepdims=True))
        dh = dg.copy()
        du = dg @ p.ff2
        grads.attr(att).ff2 += dg.T @ c["u"]
        grads.attr(att).b2 += dg.sum(axis=0)
        dz = du * (c["z"] > 0.0)
        grads.attr(att).ff1 += dz.T @ c["h"]
        grads.attr(att).b1 += dz.sum(axis=0)
        dh += dz @ p.ff1
        dx[:, segs[att]] = dh
    dx[~mask, :] = 0.0
    return dx


def self_attention_layer(tokens: np.ndarray, valid: np.ndarray,
                         weights: BlockWeights, cfg: AttentionConfig,
                         dims: AttributeDims = DEFAULT_DIMS) -> np.ndarray:
    """Residual per-attribute self-attention over a token grid.

    ``tokens`` may be (N, total) or (T, P, total); the result keeps the
    input's shape. Invalid slots pass through as zeros.
    """
    flat, mask, shape = _flatten(tokens, valid, dims)
    out, _ = _attention_core(flat, mask, weights, cfg, dims)
    return out.reshape(shape)


def feed_forward_layer(tokens: np.ndarray, valid: np.ndarray,
                       weights: BlockWeights,
                       dims: AttributeDims = DEFAULT_DIMS) -> np.ndarray:
    """Residual per-attribute feed-forward plus segmentwise normalization."""
    flat, mask, shape = _flatten(tokens, valid, dims)
    out, _ = _feed_forward_core(flat, mask, weights, dims)
    return out.reshape(shape)


def forward(batch: ClipBatch, weights: TransformerWeights,
            cfg: AttentionConfig) -> np.ndarray:
    """Run all blocks over a clip; returns the aggregated (T, P, total) grid."""
    out, _ = forward_with_cache(batch, weights, cfg)
    return out


def forward_with_cache(batch: ClipBatch, weights: TransformerWeights,
                       cfg: AttentionConfig):
    """Like :func:`forward` but also returns the per-layer caches needed
    by :func:`backward`."""
    if batch.dims != weights.dims:
        raise DimensionError(
            f"batch dims {batch.dims} do not match weights dims {weights.dims}")
    x = batch.flat_features().copy()
    mask = batch.flat_valid()
    if not mask.any():
        raise EmptyClipError("clip contains no valid tokens")
    x[~mask, :] = 0.0
    caches = []
    for block in weights.blocks:
        x, sa_cache = _attention_core(x, mask, block, cfg, weights.dims)
        x, ff_cache = _feed_forward_core(x, mask, block, weights.dims)
        caches.append((sa_cache, ff_cache))
    t, p = batch.num_frames, batch.max_people
    return x.reshape(t, p, weights.dims.total), caches


def backward(d_output: np.ndarray, caches, weights: TransformerWeights,
             cfg: AttentionConfig) -> TransformerWeights:
    """Reverse-mode gradients of every weight tensor.

    ``d_output`` is the loss gradient with respect to the forward output
    (same grid shape). Returns a weight-shaped gradient container.
    """
    grads = weights.zeros_like()
    dx = np.asarray(d_output, dtype=np.float64).reshape(-1, weights.dims.total)
    for block, grad_block, (sa_cache, ff_cache) in zip(
            reversed(weights.blocks), reversed(grads.blocks), reversed(caches)):
        dx = _feed_forward_backward(dx, ff_cache, block, weights.dims, grad_block)
        dx = _attention_backward(dx, sa_cache, block, cfg, weights.dims, grad_block)
    return grads
