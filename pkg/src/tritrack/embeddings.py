"""Embedding vector layout: per-attribute vectors, tokens, and clip batches.

Every detection is described by three embedding vectors - appearance (512),
pose (2048) and space-time location (90) - concatenated into a single
2650-dimensional token. Batches are dense T x P grids (T frames, up to P
people per frame) with a validity mask; padding slots carry zero vectors and
the identity sentinel -1.

All numeric data is float64. Shrunk attribute widths are supported through
:class:`AttributeDims` so gradient checks can run on small instances; the
production layout is :data:`DEFAULT_DIMS`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

APPEARANCE_DIM = 512
POSE_DIM = 2048
SPACETIME_DIM = 90

PAD_IDENTITY = -1


@dataclass(frozen=True)
class AttributeDims:
    """Widths of the three attribute segments inside a token."""

    app: int = APPEARANCE_DIM
    pose: int = POSE_DIM
    loc: int = SPACETIME_DIM

    @property
    def total(self) -> int:
        return self.app + self.pose + self.loc

    def slices(self) -> dict[str, slice]:
        """Segment boundaries inside a concatenated token, by attribute name."""
        return {
            "app": slice(0, self.app),
            "pose": slice(self.app, self.app + self.pose),
            "loc": slice(self.app + self.pose, self.total),
        }

    def segment(self, name: str) -> slice:
        return self.slices()[name]


DEFAULT_DIMS = AttributeDims()

ATTRIBUTES = ("app", "pose", "loc")


def _as_vector(values, dim: int, what: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (dim,):
        raise DimensionError(f"{what} must have shape ({dim},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DimensionError(f"{what} contains non-finite values")
    return v


def appearance_vec(values) -> np.ndarray:
    """Validate an appearance embedding (length 512, finite, float64)."""
    return _as_vector(values, APPEARANCE_DIM, "appearance vector")


def pose_vec(values) -> np.ndarray:
    """Validate a pose embedding (length 2048, finite, float64)."""
    return _as_vector(values, POSE_DIM, "pose vector")


def spacetime_vec(values) -> np.ndarray:
    """Validate a space-time embedding (length 90, finite, float64)."""
    return _as_vector(values, SPACETIME_DIM, "space-time vector")


def concat_token(a, p, s, dims: AttributeDims = DEFAULT_DIMS) -> np.ndarray:
    """Concatenate appearance, pose and space-time vectors into one token.

    Layout: ``out[0:app] = a``, ``out[app:app+pose] = p``,
    ``out[app+pose:total] = s``.
    """
    a = _as_vector(a, dims.app, "appearance vector")
    p = _as_vector(p, dims.pose, "pose vector")
    s = _as_vector(s, dims.loc, "space-time vector")
    return np.concatenate([a, p, s])


def split_token(h, dims: AttributeDims = DEFAULT_DIMS):
    """Split a concatenated token back into its three attribute vectors.

    Exact inverse of :func:`concat_token`: the round trip is bit-identical.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (dims.total,):
        raise DimensionError(
            f"token must have shape ({dims.total},), got {h.shape}"
        )
    sl = dims.slices()
    return h[sl["app"]].copy(), h[sl["pose"]].copy(), h[sl["loc"]].copy()


@dataclass(frozen=True)
class HumanToken:
    """One detection slot in a clip grid.

    Padding slots have ``valid=False`` and all-zero vectors.
    """

    frame: int
    slot: int
    appearance: np.ndarray
    pose: np.ndarray
    spacetime: np.ndarray
    valid: bool = True
    dims: AttributeDims = DEFAULT_DIMS

    def __post_init__(self):
        if self.frame < 0 or self.slot < 0:
            raise DimensionError("frame and slot indices must be >= 0")
        object.__setattr__(
            self, "appearance",
            _as_vector(self.appearance, self.dims.app, "appearance vector"))
        object.__setattr__(
            self, "pose", _as_vector(self.pose, self.dims.pose, "pose vector"))
        object.__setattr__(
            self, "spacetime",
            _as_vector(self.spacetime, self.dims.loc, "space-time vector"))
        if not self.valid:
            for name in ("appearance", "pose", "spacetime"):
                if np.any(getattr(self, name) != 0.0):
                    raise DimensionError("padding tokens must carry zero vectors")

    def concatenated(self) -> np.ndarray:
        return concat_token(self.appearance, self.pose, self.spacetime, self.dims)

    @classmethod
    def padding(cls, frame: int, slot: int,
                dims: AttributeDims = DEFAULT_DIMS) -> "HumanToken":
        return cls(frame=frame, slot=slot,
                   appearance=np.zeros(dims.app),
                   pose=np.zeros(dims.pose),
                   spacetime=np.zeros(dims.loc),
                   valid=False, dims=dims)


@dataclass
class ClipBatch:
    """Dense T x P grid of tokens with a validity mask.

    ``features`` has shape (T, P, dims.total); ``valid`` is (T, P) bool;
    ``identities`` is (T, P) int64 with -1 on padding slots, or None when
    the clip is unlabeled. ``frames`` holds the absolute frame index of each
    row (defaults to 0..T-1).
    """

    features: np.ndarray
    valid: np.ndarray
    identities: np.ndarray | None = None
    dims: AttributeDims = DEFAULT_DIMS
    frames: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.features.ndim != 3 or self.features.shape[2] != self.dims.total:
            raise DimensionError(
                f"features must be (T, P, {self.dims.total}), got {self.features.shape}")
        t, p, _ = self.features.shape
        if t < 1 or p < 1:
            raise DimensionError("clip needs T >= 1 and P >= 1")
        if self.valid.shape != (t, p):
            raise DimensionError("valid mask shape must match the token grid")
        if np.any(self.features[~self.valid] != 0.0):
            raise DimensionError("padding slots must carry zero vectors")
        if self.identities is not None:
            self.identities = np.asarray(self.identities, dtype=np.int64)
            if self.identities.shape != (t, p):
                raise DimensionError("identities shape must match the token grid")
        if self.frames is None:
            self.frames = np.arange(t, dtype=np.int64)
        else:
            self.frames = np.asarray(self.frames, dtype=np.int64)
            if self.frames.shape != (t,):
                raise DimensionError("frames must have one entry per grid row")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def max_people(self) -> int:
        return self.features.shape[1]

    def token(self, t: int, i: int) -> HumanToken:
        sl = self.dims.slices()
        row = self.features[t, i]
        if not self.valid[t, i]:
            return HumanToken.padding(int(self.frames[t]), i, self.dims)
        return HumanToken(frame=int(self.frames[t]), slot=i,
                          appearance=row[sl["app"]], pose=row[sl["pose"]],
                          spacetime=row[sl["loc"]], dims=self.dims)

    def flat_features(self) -> np.ndarray:
        """Tokens as an (T*P, total) matrix, frame-major."""
        t, p, d = self.features.shape
        return self.features.reshape(t * p, d)

    def flat_valid(self) -> np.ndarray:
        return self.valid.reshape(-1)

    def flat_identities(self) -> np.ndarray | None:
        if self.identities is None:
            return None
        return self.identities.reshape(-1)

    @classmethod
    def from_tokens(cls, tokens, identities=None,
                    dims: AttributeDims = DEFAULT_DIMS) -> "ClipBatch":
        """Build a batch from a T x P nested list of :class:`HumanToken`.

        ``identities`` is an optional matching nested list of int labels
        (use -1 for padding slots).
        """
        t = len(tokens)
        p = len(tokens[0]) if t else 0
        feats = np.zeros((t, p, dims.total))
        valid = np.zeros((t, p), dtype=bool)
        frames = np.zeros(t, dtype=np.int64)
        for ti, row in enumerate(tokens):
            if len(row) != p:
                raise DimensionError("token grid must be complete (every (t,i) present)")
            frames[ti] = row[0].frame
            for pi, tok in enumerate(row):
                feats[ti, pi] = tok.concatenated()
                valid[ti, pi] = tok.valid
        ids = None if identities is None else np.asarray(identities, dtype=np.int64)
        return cls(features=feats, valid=valid, identities=ids,
                   dims=dims, frames=frames)
