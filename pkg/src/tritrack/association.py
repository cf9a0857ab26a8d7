"""Online track association over per-detection embedding vectors.

Each live tracklet keeps a bounded history of the embeddings assigned to
it. A new frame is matched against the live set with a capped affinity

    affinity(det, track) = min(tau, min over history ||det - h||_2)

solved as a minimum-cost assignment; pairs whose cost reaches the cap are
rejected. Matched tracks absorb the detection and reset their age,
unmatched tracks age by one and die at max_age, unmatched detections spawn
new tracks with sequential ids starting at 1.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .assignment import hungarian
from .errors import DataError, DimensionError

DEFAULT_TAU = 8.0
DEFAULT_HISTORY_LEN = 20
DEFAULT_MAX_AGE = 24


@dataclass(frozen=True)
class TrackerConfig:
    """Knobs of the association stage."""

    tau: float = DEFAULT_TAU
    history_len: int = DEFAULT_HISTORY_LEN
    max_age: int = DEFAULT_MAX_AGE

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise DataError("tau must be positive and finite")
        if self.history_len < 1:
            raise DataError("history_len must be >= 1")
        if self.max_age < 1:
            raise DataError("max_age must be >= 1")


@dataclass
class Tracklet:
    """One live identity with its recent embedding history."""

    track_id: int
    history: deque
    age: int = 0
    born_frame: int = 0
    last_frame: int = 0

    @classmethod
    def start(cls, track_id: int, embedding: np.ndarray, frame: int,
              history_len: int) -> "Tracklet":
        hist = deque(maxlen=history_len)
        hist.append(np.array(embedding, dtype=np.float64))
        return cls(track_id=track_id, history=hist, age=0,
                   born_frame=frame, last_frame=frame)

    def absorb(self, embedding: np.ndarray, frame: int):
        self.history.append(np.array(embedding, dtype=np.float64))
        self.age = 0
        self.last_frame = frame


@dataclass
class FrameAssignment:
    """Outcome of one association step."""

    frame: int
    matches: list = field(default_factory=list)        # (slot, track_id)
    new_tracks: list = field(default_factory=list)     # (slot, track_id)
    unmatched_tracks: list = field(default_factory=list)  # track_id
    killed_tracks: list = field(default_factory=list)     # track_id

    def labels(self) -> dict:
        """slot -> track_id for every detection of the frame."""
        out = dict(self.matches)
        out.update(self.new_tracks)
        return out


@dataclass
class TrackerState:
    """Mutable association state carried across frames."""

    config: TrackerConfig = field(default_factory=TrackerConfig)
    tracks: list = field(default_factory=list)
    next_id: int = 1


def affinity(detections, tracks, cfg: TrackerConfig) -> np.ndarray:
    """Capped affinity matrix, detections as rows and tracks as columns."""
    n, k = len(detections), len(tracks)
    out = np.empty((n, k), dtype=np.float64)
    for i, det in enumerate(detections):
        det = np.asarray(det, dtype=np.float64)
        for j, tr in enumerate(tracks):
            best = np.inf
            for past in tr.history:
                if past.shape != det.shape:
                    raise DimensionError(
                        f"embedding width {det.shape} does not match track "
                        f"history width {past.shape}")
                best = min(best, float(np.linalg.norm(det - past)))
            out[i, j] = min(cfg.tau, best)
    return out


def step(frame: int, detections, state: TrackerState) -> FrameAssignment:
    """Associate one frame of embeddings and update the live track set.

    ``detections`` is a sequence of (slot, embedding) pairs; slots must be
    unique within the frame. Returns the per-frame assignment record.
    """
    cfg = state.config
    slots = [s for s, _ in detections]
    if len(set(slots)) != len(slots):
        raise DataError(f"frame {frame} contains duplicate detection slots")
    vecs = [np.asarray(v, dtype=np.float64) for _, v in detections]
    for s, v in zip(slots, vecs):
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise DimensionError(
                f"detection {s!r} must be a finite 1-d embedding")

    result = FrameAssignment(frame=frame)
    cost = affinity(vecs, state.tracks, cfg)
    matched_dets = set()
    matched_tracks = set()
    for r, c in hungarian(cost):
        if cost[r, c] >= cfg.tau:
            continue
        state.tracks[c].absorb(vecs[r], frame)
        matched_dets.add(r)
        matched_tracks.add(c)
        result.matches.append((slots[r], state.tracks[c].track_id))

    for j, tr in enumerate(state.tracks):
        if j not in matched_tracks:
            tr.age += 1
            result.unmatched_tracks.append(tr.track_id)

    for r in range(len(vecs)):
        if r not in matched_dets:
            tr = Tracklet.start(state.next_id, vecs[r], frame,
                                cfg.history_len)
            state.next_id += 1
            state.tracks.append(tr)
            result.new_tracks.append((slots[r], tr.track_id))

    survivors = []
    for tr in state.tracks:
        if tr.age >= cfg.max_age:
            result.killed_tracks.append(tr.track_id)
        else:
            survivors.append(tr)
    state.tracks = survivors
    return result


def track(frames, cfg: TrackerConfig = TrackerConfig()):
    """Run the tracker over a whole sequence.

    ``frames`` is an iterable of per-frame detection lists, each a list of
    (slot, embedding) pairs. Returns ``(assignments, state)`` where
    ``assignments`` is the list of per-frame :class:`FrameAssignment`
    records, in order. The association is strictly online: frame t only
    sees information from frames <= t.
    """
    state = TrackerState(config=cfg)
    assignments = []
    for frame, dets in enumerate(frames):
        assignments.append(step(frame, dets, state))
    return assignments, state
