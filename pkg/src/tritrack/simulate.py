"""Synthetic multi-person scenarios with known ground truth.

Each identity gets a fixed random appearance base (per-frame Gaussian noise
on top), a pose vector drifting as a Gaussian random walk, and a constant
velocity 3D trajectory bouncing off the walls of a fixed view-space box.
Crops are synthesized by inverting the weak-perspective lift with s = 1 and
t_x = t_y = 0, so lifting a generated crop reproduces the stored position
bit for bit. Occlusion windows suppress detections; shot changes redraw
the trajectories (new viewpoint) while appearance and pose persist.

Everything is driven by numpy's PCG64 so a seed pins the whole scenario.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import (DEFAULT_FOCAL, DEFAULT_Z_NORM, NUM_JOINTS, CameraCrop,
                     build_spacetime, lift_translation, place_keypoints)
from .embeddings import (APPEARANCE_DIM, DEFAULT_DIMS, POSE_DIM, ClipBatch,
                         HumanToken)
from .errors import ConfigError, DataError, EmptyClipError
from .io import DetectionRecord

# view-space bounds of the walking area: x, y in [-5, 5], z in [5, 25]
BOX_LOW = np.array([-5.0, -5.0, 5.0])
BOX_HIGH = np.array([5.0, 5.0, 25.0])

DEFAULT_APPEARANCE_SCALE = 30.0
DEFAULT_POSE_SCALE = 1.0
DEFAULT_SHOT_MIN_JUMP = 10.0

# one standing figure, person-centric coordinates, joint order as in camera
CANONICAL_SKELETON = np.array([
    [0.00, 0.00, 0.0],    # pelvis
    [0.00, 0.55, 0.0],    # neck
    [0.00, 0.75, 0.0],    # head
    [0.20, 0.50, 0.0],    # l_shoulder
    [0.30, 0.25, 0.0],    # l_elbow
    [0.35, 0.00, 0.0],    # l_wrist
    [-0.20, 0.50, 0.0],   # r_shoulder
    [-0.30, 0.25, 0.0],   # r_elbow
    [-0.35, 0.00, 0.0],   # r_wrist
    [0.12, -0.05, 0.0],   # l_hip
    [0.15, -0.45, 0.0],   # l_knee
    [0.15, -0.85, 0.0],   # l_ankle
    [-0.12, -0.05, 0.0],  # r_hip
    [-0.15, -0.45, 0.0],  # r_knee
    [-0.15, -0.85, 0.0],  # r_ankle
])


@dataclass(frozen=True)
class SimConfig:
    """Scenario shape and noise levels."""

    num_people: int = 2
    num_frames: int = 10
    seed: int = 0
    appearance_noise_sigma: float = 0.0
    pose_drift_sigma: float = 0.0
    walk_speed: float = 0.1
    occlusions: tuple = ()          # (person, start_frame, length) triples
    shot_changes: tuple = ()        # frame indices
    image_w: float = 1920.0
    image_h: float = 1080.0
    focal: float = DEFAULT_FOCAL
    appearance_scale: float = DEFAULT_APPEARANCE_SCALE
    pose_scale: float = DEFAULT_POSE_SCALE
    shot_min_jump: float = DEFAULT_SHOT_MIN_JUMP

    def __post_init__(self):
        object.__setattr__(self, "occlusions",
                           tuple(tuple(int(x) for x in occ)
                                 for occ in self.occlusions))
        object.__setattr__(self, "shot_changes",
                           tuple(int(f) for f in self.shot_changes))
        if self.num_people < 1:
            raise ConfigError("num_people must be >= 1")
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        for sigma, name in ((self.appearance_noise_sigma, "appearance_noise_sigma"),
                            (self.pose_drift_sigma, "pose_drift_sigma"),
                            (self.walk_speed, "walk_speed")):
            if sigma < 0 or not math.isfinite(sigma):
                raise ConfigError(f"{name} must be finite and >= 0")
        if self.image_w <= 0 or self.image_h <= 0 or self.focal <= 0:
            raise ConfigError("image size and focal length must be positive")
        if self.appearance_scale <= 0:
            raise ConfigError("appearance_scale must be positive")
        if self.shot_min_jump <= 0:
            raise ConfigError("shot_min_jump must be positive")
        for occ in self.occlusions:
            if len(occ) != 3:
                raise ConfigError(f"occlusion {occ} must be (person, start, length)")
            person, start, length = occ
            if not 0 <= person < self.num_people:
                raise ConfigError(f"occlusion person {person} out of range")
            if length < 1 or start < 0 or start + length > self.num_frames:
                raise ConfigError(
                    f"occlusion window {occ} exceeds the frame range")
        for f in self.shot_changes:
            if not 1 <= f < self.num_frames:
                raise ConfigError(f"shot change frame {f} out of range")


@dataclass
class Scenario:
    """Generated ground truth: per-person signals plus the detection list."""

    config: SimConfig
    appearance: np.ndarray        # (P, F, 512)
    pose: np.ndarray              # (P, F, 2048)
    crops: list                   # P x F of CameraCrop
    positions: np.ndarray         # (P, F, 3), exactly lift_translation(crop)
    occluded: np.ndarray          # (P, F) bool
    events: list = field(default_factory=list)
    detections: list = field(default_factory=list)

    @property
    def num_people(self) -> int:
        return self.appearance.shape[0]

    @property
    def num_frames(self) -> int:
        return self.appearance.shape[1]


def _walk(rng: np.random.Generator, start: np.ndarray, speed: float,
          steps: int) -> np.ndarray:
    """Constant-velocity walk with reflective box bounds, ``steps`` rows."""
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        direction = np.array([1.0, 0.0, 0.0])
        norm = 1.0
    vel = speed * direction / norm
    out = np.empty((steps, 3))
    pos = start.copy()
    out[0] = pos
    for t in range(1, steps):
        pos = pos + vel
        for axis in range(3):
            if pos[axis] > BOX_HIGH[axis]:
                pos[axis] = 2.0 * BOX_HIGH[axis] - pos[axis]
                vel[axis] = -vel[axis]
            elif pos[axis] < BOX_LOW[axis]:
                pos[axis] = 2.0 * BOX_LOW[axis] - pos[axis]
                vel[axis] = -vel[axis]
        out[t] = pos
    return out


def _crop_for(position, cfg: SimConfig) -> CameraCrop:
    """Invert the lift conventions: s = 1, t = (0, 0), b from depth."""
    x, y, z = position
    b = 2.0 * cfg.focal / z
    return CameraCrop(
        image_w=cfg.image_w, image_h=cfg.image_h,
        center_x=(x * b + cfg.image_w) / 2.0,
        center_y=(y * b + cfg.image_h) / 2.0,
        box_size=b, cam_scale=1.0, cam_tx=0.0, cam_ty=0.0,
        focal=cfg.focal)


def _build_detections(scenario: Scenario) -> None:
    cfg = scenario.config
    dets = []
    for f in range(cfg.num_frames):
        for p in range(cfg.num_people):
            if scenario.occluded[p, f]:
                continue
            dets.append(DetectionRecord(
                frame=f, det_key=f"p{p:03d}", gt_id=p,
                crop=scenario.crops[p][f],
                keypoints=CANONICAL_SKELETON,
                appearance=scenario.appearance[p, f],
                pose=scenario.pose[p, f]))
    scenario.detections = dets


def generate(cfg: SimConfig) -> Scenario:
    """Build a scenario from scratch; pure function of the config."""
    P, F = cfg.num_people, cfg.num_frames
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))

    bases = rng.normal(size=(P, APPEARANCE_DIM))
    bases *= cfg.appearance_scale / np.linalg.norm(bases, axis=1, keepdims=True)
    app_noise = rng.normal(size=(P, F, APPEARANCE_DIM))
    appearance = bases[:, None, :] + cfg.appearance_noise_sigma * app_noise

    pose_base = cfg.pose_scale * rng.normal(size=(P, POSE_DIM))
    pose_steps = rng.normal(size=(P, F, POSE_DIM))
    pose = pose_base[:, None, :] + cfg.pose_drift_sigma * np.cumsum(
        pose_steps, axis=1)

    positions = np.empty((P, F, 3))
    for p in range(P):
        start = rng.uniform(BOX_LOW, BOX_HIGH)
        positions[p] = _walk(rng, start, cfg.walk_speed, F)

    occluded = np.zeros((P, F), dtype=bool)
    events = []
    for person, start, length in cfg.occlusions:
        occluded[person, start:start + length] = True
        events.append(("occlusion", person, start, length))

    crops = [[_crop_for(positions[p, f], cfg) for f in range(F)]
             for p in range(P)]
    for p in range(P):
        for f in range(F):
            positions[p, f] = lift_translation(crops[p][f])

    scenario = Scenario(config=cfg, appearance=appearance, pose=pose,
                        crops=crops, positions=positions, occluded=occluded,
                        events=events)
    _build_detections(scenario)

    for idx, frame in enumerate(sorted(cfg.shot_changes)):
        child = np.random.SeedSequence([cfg.seed, idx + 1])
        scenario = apply_shot_change(scenario, frame, child)
    return scenario


def apply_shot_change(scenario: Scenario, frame: int, seed) -> Scenario:
    """Redraw every trajectory from ``frame`` on, as seen by a new camera.

    Appearance and pose signals persist across the cut; positions jump by
    at least ``shot_min_jump`` (rejection sampling inside the box), then
    resume a fresh constant-velocity walk. Returns a new scenario.
    """
    cfg = scenario.config
    if not 1 <= frame < cfg.num_frames:
        raise DataError(f"shot change frame {frame} out of range "
                        f"[1, {cfg.num_frames})")
    rng = np.random.Generator(np.random.PCG64(
        seed if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)))
    P, F = cfg.num_people, cfg.num_frames
    positions = scenario.positions.copy()
    crops = [list(row) for row in scenario.crops]
    remaining = F - frame
    for p in range(P):
        anchor = positions[p, frame - 1]
        start = None
        for _ in range(10000):
            cand = rng.uniform(BOX_LOW, BOX_HIGH)
            if np.linalg.norm(cand - anchor) >= cfg.shot_min_jump:
                start = cand
                break
        if start is None:
            raise ConfigError(
                f"cannot place a jump of {cfg.shot_min_jump} inside the box")
        positions[p, frame:] = _walk(rng, start, cfg.walk_speed, remaining)
        for f in range(frame, F):
            crops[p][f] = _crop_for(positions[p, f], cfg)
            positions[p, f] = lift_translation(crops[p][f])

    out = replace(scenario, positions=positions, crops=crops,
                  events=scenario.events + [("shot_change", frame)],
                  detections=[])
    _build_detections(out)
    return out


def embed(source, window_len: int | None = None,
          z_norm: float = DEFAULT_Z_NORM) -> list:
    """Turn detections into transformer-ready clip batches.

    ``source`` is a :class:`Scenario` or a plain list of detection records.
    Frames cover the contiguous range between the first and last detection;
    frames with no detections become all-padding rows. ``window_len``
    splits the range into ceil(N / window_len) batches (default: one batch).
    Identity labels come from ``gt_id`` (unlabeled detections get -1).
    """
    records = source.detections if isinstance(source, Scenario) else list(source)
    if not records:
        raise EmptyClipError("no detections to embed")
    by_frame = {}
    for rec in records:
        by_frame.setdefault(rec.frame, []).append(rec)
    lo, hi = min(by_frame), max(by_frame)
    all_frames = list(range(lo, hi + 1))
    max_people = max((len(v) for v in by_frame.values()), default=1)

    if window_len is None:
        window_len = len(all_frames)
    if window_len < 1:
        raise DataError("window_len must be >= 1")

    batches = []
    for w0 in range(0, len(all_frames), window_len):
        frames = all_frames[w0:w0 + window_len]
        tokens = []
        identities = []
        for f in frames:
            row = []
            ids = []
            recs = sorted(by_frame.get(f, []), key=lambda r: r.det_key)
            if len(recs) != len({r.det_key for r in recs}):
                raise DataError(f"frame {f} has duplicate det_keys")
            for slot in range(max_people):
                if slot < len(recs):
                    rec = recs[slot]
                    t = lift_translation(rec.crop)
                    view = place_keypoints(rec.keypoints, t)
                    row.append(HumanToken(
                        frame=f, slot=slot,
                        appearance=rec.appearance, pose=rec.pose,
                        spacetime=build_spacetime(view, f, z_norm=z_norm)))
                    ids.append(rec.gt_id if rec.gt_id is not None else -1)
                else:
                    row.append(HumanToken.padding(f, slot, DEFAULT_DIMS))
                    ids.append(-1)
            tokens.append(row)
            identities.append(ids)
        batches.append(ClipBatch.from_tokens(tokens, identities, DEFAULT_DIMS))
    return batches


def detection_keys(batches, records) -> dict:
    """Map (batch_index, t, slot) back to each record's (frame, det_key).

    The inverse of the slot layout chosen by :func:`embed`; used when track
    ids assigned on the token grid must be written back to wire records.
    """
    by_frame = {}
    for rec in records:
        by_frame.setdefault(rec.frame, []).append(rec)
    out = {}
    for b, batch in enumerate(batches):
        for t in range(batch.num_frames):
            f = int(batch.frames[t])
            recs = sorted(by_frame.get(f, []), key=lambda r: r.det_key)
            for slot in range(len(recs)):
                out[(b, t, slot)] = (f, recs[slot].det_key)
    return out
