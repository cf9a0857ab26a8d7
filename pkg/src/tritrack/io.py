"""On-disk formats: detections, track outputs, weight checkpoints, configs.

Detections travel either as JSONL (one object per line, sorted keys) or as
an equivalent binary stream (magic ``T3DB``). Both orders records by
``(frame, det_key)`` and round-trip float64 values bit-exactly. Track
outputs are JSONL. Weight checkpoints (magic ``T3DP``) store every tensor
as little-endian float64 in the canonical checkpoint order and end with a
CRC32 so corruption and truncation are detected instead of silently
loading garbage.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .camera import NUM_JOINTS, CameraCrop, local_keypoints
from .embeddings import APPEARANCE_DIM, POSE_DIM, AttributeDims
from .errors import (ChecksumError, ConfigError, DimensionError, FormatError,
                     VersionError)
from .transformer import (NUM_BLOCKS, AttentionConfig, TransformerWeights)

DETECTIONS_MAGIC = b"T3DB"
WEIGHTS_MAGIC = b"T3DP"
FORMAT_VERSION = 1

KEYPOINT_FLAT = NUM_JOINTS * 3


@dataclass(frozen=True)
class DetectionRecord:
    """One detected person: crop geometry plus its three descriptors."""

    frame: int
    det_key: str
    crop: CameraCrop
    keypoints: np.ndarray          # (15, 3) person-centric
    appearance: np.ndarray         # (512,)
    pose: np.ndarray               # (2048,)
    gt_id: int | None = None

    def __post_init__(self):
        if not isinstance(self.frame, int) or isinstance(self.frame, bool):
            raise FormatError("frame must be an integer")
        if not isinstance(self.det_key, str) or not self.det_key:
            raise FormatError("det_key must be a non-empty string")
        object.__setattr__(self, "keypoints", local_keypoints(self.keypoints))
        object.__setattr__(self, "appearance",
                           _vector(self.appearance, APPEARANCE_DIM, "appearance"))
        object.__setattr__(self, "pose", _vector(self.pose, POSE_DIM, "pose"))
        if self.gt_id is not None and (not isinstance(self.gt_id, int)
                                       or isinstance(self.gt_id, bool)):
            raise FormatError("gt_id must be an integer or absent")

    def sort_key(self):
        return (self.frame, self.det_key)


def _vector(values, width: int, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (width,):
        raise FormatError(f"{name} must have {width} entries, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise FormatError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class TrackRecord:
    """Tracker verdict for one detection."""

    frame: int
    det_key: str
    track_id: int

    def sort_key(self):
        return (self.frame, self.det_key)


# --------------------------------------------------------------------------
# detections, JSONL


def _record_to_obj(rec: DetectionRecord) -> dict:
    return {
        "frame": rec.frame,
        "det_key": rec.det_key,
        "gt_id": rec.gt_id,
        "crop": rec.crop.as_array().tolist(),
        "keypoints": rec.keypoints.reshape(-1).tolist(),
        "appearance": rec.appearance.tolist(),
        "pose": rec.pose.tolist(),
    }


def _require(obj: dict, key: str, line: int):
    if key not in obj:
        raise FormatError(f"missing field {key!r}", line=line)
    return obj[key]


def _obj_to_record(obj: dict, line: int) -> DetectionRecord:
    if not isinstance(obj, dict):
        raise FormatError("record must be a JSON object", line=line)
    frame = _require(obj, "frame", line)
    det_key = _require(obj, "det_key", line)
    gt_id = obj.get("gt_id")
    crop = _require(obj, "crop", line)
    keypoints = _require(obj, "keypoints", line)
    appearance = _require(obj, "appearance", line)
    pose = _require(obj, "pose", line)
    try:
        crop_arr = np.asarray(crop, dtype=np.float64)
        if crop_arr.shape != (9,):
            raise FormatError(f"crop must have 9 entries, got {crop_arr.size}")
        kp = np.asarray(keypoints, dtype=np.float64)
        if kp.shape != (KEYPOINT_FLAT,):
            raise FormatError(
                f"keypoints must have {KEYPOINT_FLAT} entries, got {kp.size}")
        return DetectionRecord(
            frame=frame, det_key=det_key, gt_id=gt_id,
            crop=CameraCrop.from_array(crop_arr),
            keypoints=kp.reshape(NUM_JOINTS, 3),
            appearance=appearance, pose=pose)
    except (FormatError, DimensionError) as exc:
        raise FormatError(str(exc), line=line) from exc
    except (TypeError, ValueError) as exc:
        raise FormatError(f"malformed record: {exc}", line=line) from exc


def write_detections_jsonl(path, records) -> None:
    records = sorted(records, key=lambda r: r.sort_key())
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_obj(rec), sort_keys=True,
                                separators=(",", ":")))
            fh.write("\n")


def read_detections_jsonl(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            records.append(_obj_to_record(obj, lineno))
    records.sort(key=lambda r: r.sort_key())
    return records


# --------------------------------------------------------------------------
# detections, binary


def _pack_record(rec: DetectionRecord) -> bytes:
    key = rec.det_key.encode("utf-8")
    parts = [
        struct.pack("<q", rec.frame),
        struct.pack("<B", 0 if rec.gt_id is None else 1),
        struct.pack("<q", 0 if rec.gt_id is None else rec.gt_id),
        struct.pack("<I", len(key)),
        key,
        rec.crop.as_array().astype("<f8").tobytes(),
        rec.keypoints.reshape(-1).astype("<f8").tobytes(),
        rec.appearance.astype("<f8").tobytes(),
        rec.pose.astype("<f8").tobytes(),
    ]
    payload = b"".join(parts)
    return struct.pack("<I", len(payload)) + payload


def write_detections_binary(path, records) -> None:
    records = sorted(records, key=lambda r: r.sort_key())
    body = b"".join(_pack_record(rec) for rec in records)
    with open(path, "wb") as fh:
        fh.write(DETECTIONS_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(records)))
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def _take(buf: bytes, offset: int, size: int, what: str):
    if offset + size > len(buf):
        raise ChecksumError(f"truncated detections file while reading {what}")
    return buf[offset:offset + size], offset + size


def read_detections_binary(path) -> list:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DETECTIONS_MAGIC:
        raise FormatError("not a binary detections file (bad magic)")
    raw, off = _take(data, 4, 4, "version")
    version = struct.unpack("<I", raw)[0]
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported detections version {version}")
    raw, off = _take(data, off, 8, "record count")
    count = struct.unpack("<Q", raw)[0]
    body_start = off
    records = []
    for idx in range(count):
        raw, off = _take(data, off, 4, f"record {idx} header")
        (size,) = struct.unpack("<I", raw)
        payload, off = _take(data, off, size, f"record {idx}")
        records.append(_unpack_record(payload, idx))
    raw, off = _take(data, off, 4, "checksum")
    (stored,) = struct.unpack("<I", raw)
    if stored != zlib.crc32(data[body_start:off - 4]):
        raise ChecksumError("detections checksum mismatch")
    if off != len(data):
        raise FormatError("trailing bytes after detections checksum")
    records.sort(key=lambda r: r.sort_key())
    return records


def _unpack_record(payload: bytes, idx: int) -> DetectionRecord:
    try:
        off = 0
        frame, has_gt, gt_id = struct.unpack_from("<qBq", payload, off)
        off += 17
        (key_len,) = struct.unpack_from("<I", payload, off)
        off += 4
        key = payload[off:off + key_len].decode("utf-8")
        off += key_len
        widths = (9, KEYPOINT_FLAT, APPEARANCE_DIM, POSE_DIM)
        arrays = []
        for width in widths:
            arrays.append(np.frombuffer(payload, dtype="<f8", count=width,
                                        offset=off).astype(np.float64))
            off += width * 8
        if off != len(payload):
            raise FormatError(f"record {idx} has {len(payload) - off} stray bytes")
        crop, kp, app, pose = arrays
        return DetectionRecord(
            frame=frame, det_key=key, gt_id=gt_id if has_gt else None,
            crop=CameraCrop.from_array(crop),
            keypoints=kp.reshape(NUM_JOINTS, 3),
            appearance=app, pose=pose)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed record {idx}: {exc}", record=idx) from exc
    except DimensionError as exc:
        raise FormatError(f"record {idx}: {exc}", record=idx) from exc


def read_detections(path) -> list:
    """Load detections, sniffing JSONL versus binary from the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == DETECTIONS_MAGIC:
        return read_detections_binary(path)
    return read_detections_jsonl(path)


def convert_detections(src, dst, fmt: str | None = None) -> int:
    """Rewrite detections in the other encoding; returns the record count.

    ``fmt`` forces ``"jsonl"`` or ``"binary"``; by default the target format
    is inferred from the destination suffix (``.jsonl``/``.json`` give JSONL,
    anything else binary).
    """
    records = read_detections(src)
    if fmt is None:
        fmt = "jsonl" if str(dst).endswith((".jsonl", ".json")) else "binary"
    if fmt == "jsonl":
        write_detections_jsonl(dst, records)
    elif fmt == "binary":
        write_detections_binary(dst, records)
    else:
        raise ConfigError(f"unknown detections format {fmt!r}")
    return len(records)


# --------------------------------------------------------------------------
# track outputs


def write_tracks(path, records) -> None:
    records = sorted(records, key=lambda r: r.sort_key())
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"frame": rec.frame, "det_key": rec.det_key,
                                 "track_id": rec.track_id},
                                sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_tracks(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise FormatError("record must be a JSON object", line=lineno)
            frame = _require(obj, "frame", lineno)
            det_key = _require(obj, "det_key", lineno)
            track_id = _require(obj, "track_id", lineno)
            if not isinstance(frame, int) or isinstance(frame, bool):
                raise FormatError("frame must be an integer", line=lineno)
            if not isinstance(det_key, str) or not det_key:
                raise FormatError("det_key must be a non-empty string", line=lineno)
            if not isinstance(track_id, int) or isinstance(track_id, bool):
                raise FormatError("track_id must be an integer", line=lineno)
            records.append(TrackRecord(frame=frame, det_key=det_key,
                                       track_id=track_id))
    records.sort(key=lambda r: r.sort_key())
    return records


# --------------------------------------------------------------------------
# weight checkpoints


def save_weights(path, weights: TransformerWeights,
                 cfg: AttentionConfig = AttentionConfig()) -> None:
    """Write a checkpoint: header, every tensor as little-endian float64 in
    canonical order, then a CRC32 over everything after the magic."""
    dims = weights.dims
    header = b"".join([
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<III", dims.app, dims.pose, dims.loc),
        struct.pack("<I", NUM_BLOCKS),
        struct.pack("<ddd", cfg.beta_app, cfg.beta_pose, cfg.beta_loc),
    ])
    payload = b"".join(t.astype("<f8").tobytes()
                       for _, t in weights.named_tensors())
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(header + payload)))


def _payload_size(dims: AttributeDims) -> int:
    per_attr = sum(5 * d * d + 4 * d for d in (dims.app, dims.pose, dims.loc))
    return NUM_BLOCKS * per_attr * 8


def load_weights(path, expected_dims: AttributeDims | None = None):
    """Load a checkpoint, returning ``(weights, attention_config)``.

    Raises :class:`FormatError` on a bad magic, :class:`VersionError` on an
    unknown version, :class:`ChecksumError` on truncation or corruption and
    :class:`DimensionError` when ``expected_dims`` disagrees with the file.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError("not a weights file (bad magic)")
    header_size = 4 + 4 + 12 + 4 + 24
    if len(data) < header_size:
        raise ChecksumError("truncated weights file (incomplete header)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported weights version {version}")
    app, pose, loc = struct.unpack_from("<III", data, 8)
    (blocks,) = struct.unpack_from("<I", data, 20)
    betas = struct.unpack_from("<ddd", data, 24)
    if blocks != NUM_BLOCKS:
        raise FormatError(f"expected {NUM_BLOCKS} blocks, file has {blocks}")
    try:
        dims = AttributeDims(app=app, pose=pose, loc=loc)
        cfg = AttentionConfig(*betas)
    except Exception as exc:
        raise FormatError(f"invalid weights header: {exc}") from exc
    expected_len = header_size + _payload_size(dims) + 4
    if len(data) < expected_len:
        raise ChecksumError(
            f"truncated weights file: {len(data)} bytes, expected {expected_len}")
    if len(data) > expected_len:
        raise FormatError("trailing bytes after weights checksum")
    (stored,) = struct.unpack_from("<I", data, expected_len - 4)
    if stored != zlib.crc32(data[4:expected_len - 4]):
        raise ChecksumError("weights checksum mismatch")
    if expected_dims is not None and dims != expected_dims:
        raise DimensionError(
            f"weights were trained for dims ({app}, {pose}, {loc}), "
            f"engine expects ({expected_dims.app}, {expected_dims.pose}, "
            f"{expected_dims.loc})")
    weights = TransformerWeights.zeros(dims)
    off = header_size
    for _, tensor in weights.named_tensors():
        vals = np.frombuffer(data, dtype="<f8", count=tensor.size, offset=off)
        tensor[...] = vals.reshape(tensor.shape)
        off += tensor.size * 8
    return weights, cfg


# --------------------------------------------------------------------------
# configuration files


def load_config(path) -> dict:
    """Parse a TOML or JSON config file into a flat dict."""
    text_path = str(path)
    try:
        if text_path.endswith(".toml"):
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        if text_path.endswith(".json"):
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
            if not isinstance(obj, dict):
                raise ConfigError("config root must be an object")
            return obj
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {text_path}: {exc}") from exc
    raise ConfigError(f"config must be .toml or .json, got {text_path}")
