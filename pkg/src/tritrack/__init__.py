"""Multi-person tracking over appearance/pose/location embedding triplets.

The pipeline: per-detection descriptor triplets are concatenated into
tokens, optionally aggregated by a per-attribute self-attention
transformer trained with a contrastive re-identification loss, and
associated online with a capped nearest-history matcher. A deterministic
scenario simulator plus CLEAR-style metrics close the loop for end-to-end
verification, and a small CLI ties the stages together.
"""

from .embeddings import (APPEARANCE_DIM, DEFAULT_DIMS, PAD_IDENTITY, POSE_DIM,
                         SPACETIME_DIM, AttributeDims, ClipBatch, HumanToken,
                         concat_token, split_token)
from .camera import (DEFAULT_FOCAL, DEFAULT_Z_NORM, JOINT_NAMES, NUM_JOINTS,
                     CameraCrop, build_spacetime, lift_translation,
                     place_keypoints, temporal_encode)
from .transformer import (AttentionConfig, AttributeParams, BlockWeights,
                          TransformerWeights, attribute_attention,
                          attribute_weighted, backward, forward,
                          forward_with_cache, init_weights, total_attention)
from .training import (LossConfig, PairSet, build_pairs, loss_and_output_grad,
                       loss_gradients, reid_loss, train)
from .assignment import assignment_cost, hungarian
from .association import (FrameAssignment, TrackerConfig, TrackerState,
                          Tracklet, affinity, step, track)
from .metrics import (LabeledDetection, MetricReport, compute_idf1,
                      compute_mota, count_id_switches, evaluate)
from .simulate import (Scenario, SimConfig, apply_shot_change,
                       detection_keys, embed, generate)
from .io import (DetectionRecord, TrackRecord, convert_detections,
                 load_config, load_weights, read_detections, read_tracks,
                 save_weights, write_detections_binary,
                 write_detections_jsonl, write_tracks)
from .errors import (ChecksumError, ConfigError, DataError,
                     DegenerateCameraError, DimensionError, DivergenceError,
                     EmptyClipError, FormatError, TrainingDataError,
                     TritrackError, VersionError)

__version__ = "0.1.0"

__all__ = [
    "APPEARANCE_DIM", "POSE_DIM", "SPACETIME_DIM", "PAD_IDENTITY",
    "DEFAULT_DIMS", "AttributeDims", "ClipBatch", "HumanToken",
    "concat_token", "split_token",
    "DEFAULT_FOCAL", "DEFAULT_Z_NORM", "JOINT_NAMES", "NUM_JOINTS",
    "CameraCrop", "build_spacetime", "lift_translation", "place_keypoints",
    "temporal_encode",
    "AttentionConfig", "AttributeParams", "BlockWeights",
    "TransformerWeights", "attribute_attention", "attribute_weighted",
    "backward", "forward", "forward_with_cache", "init_weights",
    "total_attention",
    "LossConfig", "PairSet", "build_pairs", "loss_and_output_grad",
    "loss_gradients", "reid_loss", "train",
    "assignment_cost", "hungarian",
    "FrameAssignment", "TrackerConfig", "TrackerState", "Tracklet",
    "affinity", "step", "track",
    "LabeledDetection", "MetricReport", "compute_idf1", "compute_mota",
    "count_id_switches", "evaluate",
    "Scenario", "SimConfig", "apply_shot_change", "detection_keys", "embed",
    "generate",
    "DetectionRecord", "TrackRecord", "convert_detections", "load_config",
    "load_weights", "read_detections", "read_tracks", "save_weights",
    "write_detections_binary", "write_detections_jsonl", "write_tracks",
    "TritrackError", "DataError", "DimensionError", "DegenerateCameraError",
    "EmptyClipError", "TrainingDataError", "ConfigError", "FormatError",
    "ChecksumError", "VersionError", "DivergenceError",
]
