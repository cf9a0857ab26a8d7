"""Multi-object tracking quality metrics.

Ground truth and tracker output are joined per detection: each record says
which ground-truth identity (if any) and which predicted track id (if any)
a detection carries. From that correspondence the module computes identity
switches, MOTA and IDF1.

Identity switches follow the usual convention: for each ground-truth
identity, walk its matched frames in order and count changes of the
predicted id; frames where the identity went unmatched are skipped and the
first match never counts as a switch.

IDF1 uses a global one-to-one mapping between ground-truth and predicted
identities that maximizes the number of correctly attributed detections,
found with the assignment solver on negated overlap counts.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .assignment import hungarian
from .errors import DataError


@dataclass(frozen=True)
class LabeledDetection:
    """One detection with its ground-truth and predicted identities."""

    frame: int
    det_key: str
    gt_id: int | None = None
    pred_id: int | None = None


@dataclass(frozen=True)
class MetricReport:
    """Summary scores of one sequence."""

    num_gt: int
    false_positives: int
    false_negatives: int
    id_switches: int
    mota: float
    idf1: float

    def as_dict(self) -> dict:
        return {
            "num_gt": self.num_gt,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "id_switches": self.id_switches,
            "mota": self.mota,
            "idf1": self.idf1,
        }


def _check(detections):
    seen = set()
    for d in detections:
        key = (d.frame, d.det_key)
        if key in seen:
            raise DataError(
                f"duplicate detection (frame={d.frame}, det_key={d.det_key!r})")
        seen.add(key)
    return sorted(detections, key=lambda d: (d.frame, d.det_key))


def count_id_switches(detections) -> int:
    """Number of predicted-id changes along each ground-truth identity."""
    per_gt = defaultdict(list)
    for d in _check(detections):
        if d.gt_id is not None and d.pred_id is not None:
            per_gt[d.gt_id].append((d.frame, d.pred_id))
    switches = 0
    for entries in per_gt.values():
        entries.sort(key=lambda e: e[0])
        last = None
        for _, pred in entries:
            if last is not None and pred != last:
                switches += 1
            last = pred
    return switches


def compute_mota(detections) -> float:
    """MOTA = 1 - (FN + FP + IDSW) / num_gt. Undefined without ground truth."""
    detections = _check(detections)
    num_gt = sum(1 for d in detections if d.gt_id is not None)
    if num_gt == 0:
        raise DataError("MOTA is undefined: sequence has no ground truth")
    fn = sum(1 for d in detections
             if d.gt_id is not None and d.pred_id is None)
    fp = sum(1 for d in detections
             if d.gt_id is None and d.pred_id is not None)
    idsw = count_id_switches(detections)
    return 1.0 - (fn + fp + idsw) / num_gt


def compute_idf1(detections) -> float:
    """Identity F1 under the best global gt-to-prediction id mapping."""
    detections = _check(detections)
    total_gt = sum(1 for d in detections if d.gt_id is not None)
    total_pred = sum(1 for d in detections if d.pred_id is not None)
    if total_gt == 0 and total_pred == 0:
        raise DataError("IDF1 is undefined: no identities on either side")
    overlap = defaultdict(int)
    for d in detections:
        if d.gt_id is not None and d.pred_id is not None:
            overlap[(d.gt_id, d.pred_id)] += 1
    gt_ids = sorted({g for g, _ in overlap})
    pred_ids = sorted({p for _, p in overlap})
    idtp = 0
    if gt_ids and pred_ids:
        cost = [[-overlap[(g, p)] for p in pred_ids] for g in gt_ids]
        for r, c in hungarian(cost):
            idtp += overlap[(gt_ids[r], pred_ids[c])]
    idfp = total_pred - idtp
    idfn = total_gt - idtp
    return 2.0 * idtp / (2.0 * idtp + idfp + idfn)


def evaluate(detections) -> MetricReport:
    """All metrics of one sequence in a single report."""
    detections = _check(detections)
    num_gt = sum(1 for d in detections if d.gt_id is not None)
    if num_gt == 0:
        raise DataError("evaluation needs ground-truth identities")
    fn = sum(1 for d in detections
             if d.gt_id is not None and d.pred_id is None)
    fp = sum(1 for d in detections
             if d.gt_id is None and d.pred_id is not None)
    idsw = count_id_switches(detections)
    return MetricReport(
        num_gt=num_gt,
        false_positives=fp,
        false_negatives=fn,
        id_switches=idsw,
        mota=1.0 - (fn + fp + idsw) / num_gt,
        idf1=compute_idf1(detections),
    )
