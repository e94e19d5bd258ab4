"""Tracking quality metrics.

A ground-truth record counts as correctly tracked when a predicted box at
the same (camera, t) overlaps it with IoU at or above the threshold and
carries the global id that the identity mapping assigns to that person.
The headline metric averages the per-camera correct fractions.

Predicted global ids are arbitrary labels, so they are first mapped to
ground-truth identities with an optimal bijective assignment over
co-detection counts (the standard identity-mapping reading); the metric
is therefore invariant under relabeling.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from crosscam.errors import ConfigError, MetricUndefinedError


@dataclass
class EvalConfig:
    iou_threshold: float = 0.7
    id_mapping: str = "optimal_bijective"  # optimal_bijective | first_match

    def validate(self) -> None:
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ConfigError(f"iou_threshold must be in [0, 1], got {self.iou_threshold}")
        if self.id_mapping not in ("optimal_bijective", "first_match"):
            raise ConfigError(f"unknown id_mapping {self.id_mapping!r}")


@dataclass
class EvalReport:
    per_camera_correct: dict
    per_camera_total: dict
    mtta_pct: float
    id_switches: int
    id_map: dict  # ground-truth identity -> global id
    degenerate_boxes: int = 0

    def to_dict(self):
        return {
            "mtta_pct": self.mtta_pct,
            "id_switches": self.id_switches,
            "per_camera_correct": {str(k): v for k, v in sorted(self.per_camera_correct.items())},
            "per_camera_total": {str(k): v for k, v in sorted(self.per_camera_total.items())},
            "id_map": {str(k): v for k, v in sorted(self.id_map.items())},
            "degenerate_boxes": self.degenerate_boxes,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv_row(self, path, header_fields=(), values=()) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*header_fields, "mtta_pct", "id_switches"])
            writer.writerow([*values, self.mtta_pct, self.id_switches])


def iou(a, b) -> float:
    """Intersection over union of two (x0, y0, x1, y1) boxes; 0 when disjoint
    or degenerate."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    area_a = max(ax1 - ax0, 0.0) * max(ay1 - ay0, 0.0)
    area_b = max(bx1 - bx0, 0.0) * max(by1 - by0, 0.0)
    if area_a == 0.0 or area_b == 0.0:
        return 0.0
    ix0 = max(ax0, bx0)
    iy0 = max(ay0, by0)
    ix1 = min(ax1, bx1)
    iy1 = min(ay1, by1)
    inter = max(ix1 - ix0, 0.0) * max(iy1 - iy0, 0.0)
    return inter / (area_a + area_b - inter)


def _predictions_by_frame(tracklets):
    frames = {}
    for tracklet in tracklets:
        for cam, t, bbox, _ref in tracklet.observations:
            frames.setdefault((cam, t), []).append((bbox, tracklet.global_id))
    return frames


def _match_frames(tracklets, ground_truth, iou_threshold: float):
    """Per-frame one-to-one GT/prediction matches by descending IoU.

    Returns {(camera_id, t, identity_id): global_id} for matched records.
    """
    predictions = _predictions_by_frame(tracklets)
    gt_frames = {}
    for rec in ground_truth:
        gt_frames.setdefault((rec.camera_id, rec.t), []).append(rec)

    matched = {}
    for key, records in gt_frames.items():
        preds = predictions.get(key, [])
        if not preds:
            continue
        candidates = []
        for gi, rec in enumerate(records):
            for pi, (bbox, _gid) in enumerate(preds):
                score = iou(rec.bbox, bbox)
                if score >= iou_threshold:
                    candidates.append((score, gi, pi))
        candidates.sort(key=lambda item: (-item[0], item[1], item[2]))
        taken_gt = set()
        taken_pred = set()
        for _score, gi, pi in candidates:
            if gi in taken_gt or pi in taken_pred:
                continue
            taken_gt.add(gi)
            taken_pred.add(pi)
            rec = records[gi]
            matched[(rec.camera_id, rec.t, rec.identity_id)] = preds[pi][1]
    return matched


def _count_matrix(matched):
    """Co-detection counts as {gt_id: {global_id: count}}."""
    counts = {}
    for (_cam, _t, identity), gid in matched.items():
        counts.setdefault(identity, {}).setdefault(gid, 0)
        counts[identity][gid] += 1
    return counts


def _optimal_bijective_map(counts):
    """Bijective partial map maximizing total matched detections.

    Among maximizers, picks the lexicographically smallest mapping
    (ascending ground-truth id, then ascending global id).
    """
    gt_ids = sorted(counts)
    gids = sorted({g for row in counts.values() for g in row})
    if not gt_ids or not gids:
        return {}
    matrix = np.zeros((len(gt_ids), len(gids)))
    for i, identity in enumerate(gt_ids):
        for j, gid in enumerate(gids):
            matrix[i, j] = counts[identity].get(gid, 0)

    def best_total(mat):
        rows, cols = linear_sum_assignment(-mat)
        return float(mat[rows, cols].sum())

    target = best_total(matrix)
    id_map = {}
    working = matrix.copy()
    live_rows = list(range(len(gt_ids)))
    live_cols = list(range(len(gids)))
    for i in list(live_rows):
        row_pos = live_rows.index(i)
        fixed = None
        for j in live_cols:
            if counts[gt_ids[i]].get(gids[j], 0) <= 0:
                continue
            col_pos = live_cols.index(j)
            gain = working[row_pos, col_pos]
            rest = np.delete(np.delete(working, row_pos, axis=0), col_pos, axis=1)
            rest_total = best_total(rest) if rest.size else 0.0
            if gain + rest_total == target:
                fixed = j
                target -= gain
                working = rest
                break
        if fixed is not None:
            id_map[gt_ids[i]] = gids[fixed]
            live_rows.remove(i)
            live_cols.remove(fixed)
        else:
            # leaving this gt id unmapped must preserve the optimum
            rest = np.delete(working, row_pos, axis=0)
            working = rest
            live_rows.remove(i)
    return id_map


def _first_match_map(matched):
    """Greedy mapping in first-appearance order; still bijective."""
    order = sorted(matched.items(), key=lambda kv: (kv[0][1], kv[0][0], kv[0][2]))
    id_map = {}
    used = set()
    for (_cam, _t, identity), gid in order:
        if identity in id_map or gid in used:
            continue
        id_map[identity] = gid
        used.add(gid)
    return id_map


def map_ids(tracklets, ground_truth, config: EvalConfig) -> dict:
    """Ground-truth identity -> global id mapping used for correctness."""
    config.validate()
    matched = _match_frames(tracklets, ground_truth, config.iou_threshold)
    if config.id_mapping == "first_match":
        return _first_match_map(matched)
    return _optimal_bijective_map(_count_matrix(matched))


def mtta(tracklets, ground_truth, config: EvalConfig) -> EvalReport:
    """Mean per-camera fraction of correctly tracked ground-truth records."""
    config.validate()
    ground_truth = list(ground_truth)
    cameras = sorted({rec.camera_id for rec in ground_truth})
    if not cameras:
        raise MetricUndefinedError("no camera has ground-truth records")

    matched = _match_frames(tracklets, ground_truth, config.iou_threshold)
    if config.id_mapping == "first_match":
        id_map = _first_match_map(matched)
    else:
        id_map = _optimal_bijective_map(_count_matrix(matched))

    degenerate = sum(
        1 for rec in ground_truth if rec.bbox[2] <= rec.bbox[0] or rec.bbox[3] <= rec.bbox[1]
    )
    correct = {cam: 0 for cam in cameras}
    total = {cam: 0 for cam in cameras}
    for rec in ground_truth:
        total[rec.camera_id] += 1
        gid = matched.get((rec.camera_id, rec.t, rec.identity_id))
        if gid is not None and id_map.get(rec.identity_id) == gid:
            correct[rec.camera_id] += 1

    mtta_pct = 100.0 * float(np.mean([correct[cam] / total[cam] for cam in cameras]))
    return EvalReport(
        per_camera_correct=correct,
        per_camera_total=total,
        mtta_pct=mtta_pct,
        id_switches=id_switches(tracklets, ground_truth, config),
        id_map=id_map,
        degenerate_boxes=degenerate,
    )


def id_switches(tracklets, ground_truth, config: EvalConfig | None = None) -> int:
    """Transitions of the matched global id along each (camera, identity)
    track; unmatched gaps do not count."""
    config = config or EvalConfig()
    matched = _match_frames(tracklets, ground_truth, config.iou_threshold)
    sequences = {}
    for rec in sorted(ground_truth, key=lambda r: (r.camera_id, r.identity_id, r.t)):
        gid = matched.get((rec.camera_id, rec.t, rec.identity_id))
        if gid is None:
            continue
        sequences.setdefault((rec.camera_id, rec.identity_id), []).append(gid)
    switches = 0
    for gids in sequences.values():
        switches += sum(1 for prev, cur in zip(gids, gids[1:]) if prev != cur)
    return switches
