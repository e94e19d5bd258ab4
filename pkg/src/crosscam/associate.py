"""Identity association across time and cameras.

Temporal association matches detections at t against the previous frame
of the same camera on similarity 1 - ||e_i - e_j||; spatial association
links co-temporal detections across cameras on cosine similarity and
merges local tracks into global identities with union-find.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from crosscam.errors import ConfigError, ShapeError
from crosscam.percept import Detection


@dataclass
class AssocConfig:
    temporal_threshold: float = 0.65  # on 1 - euclidean distance
    spatial_threshold: float = 0.7  # on cosine similarity
    matching: str = "greedy"  # greedy | optimal

    def validate(self) -> None:
        for name in ("temporal_threshold", "spatial_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.matching not in ("greedy", "optimal"):
            raise ConfigError(f"unknown matching mode {self.matching!r}")


@dataclass
class SimilarityMatrix:
    values: np.ndarray  # rows: current detections, cols: reference detections


@dataclass
class Tracklet:
    global_id: int
    observations: list  # time-ordered (camera_id, t, bbox, detection_ref)


@dataclass
class GlobalIdAssignment:
    detections: list
    embeddings: list
    local_labels: list  # per detection
    global_ids: list  # per detection

    def partition(self):
        """Frozen partition of detection refs by global id (label-free)."""
        groups = {}
        for det, gid in zip(self.detections, self.global_ids):
            groups.setdefault(gid, set()).add((det.camera_id, det.t, det.index))
        return frozenset(frozenset(g) for g in groups.values())

    def num_global_ids(self) -> int:
        return len(set(self.global_ids))


def _stack(embeddings):
    if not embeddings:
        return np.zeros((0, 0))
    mat = np.stack([e.vector for e in embeddings])
    return mat


def similarity_matrix(current, reference) -> SimilarityMatrix:
    """S[i][j] = 1 - ||current_i - reference_j||_2."""
    cur = _stack(current)
    ref = _stack(reference)
    if cur.size and ref.size and cur.shape[1] != ref.shape[1]:
        raise ShapeError(f"embedding dims differ: {cur.shape[1]} vs {ref.shape[1]}")
    if not cur.size or not ref.size:
        return SimilarityMatrix(values=np.zeros((len(current), len(reference))))
    deltas = cur[:, None, :] - ref[None, :, :]
    return SimilarityMatrix(values=1.0 - np.linalg.norm(deltas, axis=2))


def cosine(a, b) -> float:
    """Cosine similarity; raises for zero vectors."""
    va = a.vector if hasattr(a, "vector") else np.asarray(a, dtype=np.float64)
    vb = b.vector if hasattr(b, "vector") else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ShapeError(f"embedding dims differ: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ArithmeticError("cosine undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def _match_pairs(values: np.ndarray, threshold: float, mode: str):
    """One-to-one (row, col) matches with similarity strictly above threshold.

    Greedy takes pairs by descending similarity with (row, col) index
    tie-break; optimal solves the assignment problem and then applies the
    same threshold.
    """
    n_rows, n_cols = values.shape
    if n_rows == 0 or n_cols == 0:
        return []
    if mode == "optimal":
        rows, cols = linear_sum_assignment(-values)
        return [(int(r), int(c)) for r, c in zip(rows, cols) if values[r, c] > threshold]
    order = sorted(
        ((values[r, c], r, c) for r in range(n_rows) for c in range(n_cols)),
        key=lambda item: (-item[0], item[1], item[2]),
    )
    taken_rows = set()
    taken_cols = set()
    matches = []
    for sim, r, c in order:
        if sim <= threshold:
            break
        if r in taken_rows or c in taken_cols:
            continue
        matches.append((r, c))
        taken_rows.add(r)
        taken_cols.add(c)
    return matches


def associate_temporal(detections, embeddings, config: AssocConfig):
    """Per-camera local track labels, one per detection, matched frame to frame.

    Labels are integers unique across all cameras; unmatched detections
    open fresh labels.
    """
    config.validate()
    by_camera = {}
    for i, det in enumerate(detections):
        by_camera.setdefault(det.camera_id, {}).setdefault(det.t, []).append(i)

    labels = [-1] * len(detections)
    next_label = 0
    for cam in sorted(by_camera):
        frames = by_camera[cam]
        prev_indices = []
        for t in sorted(frames):
            cur_indices = sorted(frames[t], key=lambda i: detections[i].index)
            if prev_indices:
                sim = similarity_matrix(
                    [embeddings[i] for i in cur_indices],
                    [embeddings[j] for j in prev_indices],
                ).values
                matched = _match_pairs(sim, config.temporal_threshold, config.matching)
            else:
                matched = []
            matched_rows = set()
            for r, c in matched:
                labels[cur_indices[r]] = labels[prev_indices[c]]
                matched_rows.add(r)
            for r, i in enumerate(cur_indices):
                if r not in matched_rows:
                    labels[i] = next_label
                    next_label += 1
            prev_indices = cur_indices
    return labels


class UnionFind:
    """Union-find with path compression over integer labels."""

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # anchor on the smaller label for reproducibility
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def associate_spatial(detections, embeddings, local_labels, config: AssocConfig) -> GlobalIdAssignment:
    """Merge local tracks whose co-temporal cross-camera detections agree.

    A cosine similarity strictly above the spatial threshold between two
    detections at the same step in different cameras links their local
    tracks; global ids are the connected components, numbered by first
    appearance (t, camera, index).
    """
    config.validate()
    n_labels = max(local_labels) + 1 if local_labels else 0
    uf = UnionFind(n_labels)

    by_t = {}
    for i, det in enumerate(detections):
        by_t.setdefault(det.t, []).append(i)

    for t in sorted(by_t):
        cohort = by_t[t]
        by_cam = {}
        for i in cohort:
            by_cam.setdefault(detections[i].camera_id, []).append(i)
        cams = sorted(by_cam)
        for a_pos, cam_a in enumerate(cams):
            for cam_b in cams[a_pos + 1 :]:
                for i in by_cam[cam_a]:
                    va = embeddings[i].vector
                    for j in by_cam[cam_b]:
                        sim = float(
                            np.dot(va, embeddings[j].vector)
                            / (np.linalg.norm(va) * np.linalg.norm(embeddings[j].vector))
                        )
                        if sim > config.spatial_threshold:
                            uf.union(local_labels[i], local_labels[j])

    first_seen = {}
    for i, det in enumerate(detections):
        root = uf.find(local_labels[i])
        key = (det.t, det.camera_id, det.index)
        if root not in first_seen or key < first_seen[root]:
            first_seen[root] = key
    ordered_roots = sorted(first_seen, key=lambda r: first_seen[r])
    root_to_gid = {root: gid for gid, root in enumerate(ordered_roots)}

    global_ids = [root_to_gid[uf.find(label)] for label in local_labels]
    return GlobalIdAssignment(
        detections=list(detections),
        embeddings=list(embeddings),
        local_labels=list(local_labels),
        global_ids=global_ids,
    )


def build_tracklets(assignment: GlobalIdAssignment):
    """One tracklet per global id; observation count equals detection count."""
    groups = {}
    for det, gid in zip(assignment.detections, assignment.global_ids):
        groups.setdefault(gid, []).append(
            (det.t, det.camera_id, det.bbox, (det.camera_id, det.t, det.index))
        )
    tracklets = []
    for gid in sorted(groups):
        obs = sorted(groups[gid], key=lambda o: (o[0], o[1], o[3]))
        tracklets.append(
            Tracklet(
                global_id=gid,
                observations=[(cam, t, bbox, ref) for t, cam, bbox, ref in obs],
            )
        )
    return tracklets


def write_assignment(assignment: GlobalIdAssignment, path) -> None:
    """Line-delimited (camera_id, t, bbox, global_id) records."""
    with open(path, "w") as fh:
        for det, label, gid in zip(
            assignment.detections, assignment.local_labels, assignment.global_ids
        ):
            fh.write(
                json.dumps(
                    {
                        "camera_id": det.camera_id,
                        "t": det.t,
                        "index": det.index,
                        "bbox": list(det.bbox),
                        "confidence": det.confidence,
                        "local_label": label,
                        "global_id": gid,
                        "true_identity": det.true_identity,
                    }
                )
                + "\n"
            )


def read_assignment(path) -> GlobalIdAssignment:
    """Rebuild an assignment from its line-delimited form (embeddings are
    not persisted here; the loaded object carries an empty embedding list)."""
    detections = []
    labels = []
    gids = []
    with open(path) as fh:
        for line in fh:
            doc = json.loads(line)
            detections.append(
                Detection(
                    camera_id=doc["camera_id"],
                    t=doc["t"],
                    index=doc["index"],
                    bbox=tuple(doc["bbox"]),
                    confidence=doc.get("confidence", 1.0),
                    true_identity=doc.get("true_identity"),
                )
            )
            labels.append(doc.get("local_label", doc["global_id"]))
            gids.append(doc["global_id"])
    return GlobalIdAssignment(
        detections=detections, embeddings=[], local_labels=labels, global_ids=gids
    )
