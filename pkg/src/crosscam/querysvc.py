"""Online-phase metadata store and query resolution.

The store indexes (global id, camera, t) records in memory with an
optional append-only line-delimited log for persistence; queries return
counts or timestamps plus tile-level visual evidence, and measure the
bytes that shipping only those tiles would cost through the codec.
Single writer, many readers: ingest swaps complete index snapshots.
"""

import json
from dataclasses import dataclass, field

from crosscam import codec
from crosscam.errors import IntegrityError
from crosscam.roicover import RoiMask, apply_mask
from crosscam.scenario import Frame

APPEARANCES = "appearances"
DISTINCT_COUNT = "distinct_count"
FIRST_ENTRY = "first_entry"


@dataclass(frozen=True)
class MetadataRecord:
    global_id: int
    camera_id: int
    t: int
    bbox: tuple
    embedding_ref: tuple  # (camera_id, t, index)
    tile_refs: tuple  # tile indices intersecting the bbox

    def key(self):
        return (self.global_id, self.camera_id, self.t, self.embedding_ref[2])

    def to_json(self) -> str:
        return json.dumps(
            {
                "global_id": self.global_id,
                "camera_id": self.camera_id,
                "t": self.t,
                "bbox": list(self.bbox),
                "embedding_ref": list(self.embedding_ref),
                "tile_refs": list(self.tile_refs),
            }
        )

    @classmethod
    def from_json(cls, line: str):
        doc = json.loads(line)
        return cls(
            global_id=doc["global_id"],
            camera_id=doc["camera_id"],
            t=doc["t"],
            bbox=tuple(doc["bbox"]),
            embedding_ref=tuple(doc["embedding_ref"]),
            tile_refs=tuple(doc["tile_refs"]),
        )


@dataclass
class QueryResult:
    kind: str
    value: object  # count or (t, camera_id); None for not-found
    evidence: list = field(default_factory=list)  # (camera_id, t, tile rectangles)
    bytes_transmitted: int = 0


class QueryStore:
    """Indexed metadata with brute-force-equivalent query semantics.

    ``masks`` (camera_id -> RoiMask) scope evidence tiles; a
    ``frame_provider`` callable (camera_id, t) -> Frame enables byte
    accounting for evidence transmission.
    """

    def __init__(self, masks=None, frame_provider=None, log_path=None):
        self.masks = dict(masks or {})
        self.frame_provider = frame_provider
        self.log_path = log_path
        self._records = {}
        self._by_gid = {}
        self._by_frame = {}

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self):
        return list(self._records.values())

    def ingest(self, records) -> int:
        """Add records; re-ingesting identical records is a no-op, a same-key
        record with different content raises IntegrityError."""
        fresh = []
        staged = dict(self._records)
        for rec in records:
            key = rec.key()
            existing = staged.get(key)
            if existing is not None:
                if existing != rec:
                    raise IntegrityError(f"conflicting duplicate for key {key}")
                continue
            staged[key] = rec
            fresh.append(rec)
        # rebuild indexes then swap, so readers never observe a partial batch
        by_gid = {}
        by_frame = {}
        for rec in staged.values():
            by_gid.setdefault(rec.global_id, []).append(rec)
            by_frame.setdefault((rec.camera_id, rec.t), []).append(rec)
        for bucket in by_gid.values():
            bucket.sort(key=lambda r: (r.t, r.camera_id, r.embedding_ref[2]))
        self._records, self._by_gid, self._by_frame = staged, by_gid, by_frame
        if self.log_path and fresh:
            with open(self.log_path, "a") as fh:
                for rec in fresh:
                    fh.write(rec.to_json() + "\n")
        return len(fresh)

    @classmethod
    def load(cls, log_path, masks=None, frame_provider=None):
        store = cls(masks=masks, frame_provider=frame_provider, log_path=None)
        records = []
        with open(log_path) as fh:
            for line in fh:
                if line.strip():
                    records.append(MetadataRecord.from_json(line))
        store.ingest(records)
        store.log_path = log_path
        return store

    def _evidence(self, records, limit=None):
        evidence = []
        total_bytes = 0
        for rec in records if limit is None else records[:limit]:
            mask = self.masks.get(rec.camera_id)
            if mask is not None:
                tiles = [t for t in rec.tile_refs if t in mask.selected_tiles]
                rects = [mask.grid.tile_rect(t) for t in tiles]
            else:
                rects = []
            evidence.append((rec.camera_id, rec.t, rects))
            if self.frame_provider is not None and mask is not None and rects:
                frame = self.frame_provider(rec.camera_id, rec.t)
                tile_mask = RoiMask(
                    camera_id=rec.camera_id,
                    grid=mask.grid,
                    selected_tiles=tuple(tiles),
                    merged_rects=tuple(rects),
                )
                masked = apply_mask(frame, tile_mask)
                total_bytes += codec.encode_frame(masked).payload_bytes
        return evidence, total_bytes

    def query_appearances(self, global_id: int, limit=None) -> QueryResult:
        """How many times the identity appears, with per-appearance evidence."""
        records = self._by_gid.get(global_id, [])
        evidence, total_bytes = self._evidence(records, limit)
        return QueryResult(
            kind=APPEARANCES,
            value=len(records),
            evidence=evidence,
            bytes_transmitted=total_bytes,
        )

    def query_distinct_count(self, t_range) -> QueryResult:
        """Distinct identities within an inclusive [t0, t1] step range."""
        t0, t1 = t_range
        if t0 > t1:
            raise ValueError(f"inverted range ({t0}, {t1})")
        gids = {rec.global_id for rec in self._records.values() if t0 <= rec.t <= t1}
        return QueryResult(kind=DISTINCT_COUNT, value=len(gids))

    def query_first_entry(self, global_id: int) -> QueryResult:
        """Earliest step for the identity; camera ties go to the lowest id."""
        records = self._by_gid.get(global_id)
        if not records:
            return QueryResult(kind=FIRST_ENTRY, value=None)
        best = min(records, key=lambda r: (r.t, r.camera_id))
        evidence, total_bytes = self._evidence([best])
        return QueryResult(
            kind=FIRST_ENTRY,
            value=(best.t, best.camera_id),
            evidence=evidence,
            bytes_transmitted=total_bytes,
        )


def records_from_assignment(assignment, masks=None):
    """Build metadata records from association output.

    ``masks`` scopes tile_refs to each camera's grid; without a mask for a
    camera, tile_refs stay empty.
    """
    records = []
    for det, gid in zip(assignment.detections, assignment.global_ids):
        mask = (masks or {}).get(det.camera_id)
        tiles = tuple(mask.grid.tiles_for_bbox(det.bbox)) if mask is not None else ()
        records.append(
            MetadataRecord(
                global_id=gid,
                camera_id=det.camera_id,
                t=det.t,
                bbox=tuple(det.bbox),
                embedding_ref=(det.camera_id, det.t, det.index),
                tile_refs=tiles,
            )
        )
    return records
