"""Pre-association redundancy elimination.

Two independent mechanisms share one policy object:

* duplicate drop (within a camera): a frame too close to the last kept
  frame of the same camera is redundant and dropped;
* dissimilar drop (across cameras): a frame outside the retention band
  against every co-temporal peer is structurally unrelated and dropped.

The first frame of each camera is always kept.
"""

import csv
from dataclasses import dataclass, field

from crosscam import _kernels
from crosscam.errors import ConfigError, ShapeError
from crosscam.scenario import Frame

DUPLICATE = "duplicate"
DISSIMILAR = "dissimilar"


@dataclass
class FilterPolicy:
    ssim_min: float = 0.30  # retention band lower bound
    nmse_max: float = 0.146  # retention band upper bound
    duplicate_ssim_min: float = 0.98
    duplicate_nmse_max: float = 0.0005
    scope: str = "within_camera"  # within_camera | cross_camera | both

    def validate(self) -> None:
        for name in ("ssim_min", "nmse_max", "duplicate_ssim_min", "duplicate_nmse_max"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.duplicate_ssim_min < self.ssim_min:
            raise ConfigError("duplicate_ssim_min must be >= ssim_min")
        if self.duplicate_nmse_max > self.nmse_max:
            raise ConfigError("duplicate_nmse_max must be <= nmse_max")
        if self.scope not in ("within_camera", "cross_camera", "both"):
            raise ConfigError(f"unknown filter scope {self.scope!r}")


@dataclass
class FilterReport:
    kept: list = field(default_factory=list)  # (camera_id, t)
    dropped: list = field(default_factory=list)  # (camera_id, t, reason)
    pair_scores: list = field(default_factory=list)  # ((cam_a, t_a, cam_b, t_b), ssim, nmse)
    decision_scores: dict = field(default_factory=dict)  # (camera_id, t) -> (ssim, nmse)

    @property
    def drop_fraction(self) -> float:
        total = len(self.kept) + len(self.dropped)
        return len(self.dropped) / total if total else 0.0

    def kept_set(self):
        return set(self.kept)

    def to_csv(self, path) -> None:
        rows = {key: (True, "", *self.decision_scores.get(key, ("", ""))) for key in self.kept}
        for cam, t, reason in self.dropped:
            rows[(cam, t)] = (False, reason, *self.decision_scores.get((cam, t), ("", "")))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["camera_id", "t", "kept", "reason", "ssim", "nmse"])
            for (cam, t) in sorted(rows):
                kept, reason, s, m = rows[(cam, t)]
                writer.writerow([cam, t, int(kept), reason, s, m])


def _check_dims(a: Frame, b: Frame) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"frame shapes differ: {a.pixels.shape} vs {b.pixels.shape}")


def ssim(a: Frame, b: Frame) -> float:
    """Mean SSIM over non-overlapping 8x8 windows (partial edges included)."""
    _check_dims(a, b)
    return _kernels.ssim(a.pixels, b.pixels, window=8)


def nmse(a: Frame, b: Frame) -> float:
    """Mean of ((a - b) / 255)^2; zero iff the frames are identical."""
    _check_dims(a, b)
    return _kernels.nmse(a.pixels, b.pixels)


def _group_by_camera(frames):
    streams = {}
    for frame in frames:
        streams.setdefault(frame.camera_id, []).append(frame)
    for cam, stream in streams.items():
        ts = [f.t for f in stream]
        if ts != sorted(ts):
            raise ConfigError(f"camera {cam}: frames are not time-ordered")
    return streams


def filter_stream(frames, policy: FilterPolicy) -> FilterReport:
    """Partition frames into kept and dropped per the policy scope.

    Duplicate detection compares each frame against the last *kept* frame
    of its camera, so a long static stretch collapses to one frame.
    Dissimilarity is judged against the co-temporal peers that survived
    duplicate filtering; a frame with no peers is kept.
    """
    policy.validate()
    frames = list(frames)
    report = FilterReport()
    if not frames:
        return report
    streams = _group_by_camera(frames)

    dropped = {}
    first_of_camera = {cam: stream[0].t for cam, stream in streams.items()}

    if policy.scope in ("within_camera", "both"):
        for cam, stream in streams.items():
            reference = None
            for frame in stream:
                if reference is None:
                    reference = frame
                    continue
                s = ssim(frame, reference)
                m = nmse(frame, reference)
                key = (cam, frame.t)
                report.pair_scores.append(((cam, frame.t, cam, reference.t), s, m))
                report.decision_scores[key] = (s, m)
                if s >= policy.duplicate_ssim_min and m <= policy.duplicate_nmse_max:
                    dropped[key] = DUPLICATE
                else:
                    reference = frame

    if policy.scope in ("cross_camera", "both"):
        by_t = {}
        for frame in frames:
            if (frame.camera_id, frame.t) in dropped:
                continue
            by_t.setdefault(frame.t, []).append(frame)
        for t, cohort in sorted(by_t.items()):
            for frame in cohort:
                peers = [p for p in cohort if p.camera_id != frame.camera_id]
                if not peers or frame.t == first_of_camera[frame.camera_id]:
                    continue
                in_band = False
                best = None
                for peer in peers:
                    s = ssim(frame, peer)
                    m = nmse(frame, peer)
                    report.pair_scores.append(
                        ((frame.camera_id, frame.t, peer.camera_id, peer.t), s, m)
                    )
                    if best is None or s > best[0]:
                        best = (s, m)
                    if s >= policy.ssim_min and m <= policy.nmse_max:
                        in_band = True
                key = (frame.camera_id, frame.t)
                report.decision_scores.setdefault(key, best)
                if not in_band:
                    dropped[key] = DISSIMILAR

    for frame in frames:
        key = (frame.camera_id, frame.t)
        if key in dropped:
            report.dropped.append((key[0], key[1], dropped[key]))
        else:
            report.kept.append(key)
    report.kept.sort()
    report.dropped.sort()
    return report
