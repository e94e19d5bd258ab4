"""Simulated detection and appearance embedding.

The detector turns ground-truth records into confidence-gated detections
with configurable miss/jitter/false-positive noise. The embedder places
each identity at a seeded prototype on the unit sphere and perturbs it
with a per-camera bias and per-detection noise, reproducing the geometry
the association thresholds assume. Both are pure functions of
(input, config): every random draw is keyed by (seed, camera, t, ...).
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from crosscam.errors import ConfigError

_TAG_DETECT = 10
_TAG_FALSE_POS = 11
_TAG_PROTO = 12
_TAG_BIAS = 13
_TAG_NOISE = 14
_TAG_FP_EMBED = 15


@dataclass
class PerceptConfig:
    confidence_threshold: float = 0.45
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    bbox_jitter_sigma: float = 0.0
    confidence_sigma: float = 0.2
    embed_noise_sigma: float = 0.15
    camera_bias_sigma: float = 0.1
    embed_dim: int = 512
    seed: int = 0

    def validate(self) -> None:
        for name in ("confidence_threshold", "miss_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        for name in (
            "false_positive_rate",
            "bbox_jitter_sigma",
            "confidence_sigma",
            "embed_noise_sigma",
            "camera_bias_sigma",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2")


@dataclass
class Detection:
    camera_id: int
    t: int
    index: int  # position within this frame's detection list
    bbox: tuple  # (x_min, y_min, x_max, y_max), pixels
    confidence: float
    true_identity: int | None  # evaluation-only; association never reads it


@dataclass
class Embedding:
    vector: np.ndarray  # unit norm, float64
    detection_ref: tuple  # (camera_id, t, index)


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def _sample_confidence(rng, config: PerceptConfig) -> float:
    if config.confidence_sigma == 0.0:
        return 1.0
    return float(min(max(1.0 - abs(rng.normal(0.0, config.confidence_sigma)), 0.0), 1.0))


def confidence_pass_probability(config: PerceptConfig) -> float:
    """P(confidence >= threshold) under the sampling scheme."""
    if config.confidence_sigma == 0.0:
        return 1.0 if config.confidence_threshold <= 1.0 else 0.0
    return math.erf((1.0 - config.confidence_threshold) / (config.confidence_sigma * math.sqrt(2.0)))


def simulate_detections(gt, config: PerceptConfig, frame_sizes=None):
    """Detections for ground-truth records, plus seeded false positives.

    ``frame_sizes`` maps camera_id -> (width, height) and bounds jittered
    and spurious boxes; without it, boxes are clipped to the envelope of
    that camera's ground-truth boxes.
    """
    config.validate()
    if frame_sizes is None:
        frame_sizes = {}
        for rec in gt:
            w, h = frame_sizes.get(rec.camera_id, (0, 0))
            frame_sizes[rec.camera_id] = (max(w, rec.bbox[2]), max(h, rec.bbox[3]))

    frames = {}
    for rec in gt:
        frames.setdefault((rec.camera_id, rec.t), []).append(rec)

    detections = []
    for (cam, t) in sorted(frames):
        frame_dets = []
        for rec in sorted(frames[(cam, t)], key=lambda r: r.identity_id):
            rng = _rng(config.seed, _TAG_DETECT, cam, t, rec.identity_id)
            if rng.random() < config.miss_rate:
                continue
            x0, y0, x1, y1 = (float(v) for v in rec.bbox)
            if config.bbox_jitter_sigma > 0:
                jx0, jy0, jx1, jy1 = rng.normal(0.0, config.bbox_jitter_sigma, 4)
                x0, y0, x1, y1 = x0 + jx0, y0 + jy0, x1 + jx1, y1 + jy1
                if x1 < x0:
                    x0, x1 = x1, x0
                if y1 < y0:
                    y0, y1 = y1, y0
                width, height = frame_sizes.get(cam, (0, 0))
                if width and height:
                    x0 = min(max(x0, 0.0), width - 1.0)
                    y0 = min(max(y0, 0.0), height - 1.0)
                    x1 = min(max(x1, x0 + 1.0), float(width))
                    y1 = min(max(y1, y0 + 1.0), float(height))
                else:
                    x1 = max(x1, x0 + 1.0)
                    y1 = max(y1, y0 + 1.0)
            confidence = _sample_confidence(rng, config)
            if confidence < config.confidence_threshold:
                continue
            frame_dets.append(((x0, y0, x1, y1), confidence, rec.identity_id))

        if config.false_positive_rate > 0:
            fp_rng = _rng(config.seed, _TAG_FALSE_POS, cam, t)
            width, height = frame_sizes.get(cam, (0, 0))
            if width >= 2 and height >= 2:
                for _ in range(fp_rng.poisson(config.false_positive_rate)):
                    bw = float(fp_rng.uniform(2.0, max(width / 4.0, 3.0)))
                    bh = float(fp_rng.uniform(2.0, max(height / 4.0, 3.0)))
                    cx = float(fp_rng.uniform(0.0, width))
                    cy = float(fp_rng.uniform(0.0, height))
                    x0 = min(max(cx - bw / 2.0, 0.0), width - 1.0)
                    y0 = min(max(cy - bh / 2.0, 0.0), height - 1.0)
                    x1 = min(x0 + bw, float(width))
                    y1 = min(y0 + bh, float(height))
                    confidence = _sample_confidence(fp_rng, config)
                    if confidence < config.confidence_threshold:
                        continue
                    frame_dets.append(((x0, y0, x1, y1), confidence, None))

        for index, (bbox, confidence, identity) in enumerate(frame_dets):
            detections.append(
                Detection(
                    camera_id=cam,
                    t=t,
                    index=index,
                    bbox=bbox,
                    confidence=confidence,
                    true_identity=identity,
                )
            )
    return detections


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ArithmeticError("cannot normalize a zero vector")
    return vector / norm


def identity_prototype(identity: int, config: PerceptConfig) -> np.ndarray:
    return _unit(_rng(config.seed, _TAG_PROTO, identity).standard_normal(config.embed_dim))


def camera_bias(camera_id: int, config: PerceptConfig) -> np.ndarray:
    direction = _unit(_rng(config.seed, _TAG_BIAS, camera_id).standard_normal(config.embed_dim))
    return direction * config.camera_bias_sigma


def embed_detection(det: Detection, config: PerceptConfig) -> Embedding:
    """Unit-norm appearance vector; prototype + bias + noise for real
    identities, a fresh random direction for false positives."""
    config.validate()
    if det.true_identity is None:
        vector = _unit(
            _rng(config.seed, _TAG_FP_EMBED, det.camera_id, det.t, det.index).standard_normal(
                config.embed_dim
            )
        )
    else:
        proto = identity_prototype(det.true_identity, config)
        vector = proto.copy()
        if config.camera_bias_sigma > 0:
            vector = vector + camera_bias(det.camera_id, config)
        if config.embed_noise_sigma > 0:
            noise = _rng(config.seed, _TAG_NOISE, det.camera_id, det.t, det.index).standard_normal(
                config.embed_dim
            )
            vector = vector + noise * (config.embed_noise_sigma / math.sqrt(config.embed_dim))
        vector = _unit(vector)
    return Embedding(vector=vector, detection_ref=(det.camera_id, det.t, det.index))


def embed_all(detections, config: PerceptConfig):
    return [embed_detection(det, config) for det in detections]


# -- checkpoint serialization -------------------------------------------------

def write_records(detections, embeddings, path) -> None:
    """Line-delimited records, one detection (with its embedding) per line."""
    with open(path, "w") as fh:
        for det, emb in zip(detections, embeddings):
            fh.write(
                json.dumps(
                    {
                        "camera_id": det.camera_id,
                        "t": det.t,
                        "index": det.index,
                        "bbox": list(det.bbox),
                        "confidence": det.confidence,
                        "true_identity": det.true_identity,
                        "embedding": emb.vector.tolist(),
                    }
                )
                + "\n"
            )


def read_records(path):
    detections = []
    embeddings = []
    with open(path) as fh:
        for line in fh:
            doc = json.loads(line)
            det = Detection(
                camera_id=doc["camera_id"],
                t=doc["t"],
                index=doc["index"],
                bbox=tuple(doc["bbox"]),
                confidence=doc["confidence"],
                true_identity=doc["true_identity"],
            )
            detections.append(det)
            embeddings.append(
                Embedding(
                    vector=np.array(doc["embedding"], dtype=np.float64),
                    detection_ref=(det.camera_id, det.t, det.index),
                )
            )
    return detections, embeddings
