"""Simulated detection and embedding behavior."""

import numpy as np
import pytest

from crosscam.errors import ConfigError
from crosscam.percept import (
    PerceptConfig,
    confidence_pass_probability,
    embed_all,
    embed_detection,
    identity_prototype,
    read_records,
    simulate_detections,
    write_records,
)
from crosscam.scenario import GroundTruthRecord


def _gt(camera_id, t, identity, bbox=(10, 10, 20, 20)):
    return GroundTruthRecord(
        camera_id=camera_id, t=t, identity_id=identity, bbox=bbox, fully_visible=True
    )


def _noiseless(**overrides):
    kwargs = dict(
        miss_rate=0.0, false_positive_rate=0.0, bbox_jitter_sigma=0.0, confidence_sigma=0.0
    )
    kwargs.update(overrides)
    return PerceptConfig(**kwargs)


FRAME_SIZES = {0: (64, 64), 1: (64, 64)}


def test_noiseless_detections_match_ground_truth():
    gt = [_gt(0, t, i, bbox=(t, i, t + 5, i + 5)) for t in range(4) for i in range(2)]
    dets = simulate_detections(gt, _noiseless(), FRAME_SIZES)
    assert len(dets) == len(gt)
    by_key = {(d.camera_id, d.t, d.true_identity): d for d in dets}
    for rec in gt:
        det = by_key[(rec.camera_id, rec.t, rec.identity_id)]
        assert det.bbox == tuple(float(v) for v in rec.bbox)
        assert det.confidence == 1.0


def test_miss_rate_one_detects_nothing():
    gt = [_gt(0, t, 0) for t in range(10)]
    dets = simulate_detections(gt, _noiseless(miss_rate=1.0), FRAME_SIZES)
    assert dets == []


def test_false_positives_marked_and_bounded():
    gt = [_gt(0, t, 0) for t in range(200)]
    config = _noiseless(false_positive_rate=0.5)
    dets = simulate_detections(gt, config, FRAME_SIZES)
    fps = [d for d in dets if d.true_identity is None]
    # Poisson(0.5) per frame over 200 frames: expect ~100
    assert 60 <= len(fps) <= 140
    for det in fps:
        x0, y0, x1, y1 = det.bbox
        assert 0 <= x0 < x1 <= 64 and 0 <= y0 < y1 <= 64


def test_detection_indices_are_per_frame_positions():
    gt = [_gt(0, 0, i) for i in range(3)]
    dets = simulate_detections(gt, _noiseless(), FRAME_SIZES)
    assert [d.index for d in dets] == [0, 1, 2]


def test_detections_deterministic():
    gt = [_gt(0, t, i) for t in range(5) for i in range(2)]
    config = PerceptConfig(miss_rate=0.3, bbox_jitter_sigma=1.0, seed=4)
    a = simulate_detections(gt, config, FRAME_SIZES)
    b = simulate_detections(gt, config, FRAME_SIZES)
    assert [(d.camera_id, d.t, d.index, d.bbox, d.confidence) for d in a] == [
        (d.camera_id, d.t, d.index, d.bbox, d.confidence) for d in b
    ]


def test_confidence_retention_matches_closed_form():
    config = PerceptConfig(confidence_threshold=0.45, confidence_sigma=0.2)
    expected = confidence_pass_probability(config)
    gt = [_gt(0, t, 0) for t in range(5000)]
    dets = simulate_detections(gt, config, FRAME_SIZES)
    observed = len(dets) / len(gt)
    assert observed == pytest.approx(expected, abs=0.02)


def test_confidence_pass_probability_edges():
    assert confidence_pass_probability(_noiseless()) == 1.0
    strict = PerceptConfig(confidence_threshold=1.0, confidence_sigma=0.2)
    assert confidence_pass_probability(strict) == 0.0


def test_embeddings_unit_norm():
    gt = [_gt(0, t, t % 3) for t in range(10)]
    config = PerceptConfig()
    dets = simulate_detections(gt, config, FRAME_SIZES)
    for emb in embed_all(dets, config):
        assert np.linalg.norm(emb.vector) == pytest.approx(1.0, abs=1e-12)
        assert emb.vector.shape == (512,)


def test_prototypes_nearly_orthogonal_in_512d():
    config = PerceptConfig()
    protos = [identity_prototype(i, config) for i in range(50)]
    worst = max(
        abs(float(protos[i] @ protos[j]))
        for i in range(50)
        for j in range(i + 1, 50)
    )
    assert worst < 0.2


def test_embedding_separation_contract():
    # same identity across cameras must stay well above the spatial
    # threshold; different identities well below it
    config = PerceptConfig(seed=13)
    gt = [_gt(cam, t, i) for cam in (0, 1) for t in range(20) for i in range(4)]
    dets = simulate_detections(gt, config, FRAME_SIZES)
    embs = embed_all(dets, config)
    by_det = {(d.camera_id, d.t, d.index): (d, e) for d, e in zip(dets, embs)}
    intra, inter = [], []
    items = list(by_det.values())
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            di, ei = items[i]
            dj, ej = items[j]
            cos = float(ei.vector @ ej.vector)
            if di.true_identity == dj.true_identity:
                intra.append(cos)
            else:
                inter.append(cos)
    assert min(intra) > 0.7
    assert max(inter) < 0.5


def test_same_camera_similarity_supports_temporal_threshold():
    # 1 - ||e_t - e_{t+1}|| must clear 0.65 at default noise
    config = PerceptConfig(seed=2)
    gt = [_gt(0, t, 0) for t in range(30)]
    dets = simulate_detections(gt, config, FRAME_SIZES)
    embs = embed_all(dets, config)
    sims = [
        1.0 - float(np.linalg.norm(a.vector - b.vector))
        for a, b in zip(embs, embs[1:])
    ]
    assert min(sims) > 0.65


def test_noise_scale_degrades_similarity():
    gt = [_gt(0, t, 0) for t in range(40)]
    means = []
    for sigma in (0.05, 0.15, 0.45, 0.9):
        config = PerceptConfig(embed_noise_sigma=sigma, seed=6)
        dets = simulate_detections(gt, config, FRAME_SIZES)
        embs = embed_all(dets, config)
        cos = [float(a.vector @ b.vector) for a, b in zip(embs, embs[1:])]
        means.append(np.mean(cos))
    assert means == sorted(means, reverse=True)


def test_false_positive_embeddings_are_unrelated():
    config = PerceptConfig(false_positive_rate=3.0, seed=8)
    gt = [_gt(0, t, 0) for t in range(30)]
    dets = simulate_detections(gt, config, FRAME_SIZES)
    embs = embed_all(dets, config)
    proto = identity_prototype(0, config)
    for det, emb in zip(dets, embs):
        if det.true_identity is None:
            assert abs(float(emb.vector @ proto)) < 0.5


def test_records_roundtrip(tmp_path):
    config = PerceptConfig(seed=3)
    gt = [_gt(0, t, t % 2) for t in range(6)]
    dets = simulate_detections(gt, config, FRAME_SIZES)
    embs = embed_all(dets, config)
    path = tmp_path / "records.jsonl"
    write_records(dets, embs, path)
    dets2, embs2 = read_records(path)
    assert [(d.camera_id, d.t, d.index, d.bbox, d.confidence, d.true_identity) for d in dets2] == [
        (d.camera_id, d.t, d.index, d.bbox, d.confidence, d.true_identity) for d in dets
    ]
    for a, b in zip(embs, embs2):
        assert np.array_equal(a.vector, b.vector)
        assert a.detection_ref == b.detection_ref


def test_config_validation():
    with pytest.raises(ConfigError):
        PerceptConfig(miss_rate=1.5).validate()
    with pytest.raises(ConfigError):
        PerceptConfig(embed_dim=1).validate()
    with pytest.raises(ConfigError):
        PerceptConfig(embed_noise_sigma=-0.1).validate()
