import itertools
import math

import numpy as np
import pytest

from reference import lof_score_reference
from shopwatch.anomaly import (
    InsufficientDataError,
    LofConfig,
    ReferenceWindow,
    StreamingDetector,
    lof_score,
)
from shopwatch.model import FEATURE_DIM, FeatureVector


def embed(points_2d) -> np.ndarray:
    pts = np.zeros((len(points_2d), FEATURE_DIM))
    pts[:, :2] = points_2d
    return pts


def fv(values, ts=0, ref="f") -> FeatureVector:
    return FeatureVector(values=tuple(values), source_frame=ref, timestamp=ts)


def regular_polygon(sides: int) -> np.ndarray:
    return np.array(
        [[math.cos(2 * math.pi * i / sides), math.sin(2 * math.pi * i / sides)] for i in range(sides)]
    )


def hypercube_vertices(dim: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=dim)))


def test_octagon_every_vertex_scores_one():
    pts = embed(regular_polygon(8))
    for vertex in pts:
        assert abs(lof_score(pts, 3, vertex) - 1.0) < 1e-9


@pytest.mark.parametrize("sides,k", [(4, 2), (6, 3), (12, 5)])
def test_regular_polygons_score_one(sides, k):
    pts = embed(regular_polygon(sides))
    for vertex in pts:
        assert abs(lof_score(pts, k, vertex) - 1.0) < 1e-9


@pytest.mark.parametrize("dim,k", [(3, 3), (4, 5)])
def test_hypercube_vertices_score_one(dim, k):
    pts = hypercube_vertices(dim)
    for vertex in pts:
        assert abs(lof_score(pts, k, vertex) - 1.0) < 1e-9


def test_tight_cluster_far_query_matches_reference_and_is_large():
    rng = np.random.default_rng(2024)
    cluster = rng.uniform(-0.5, 0.5, size=(20, 2))
    cluster /= np.maximum(1.0, np.linalg.norm(cluster, axis=1, keepdims=True))
    query = np.array([100.0, 0.0])
    mine = lof_score(cluster, 5, query)
    ref = lof_score_reference(cluster.tolist(), 5, query.tolist())
    assert abs(mine - ref) < 1e-9
    assert mine > 10


def test_random_sets_match_brute_force_reference():
    rng = np.random.default_rng(99)
    for n, k in [(20, 2), (50, 5), (120, 10), (200, 5)]:
        pts = rng.normal(0, 1, size=(n, 6))
        for _ in range(4):
            q = rng.normal(0, 1.5, size=6)
            mine = lof_score(pts, k, q)
            ref = lof_score_reference(pts.tolist(), k, q.tolist())
            assert abs(mine - ref) < 1e-9


def test_monotone_evidence_along_ray():
    rng = np.random.default_rng(5)
    cluster = rng.normal(0, 0.4, size=(40, 3))
    ray = np.array([1.0, 0.4, -0.2])
    ray /= np.linalg.norm(ray)
    scores = [lof_score(cluster, 5, (2.0 + t) * ray) for t in np.linspace(0, 60, 25)]
    assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))
    assert scores[-1] > scores[0]


def test_reference_too_small():
    pts = np.zeros((5, 2))
    with pytest.raises(InsufficientDataError):
        lof_score(pts, 5, np.zeros(2))


def test_all_duplicates_score_one():
    pts = np.ones((10, 2))
    assert lof_score(pts, 3, np.ones(2)) == 1.0


def test_duplicate_mass_far_query_is_infinite_outlier():
    pts = np.ones((10, 2))
    assert math.isinf(lof_score(pts, 3, np.array([9.0, 9.0])))


def test_config_validation():
    with pytest.raises(ValueError):
        LofConfig(neighbor_count=0)
    with pytest.raises(ValueError):
        LofConfig(threshold=0.0)
    with pytest.raises(ValueError):
        LofConfig(neighbor_count=10, window_capacity=10)
    with pytest.raises(ValueError):
        LofConfig(neighbor_count=10, warmup_min=10)
    cfg = LofConfig()
    assert cfg.threshold == 1.5 and cfg.neighbor_count == 10 and cfg.window_capacity == 512


def cluster_feature(rng, ts, center=0.0, spread=0.01):
    return fv(center + rng.normal(0, spread, FEATURE_DIM), ts=ts, ref=f"f/{ts}")


def make_detector(k=5, threshold=1.5, capacity=64, warmup=16):
    cfg = LofConfig(neighbor_count=k, threshold=threshold, window_capacity=capacity, warmup_min=warmup)
    return StreamingDetector(cfg, camera_id="cam-1", zone_id="zone-a")


def test_warmup_absorbs_everything():
    det = make_detector(warmup=16)
    rng = np.random.default_rng(1)
    for ts in range(15):
        wild = fv(rng.normal(0, 100, FEATURE_DIM), ts=ts)  # extreme values, still absorbed
        assert det.observe(wild) is None
    assert len(det.window) == 15


def test_single_outlier_emits_once_and_stays_out():
    det = make_detector()
    rng = np.random.default_rng(2)
    for ts in range(40):
        assert det.observe(cluster_feature(rng, ts)) is None
    window_before = det.window.contents()
    outlier = fv(np.full(FEATURE_DIM, 8.0), ts=100, ref="f/outlier")
    event = det.observe(outlier)
    assert event is not None
    assert event.camera_id == "cam-1" and event.zone_id == "zone-a"
    assert event.frame_ref == "f/outlier"
    assert det.window.contents() == window_before  # outlier not absorbed

    # the emitted score is exactly what the brute-force oracle says it should be
    ref = lof_score_reference([list(f.values) for f in window_before], 5, list(outlier.values))
    assert abs(event.anomaly_score - ref) < 1e-9

    assert det.observe(cluster_feature(rng, 101)) is None  # back to normal


def test_streaming_false_positive_rate_under_5pct():
    det = make_detector(k=10, threshold=1.5, capacity=128, warmup=32)
    rng = np.random.default_rng(31337)
    events = 0
    scored = 0
    for ts in range(400):
        feature = cluster_feature(rng, ts, spread=0.02)
        if det.frames_seen >= det.config.warmup_min:
            scored += 1
        if det.observe(feature) is not None:
            events += 1
    assert scored > 300
    assert events / scored < 0.05


def test_window_capacity_and_eviction():
    window = ReferenceWindow(4)
    feats = [fv(np.full(FEATURE_DIM, float(i)), ts=i) for i in range(6)]
    for f in feats:
        window.append(f)
    assert len(window) == 4
    assert window.contents() == tuple(feats[2:])  # strictly oldest-first eviction


def test_window_never_exceeds_capacity_under_stream():
    det = make_detector(capacity=32, warmup=16)
    rng = np.random.default_rng(3)
    for ts in range(200):
        det.observe(cluster_feature(rng, ts, spread=0.05))
        assert len(det.window) <= 32


def test_threshold_update_changes_behavior():
    det = make_detector(threshold=1.5)
    rng = np.random.default_rng(4)
    for ts in range(40):
        det.observe(cluster_feature(rng, ts))
    mild = fv(0.12 + rng.normal(0, 0.01, FEATURE_DIM), ts=50)
    score = lof_score(det.window.matrix(), det.config.neighbor_count, mild)
    assert score > 1.5  # mild drift: outlier at the default threshold
    det.set_threshold(score + 5.0)
    assert det.observe(mild) is None  # raised threshold lets it through
    with pytest.raises(ValueError):
        det.set_threshold(0.0)
