"""Synthetic 68-point landmark geometry for the four head poses.

Templates live in face-box coordinates (a 200 x 200 box). Point groups follow
the usual landmark order: jaw 0-16, right brow 17-21, left brow 22-26, nose
bridge 27-30, nose base 31-35, right eye 36-41, left eye 42-47, outer lips
48-59, inner lips 60-67. Samples are a pose template plus per-point Gaussian
jitter; anomalous behavior frames are a template warped far outside every
pose cluster (large scale plus shear), which is what "statistically unlike
normal browsing" looks like in landmark space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .classify import LabeledSample
from .features import normalize
from .model import LANDMARK_COUNT, LandmarkFrame, PoseLabel

FACE_BOX = 200.0
DEFAULT_JITTER_SIGMA = 2.0  # pixels, against a 200 px face box


def _ellipse(cx: float, cy: float, rx: float, ry: float, count: int, start: float = 0.0):
    return [
        (cx + rx * math.cos(start + 2 * math.pi * i / count),
         cy + ry * math.sin(start + 2 * math.pi * i / count))
        for i in range(count)
    ]


def _base_landmarks() -> np.ndarray:
    pts: list[tuple[float, float]] = []
    # jaw: arc from left temple through the chin to the right temple
    for i in range(17):
        angle = math.pi * i / 16
        pts.append((100 - 90 * math.cos(angle), 70 + 115 * math.sin(angle)))
    # brows
    for i in range(5):
        t = i / 4
        pts.append((30 + 55 * t, 55 - 6 * math.sin(math.pi * t)))
    for i in range(5):
        t = i / 4
        pts.append((115 + 55 * t, 55 - 6 * math.sin(math.pi * t)))
    # nose bridge and base
    for i in range(4):
        pts.append((100.0, 70 + 15 * i))
    for i in range(5):
        t = i / 4
        pts.append((80 + 40 * t, 122 + 8 * math.sin(math.pi * t)))
    # eyes
    pts.extend(_ellipse(57, 80, 18, 7, 6))
    pts.extend(_ellipse(143, 80, 18, 7, 6))
    # lips
    pts.extend(_ellipse(100, 155, 30, 12, 12))
    pts.extend(_ellipse(100, 155, 18, 5, 8))
    assert len(pts) == LANDMARK_COUNT
    return np.array(pts, dtype=float)


_BASE = _base_landmarks()
_EYE_IDX = list(range(36, 48))
_BROW_IDX = list(range(17, 27))
_NON_JAW_IDX = list(range(17, 68))


def pose_template(label: PoseLabel) -> np.ndarray:
    """Mean landmark layout for one pose class, in face-box pixels."""
    pts = _BASE.copy()
    if label is PoseLabel.FACING_FORWARD:
        return pts
    if label is PoseLabel.EYES_CLOSED:
        for side in (range(36, 42), range(42, 48)):
            cy = pts[list(side), 1].mean()
            for i in side:
                pts[i, 1] = cy + (pts[i, 1] - cy) * 0.05
        pts[_BROW_IDX, 1] += 10
        pts[_NON_JAW_IDX, 1] += 6
        return pts
    if label is PoseLabel.FACING_DOWN:
        pts[:, 1] = 40 + pts[:, 1] * 0.85
        pts[:, 0] = 100 + (pts[:, 0] - 100) * 0.95
        return pts
    # FACING_SIDEWAYS: yaw squashes x and pushes the midline over
    pts[:, 0] = 100 + (pts[:, 0] - 100) * 0.55 + 25
    return pts


def anomalous_landmarks(rng: np.random.Generator) -> np.ndarray:
    """A landmark layout far outside every pose cluster."""
    pts = _BASE.copy()
    scale = 1.5 + rng.uniform(0.0, 0.6)
    shear = rng.uniform(0.25, 0.45) * (1 if rng.uniform() < 0.5 else -1)
    centered = pts - 100.0
    centered[:, 0] = centered[:, 0] * scale + shear * centered[:, 1] * scale
    centered[:, 1] = centered[:, 1] * scale
    return centered + 100.0 + rng.normal(0.0, 6.0, size=pts.shape)


@dataclass(frozen=True)
class PoseGeneratorParams:
    jitter_sigma: float = DEFAULT_JITTER_SIGMA
    face_origin: tuple[float, float] = (220.0, 140.0)
    face_size: tuple[float, float] = (FACE_BOX, FACE_BOX)

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ValueError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")


def landmarks_to_frame(
    points: np.ndarray,
    params: PoseGeneratorParams,
    camera_id: str = "cam-synthetic",
    zone_id: str = "zone-synthetic",
    timestamp: int = 0,
    frame_ref: str = "synthetic",
) -> LandmarkFrame:
    """Place face-box landmarks into image coordinates and wrap them as a frame."""
    ox, oy = params.face_origin
    w, h = params.face_size
    placed = [
        (ox + x * w / FACE_BOX, oy + y * h / FACE_BOX) for x, y in points.tolist()
    ]
    return LandmarkFrame(
        camera_id=camera_id,
        zone_id=zone_id,
        timestamp=timestamp,
        points=tuple(placed),
        face_origin=(ox, oy),
        face_size=(w, h),
        frame_ref=frame_ref,
    )


def sample_pose_points(
    label: PoseLabel, params: PoseGeneratorParams, rng: np.random.Generator
) -> np.ndarray:
    pts = pose_template(label)
    if params.jitter_sigma > 0:
        pts = pts + rng.normal(0.0, params.jitter_sigma, size=pts.shape)
    return pts


def generate_pose_dataset(
    params: PoseGeneratorParams, n: int, seed: int
) -> list[LabeledSample]:
    """n labeled samples, class-balanced within 1, deterministic per seed."""
    rng = np.random.default_rng(seed)
    labels: list[PoseLabel] = []
    base, extra = divmod(n, len(PoseLabel))
    lucky = list(PoseLabel)
    rng.shuffle(lucky)  # which classes get the remainder is part of the seed's draw
    for i, label in enumerate(lucky):
        labels.extend([label] * (base + (1 if i < extra else 0)))
    order = rng.permutation(n)
    samples = []
    for rank, idx in enumerate(order):
        label = labels[int(idx)]
        points = sample_pose_points(label, params, rng)
        frame = landmarks_to_frame(
            points, params, timestamp=rank, frame_ref=f"synthetic/{rank:05d}"
        )
        samples.append(LabeledSample(features=normalize(frame), label=label))
    return samples
