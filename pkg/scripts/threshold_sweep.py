#!/usr/bin/env python3
"""Sweep the anomaly threshold on a synthetic browsing stream and report the
false-event rate plus detection of a planted burst. Useful when tuning a
store's threshold from the console.

Usage: python scripts/threshold_sweep.py [--frames 600] [--seed 11]
"""

import argparse

import numpy as np

from shopwatch.anomaly import LofConfig, StreamingDetector
from shopwatch.model import POSE_LABELS
from shopwatch.posegen import (
    PoseGeneratorParams,
    anomalous_landmarks,
    landmarks_to_frame,
    sample_pose_points,
)
from shopwatch.features import normalize


def run_stream(threshold: float, frames: int, seed: int) -> tuple[float, int]:
    params = PoseGeneratorParams()
    config = LofConfig(neighbor_count=8, threshold=threshold, window_capacity=160, warmup_min=48)
    detector = StreamingDetector(config, "cam-sweep", "zone-sweep")
    rng = np.random.default_rng(seed)
    burst_at = frames - 20

    normal_events = 0
    burst_events = 0
    scored = 0
    for tick in range(frames):
        if tick >= burst_at:
            points = anomalous_landmarks(rng)
        else:
            label = POSE_LABELS[int(rng.integers(len(POSE_LABELS)))]
            points = sample_pose_points(label, params, rng)
        frame = landmarks_to_frame(points, params, timestamp=tick, frame_ref=f"sweep/{tick}")
        if detector.frames_seen >= config.warmup_min and tick < burst_at:
            scored += 1
        event = detector.observe(normalize(frame))
        if event is not None:
            if tick >= burst_at:
                burst_events += 1
            else:
                normal_events += 1
    return (normal_events / scored if scored else 0.0), burst_events


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--frames", type=int, default=600)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()

    print(f"{'threshold':>10} {'false event rate':>17} {'burst events (of 20)':>21}")
    for threshold in (1.1, 1.3, 1.5, 1.8, 2.2, 3.0, 5.0):
        rate, burst = run_stream(threshold, args.frames, args.seed)
        print(f"{threshold:>10.1f} {rate:>17.3%} {burst:>21}")


if __name__ == "__main__":
    main()
