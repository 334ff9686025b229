"""Landmark-to-feature normalization and landmark stream ingestion."""

from __future__ import annotations

import json
import math
from typing import IO, Iterator, Union

from .model import FeatureVector, LandmarkFrame, SchemaError


class NormalizationError(ValueError):
    pass


class StreamError(ValueError):
    """A landmark stream line could not be turned into a valid frame."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class StreamOrderError(StreamError):
    """Per-camera timestamps went backwards within one stream."""


def normalize(frame: LandmarkFrame) -> FeatureVector:
    """Map pixel landmarks to face-box-relative coordinates.

    Each point becomes ((x - origin_x) / width, (y - origin_y) / height), so the
    result is invariant to where the face sits in the image and to uniform
    rescaling of the whole frame. Output layout: 68 x-values then 68 y-values.
    """
    ox, oy = frame.face_origin
    w, h = frame.face_size
    if w <= 0 or h <= 0:
        raise NormalizationError(f"face_size must be positive, got ({w}, {h})")
    xs = tuple((x - ox) / w for x, y in frame.points)
    ys = tuple((y - oy) / h for x, y in frame.points)
    values = xs + ys
    if not all(math.isfinite(v) for v in values):
        raise NormalizationError("normalization produced non-finite values")
    return FeatureVector(values=values, source_frame=frame.frame_ref, timestamp=frame.timestamp)


def read_landmark_stream(source: Union[IO[bytes], IO[str]]) -> Iterator[LandmarkFrame]:
    """Yield frames from a newline-delimited JSON stream, in input order.

    Timestamps must be non-decreasing per camera; a violation raises
    StreamOrderError. Malformed lines raise StreamError carrying the 1-based
    line number. Frames before the bad line have already been yielded.
    """
    last_seen: dict[str, int] = {}
    for line_number, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            frame = LandmarkFrame.from_dict(obj)
        except (json.JSONDecodeError, SchemaError) as exc:
            raise StreamError(line_number, str(exc)) from exc
        prev = last_seen.get(frame.camera_id)
        if prev is not None and frame.timestamp < prev:
            raise StreamOrderError(
                line_number,
                f"camera {frame.camera_id} timestamp {frame.timestamp} after {prev}",
            )
        last_seen[frame.camera_id] = frame.timestamp
        yield frame


def translate_frame(frame: LandmarkFrame, dx: float, dy: float) -> LandmarkFrame:
    """Shift all points and the face origin together; features are unchanged."""
    return LandmarkFrame(
        camera_id=frame.camera_id,
        zone_id=frame.zone_id,
        timestamp=frame.timestamp,
        points=tuple((x + dx, y + dy) for x, y in frame.points),
        face_origin=(frame.face_origin[0] + dx, frame.face_origin[1] + dy),
        face_size=frame.face_size,
        frame_ref=frame.frame_ref,
    )


def scale_frame(frame: LandmarkFrame, s: float) -> LandmarkFrame:
    """Rescale the whole frame by s > 0; features are unchanged."""
    if s <= 0:
        raise ValueError(f"scale must be > 0, got {s}")
    return LandmarkFrame(
        camera_id=frame.camera_id,
        zone_id=frame.zone_id,
        timestamp=frame.timestamp,
        points=tuple((x * s, y * s) for x, y in frame.points),
        face_origin=(frame.face_origin[0] * s, frame.face_origin[1] * s),
        face_size=(frame.face_size[0] * s, frame.face_size[1] * s),
        frame_ref=frame.frame_ref,
    )
