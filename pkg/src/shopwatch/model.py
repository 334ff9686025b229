"""Shared domain types and JSON codecs for the loss-prevention pipeline.

Every type here is an immutable value object with validation on construction,
a ``to_dict`` mirror of its JSON schema, and a ``from_dict`` that rejects
malformed payloads with an error naming the offending field. Landmark streams
are newline-delimited JSON, one frame per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Type, TypeVar

LANDMARK_COUNT = 68
FEATURE_DIM = 2 * LANDMARK_COUNT

T = TypeVar("T")


class SchemaError(ValueError):
    """A payload violated a type invariant. The message starts with the field name."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _req(obj: dict, field_name: str) -> Any:
    if field_name not in obj:
        raise SchemaError(field_name, "missing field")
    return obj[field_name]


def _as_int(value: Any, field_name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(field_name, f"expected integer, got {type(value).__name__}")
    return value


def _as_finite(value: Any, field_name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(field_name, f"expected number, got {type(value).__name__}")
    out = float(value)
    if not math.isfinite(out):
        raise SchemaError(field_name, "must be finite")
    return out


def _as_str(value: Any, field_name: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(field_name, f"expected string, got {type(value).__name__}")
    return value


def _as_pair(value: Any, field_name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SchemaError(field_name, "expected an [x, y] pair")
    return (_as_finite(value[0], field_name), _as_finite(value[1], field_name))


class PoseLabel(Enum):
    """The four head poses the classifier distinguishes; order fixes class indices."""

    FACING_FORWARD = "FacingForward"
    EYES_CLOSED = "EyesClosed"
    FACING_DOWN = "FacingDown"
    FACING_SIDEWAYS = "FacingSideways"

    @property
    def index(self) -> int:
        return POSE_LABELS.index(self)

    @classmethod
    def parse(cls, value: Any, field_name: str = "pose_label") -> "PoseLabel":
        for label in cls:
            if label.value == value:
                return label
        raise SchemaError(field_name, f"unknown pose label {value!r}")


POSE_LABELS: tuple[PoseLabel, ...] = tuple(PoseLabel)


class AlertStatus(Enum):
    OPEN = "Open"
    CONFIRMED = "Confirmed"
    DISMISSED = "Dismissed"

    @classmethod
    def parse(cls, value: Any, field_name: str = "status") -> "AlertStatus":
        for status in cls:
            if status.value == value:
                return status
        raise SchemaError(field_name, f"unknown status {value!r}")


@dataclass(frozen=True)
class LandmarkFrame:
    """One camera frame reduced to 68 facial keypoints plus face-box geometry.

    ``points`` are pixel coordinates, ``face_origin`` the box top-left corner and
    ``face_size`` its (width, height); both sides must be strictly positive.
    ``frame_ref`` is an opaque locator for the evidence image, never pixels.
    """

    camera_id: str
    zone_id: str
    timestamp: int
    points: tuple[tuple[float, float], ...]
    face_origin: tuple[float, float]
    face_size: tuple[float, float]
    frame_ref: str

    def __post_init__(self):
        if len(self.points) != LANDMARK_COUNT:
            raise SchemaError("points", f"expected {LANDMARK_COUNT} points, got {len(self.points)}")
        for x, y in self.points:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise SchemaError("points", "coordinates must be finite")
        if self.face_size[0] <= 0 or self.face_size[1] <= 0:
            raise SchemaError("face_size", f"must be strictly positive, got {self.face_size}")
        _as_int(self.timestamp, "timestamp")

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "zone_id": self.zone_id,
            "timestamp": self.timestamp,
            "points": [[x, y] for x, y in self.points],
            "face_origin": list(self.face_origin),
            "face_size": list(self.face_size),
            "frame_ref": self.frame_ref,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LandmarkFrame":
        raw_points = _req(obj, "points")
        if not isinstance(raw_points, list):
            raise SchemaError("points", "expected a list of [x, y] pairs")
        if len(raw_points) != LANDMARK_COUNT:
            raise SchemaError("points", f"expected {LANDMARK_COUNT} points, got {len(raw_points)}")
        return cls(
            camera_id=_as_str(_req(obj, "camera_id"), "camera_id"),
            zone_id=_as_str(_req(obj, "zone_id"), "zone_id"),
            timestamp=_as_int(_req(obj, "timestamp"), "timestamp"),
            points=tuple(_as_pair(p, "points") for p in raw_points),
            face_origin=_as_pair(_req(obj, "face_origin"), "face_origin"),
            face_size=_as_pair(_req(obj, "face_size"), "face_size"),
            frame_ref=_as_str(_req(obj, "frame_ref"), "frame_ref"),
        )


@dataclass(frozen=True)
class FeatureVector:
    """136 normalized coordinates: all 68 x-values first, then all 68 y-values."""

    values: tuple[float, ...]
    source_frame: str
    timestamp: int

    def __post_init__(self):
        if len(self.values) != FEATURE_DIM:
            raise SchemaError("values", f"expected {FEATURE_DIM} values, got {len(self.values)}")
        for v in self.values:
            if not math.isfinite(v):
                raise SchemaError("values", "all values must be finite")

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "source_frame": self.source_frame,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureVector":
        raw = _req(obj, "values")
        if not isinstance(raw, list):
            raise SchemaError("values", "expected a list of numbers")
        return cls(
            values=tuple(_as_finite(v, "values") for v in raw),
            source_frame=_as_str(_req(obj, "source_frame"), "source_frame"),
            timestamp=_as_int(_req(obj, "timestamp"), "timestamp"),
        )


@dataclass(frozen=True)
class SuspicionEvent:
    """Edge-side anomaly finding, shipped to the cloud for corroboration."""

    event_id: str
    camera_id: str
    zone_id: str
    timestamp: int
    anomaly_score: float
    pose_label: Optional[PoseLabel]
    frame_ref: str

    def __post_init__(self):
        if not self.anomaly_score >= 0:
            raise SchemaError("anomaly_score", f"must be >= 0, got {self.anomaly_score}")
        _as_int(self.timestamp, "timestamp")

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "camera_id": self.camera_id,
            "zone_id": self.zone_id,
            "timestamp": self.timestamp,
            "anomaly_score": self.anomaly_score,
            "pose_label": self.pose_label.value if self.pose_label else None,
            "frame_ref": self.frame_ref,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SuspicionEvent":
        raw_score = _req(obj, "anomaly_score")
        if isinstance(raw_score, bool) or not isinstance(raw_score, (int, float)):
            raise SchemaError("anomaly_score", f"expected number, got {type(raw_score).__name__}")
        raw_pose = obj.get("pose_label")
        return cls(
            event_id=_as_str(_req(obj, "event_id"), "event_id"),
            camera_id=_as_str(_req(obj, "camera_id"), "camera_id"),
            zone_id=_as_str(_req(obj, "zone_id"), "zone_id"),
            timestamp=_as_int(_req(obj, "timestamp"), "timestamp"),
            anomaly_score=float(raw_score),
            pose_label=None if raw_pose is None else PoseLabel.parse(raw_pose),
            frame_ref=_as_str(_req(obj, "frame_ref"), "frame_ref"),
        )


@dataclass(frozen=True)
class Alert:
    """Dual-confirmed theft suspicion: an edge event plus an inventory deficit."""

    alert_id: str
    event: SuspicionEvent
    product_id: str
    expected_count: int
    observed_count: int
    deficit: int
    created_at: int
    status: AlertStatus = AlertStatus.OPEN

    def __post_init__(self):
        if self.expected_count < 0:
            raise SchemaError("expected_count", "must be >= 0")
        if self.observed_count < 0:
            raise SchemaError("observed_count", "must be >= 0")
        if self.deficit <= 0:
            raise SchemaError("deficit", f"must be > 0, got {self.deficit}")
        if self.deficit != self.expected_count - self.observed_count:
            raise SchemaError(
                "deficit",
                f"must equal expected_count - observed_count "
                f"({self.expected_count} - {self.observed_count})",
            )

    def with_status(self, status: AlertStatus) -> "Alert":
        """Return a copy in the new status; only Open alerts may transition."""
        if self.status is not AlertStatus.OPEN:
            raise ValueError(f"alert {self.alert_id} is terminal ({self.status.value})")
        if status is AlertStatus.OPEN:
            raise ValueError("cannot transition back to Open")
        return Alert(
            alert_id=self.alert_id,
            event=self.event,
            product_id=self.product_id,
            expected_count=self.expected_count,
            observed_count=self.observed_count,
            deficit=self.deficit,
            created_at=self.created_at,
            status=status,
        )

    def to_dict(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "event": self.event.to_dict(),
            "product_id": self.product_id,
            "expected_count": self.expected_count,
            "observed_count": self.observed_count,
            "deficit": self.deficit,
            "created_at": self.created_at,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Alert":
        raw_event = _req(obj, "event")
        if not isinstance(raw_event, dict):
            raise SchemaError("event", "expected an object")
        return cls(
            alert_id=_as_str(_req(obj, "alert_id"), "alert_id"),
            event=SuspicionEvent.from_dict(raw_event),
            product_id=_as_str(_req(obj, "product_id"), "product_id"),
            expected_count=_as_int(_req(obj, "expected_count"), "expected_count"),
            observed_count=_as_int(_req(obj, "observed_count"), "observed_count"),
            deficit=_as_int(_req(obj, "deficit"), "deficit"),
            created_at=_as_int(_req(obj, "created_at"), "created_at"),
            status=AlertStatus.parse(_req(obj, "status")),
        )


@dataclass(frozen=True)
class ProductRecord:
    """Catalog entry: how many units the product database says should be on the shelf."""

    product_id: str
    zone_id: str
    display_name: str
    expected_count: int

    def __post_init__(self):
        if self.expected_count < 0:
            raise SchemaError("expected_count", "must be >= 0")

    def to_dict(self) -> dict:
        return {
            "product_id": self.product_id,
            "zone_id": self.zone_id,
            "display_name": self.display_name,
            "expected_count": self.expected_count,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ProductRecord":
        return cls(
            product_id=_as_str(_req(obj, "product_id"), "product_id"),
            zone_id=_as_str(_req(obj, "zone_id"), "zone_id"),
            display_name=_as_str(_req(obj, "display_name"), "display_name"),
            expected_count=_as_int(_req(obj, "expected_count"), "expected_count"),
        )


@dataclass(frozen=True)
class SaleTransaction:
    """One point-of-sale line; tx_id doubles as the idempotency key."""

    tx_id: str
    product_id: str
    quantity: int
    timestamp: int

    def __post_init__(self):
        if self.quantity < 1:
            raise SchemaError("quantity", f"must be >= 1, got {self.quantity}")
        _as_int(self.timestamp, "timestamp")

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "product_id": self.product_id,
            "quantity": self.quantity,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SaleTransaction":
        return cls(
            tx_id=_as_str(_req(obj, "tx_id"), "tx_id"),
            product_id=_as_str(_req(obj, "product_id"), "product_id"),
            quantity=_as_int(_req(obj, "quantity"), "quantity"),
            timestamp=_as_int(_req(obj, "timestamp"), "timestamp"),
        )


@dataclass(frozen=True)
class ShelfObservation:
    """A counted (or sensed) number of units physically present on a shelf."""

    zone_id: str
    product_id: str
    observed_count: int
    timestamp: int

    def __post_init__(self):
        if self.observed_count < 0:
            raise SchemaError("observed_count", "must be >= 0")
        _as_int(self.timestamp, "timestamp")

    def to_dict(self) -> dict:
        return {
            "zone_id": self.zone_id,
            "product_id": self.product_id,
            "observed_count": self.observed_count,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ShelfObservation":
        return cls(
            zone_id=_as_str(_req(obj, "zone_id"), "zone_id"),
            product_id=_as_str(_req(obj, "product_id"), "product_id"),
            observed_count=_as_int(_req(obj, "observed_count"), "observed_count"),
            timestamp=_as_int(_req(obj, "timestamp"), "timestamp"),
        )


@dataclass(frozen=True)
class ReconciliationResult:
    """Expected-vs-observed comparison; only a positive shortfall is a mismatch."""

    product_id: str
    expected_count: int
    observed_count: int
    mismatch: bool
    deficit: int

    def __post_init__(self):
        shortfall = self.expected_count - self.observed_count
        if self.mismatch != (shortfall > 0):
            raise SchemaError("mismatch", "inconsistent with counts")
        if self.deficit != max(0, shortfall):
            raise SchemaError("deficit", "must be max(0, expected - observed)")

    def to_dict(self) -> dict:
        return {
            "product_id": self.product_id,
            "expected_count": self.expected_count,
            "observed_count": self.observed_count,
            "mismatch": self.mismatch,
            "deficit": self.deficit,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ReconciliationResult":
        raw_mismatch = _req(obj, "mismatch")
        if not isinstance(raw_mismatch, bool):
            raise SchemaError("mismatch", "expected boolean")
        return cls(
            product_id=_as_str(_req(obj, "product_id"), "product_id"),
            expected_count=_as_int(_req(obj, "expected_count"), "expected_count"),
            observed_count=_as_int(_req(obj, "observed_count"), "observed_count"),
            mismatch=raw_mismatch,
            deficit=_as_int(_req(obj, "deficit"), "deficit"),
        )


@dataclass(frozen=True)
class StaffFeedback:
    """A staff member's terminal verdict on an alert."""

    alert_id: str
    verdict: AlertStatus
    timestamp: int
    operator_id: str
    note: Optional[str] = None

    def __post_init__(self):
        if self.verdict is AlertStatus.OPEN:
            raise SchemaError("verdict", "must be Confirmed or Dismissed")

    def to_dict(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "verdict": self.verdict.value,
            "note": self.note,
            "timestamp": self.timestamp,
            "operator_id": self.operator_id,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "StaffFeedback":
        note = obj.get("note")
        if note is not None and not isinstance(note, str):
            raise SchemaError("note", "expected string or null")
        return cls(
            alert_id=_as_str(_req(obj, "alert_id"), "alert_id"),
            verdict=AlertStatus.parse(_req(obj, "verdict"), "verdict"),
            note=note,
            timestamp=_as_int(_req(obj, "timestamp"), "timestamp"),
            operator_id=_as_str(_req(obj, "operator_id"), "operator_id"),
        )


def serialize(entity: Any) -> bytes:
    """Encode any domain value to its canonical JSON byte form."""
    return json.dumps(entity.to_dict(), separators=(",", ":")).encode("utf-8")


def deserialize(raw: bytes | str, cls: Type[T]) -> T:
    """Decode JSON bytes into ``cls``, validating every invariant on the way in."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError("<body>", f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("<body>", "expected a JSON object")
    return cls.from_dict(obj)
