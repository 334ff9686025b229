import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shopwatch.model import (
    LANDMARK_COUNT,
    Alert,
    AlertStatus,
    FeatureVector,
    LandmarkFrame,
    PoseLabel,
    ProductRecord,
    ReconciliationResult,
    SaleTransaction,
    SchemaError,
    ShelfObservation,
    StaffFeedback,
    SuspicionEvent,
    deserialize,
    serialize,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def landmark_frames(draw):
    return LandmarkFrame(
        camera_id=draw(st.text(min_size=1, max_size=8)),
        zone_id=draw(st.text(min_size=1, max_size=8)),
        timestamp=draw(st.integers(min_value=0, max_value=2**53)),
        points=tuple(
            (draw(finite), draw(finite)) for _ in range(LANDMARK_COUNT)
        ),
        face_origin=(draw(finite), draw(finite)),
        face_size=(
            draw(st.floats(min_value=1e-3, max_value=1e4)),
            draw(st.floats(min_value=1e-3, max_value=1e4)),
        ),
        frame_ref=draw(st.text(max_size=16)),
    )


def make_event(event_id="ev-1", score=3.5, pose=PoseLabel.FACING_DOWN) -> SuspicionEvent:
    return SuspicionEvent(
        event_id=event_id,
        camera_id="cam-1",
        zone_id="zone-a",
        timestamp=1_700_000_000_000,
        anomaly_score=score,
        pose_label=pose,
        frame_ref="frames/0001",
    )


def make_alert(status=AlertStatus.OPEN) -> Alert:
    return Alert(
        alert_id="alert-000001",
        event=make_event(),
        product_id="sku-1",
        expected_count=8,
        observed_count=6,
        deficit=2,
        created_at=1_700_000_000_000,
        status=status,
    )


@settings(max_examples=30)
@given(landmark_frames())
def test_landmark_frame_round_trip(frame):
    assert deserialize(serialize(frame), LandmarkFrame) == frame


@settings(max_examples=30)
@given(landmark_frames())
def test_landmark_frame_bytes_stable_after_one_cycle(frame):
    encoded = serialize(frame)
    assert serialize(deserialize(encoded, LandmarkFrame)) == encoded


def test_frame_with_67_points_rejected():
    frame = make_frame_dict()
    frame["points"] = frame["points"][:67]
    with pytest.raises(SchemaError) as err:
        deserialize(json.dumps(frame), LandmarkFrame)
    assert str(err.value).startswith("points: expected 68")


def make_frame_dict() -> dict:
    return {
        "camera_id": "cam-1",
        "zone_id": "zone-a",
        "timestamp": 17,
        "points": [[float(i), float(i + 1)] for i in range(68)],
        "face_origin": [10.0, 20.0],
        "face_size": [100.0, 120.0],
        "frame_ref": "frames/0001",
    }


def test_frame_zero_face_size_rejected():
    frame = make_frame_dict()
    frame["face_size"] = [0.0, 100.0]
    with pytest.raises(SchemaError) as err:
        deserialize(json.dumps(frame), LandmarkFrame)
    assert err.value.field == "face_size"


def test_frame_missing_field_named():
    frame = make_frame_dict()
    del frame["zone_id"]
    with pytest.raises(SchemaError) as err:
        deserialize(json.dumps(frame), LandmarkFrame)
    assert err.value.field == "zone_id"


def test_malformed_json_is_decode_error():
    with pytest.raises(SchemaError):
        deserialize(b"{not json", LandmarkFrame)


def test_feature_vector_round_trip():
    fv = FeatureVector(values=tuple(float(i) / 136 for i in range(136)),
                       source_frame="frames/0002", timestamp=5)
    assert deserialize(serialize(fv), FeatureVector) == fv


def test_feature_vector_wrong_length_rejected():
    with pytest.raises(SchemaError) as err:
        FeatureVector(values=(1.0,) * 135, source_frame="x", timestamp=0)
    assert err.value.field == "values"


def test_feature_vector_non_finite_rejected():
    values = [0.0] * 136
    values[7] = float("inf")
    with pytest.raises(SchemaError):
        FeatureVector(values=tuple(values), source_frame="x", timestamp=0)


def test_pose_label_closed_set():
    assert {l.value for l in PoseLabel} == {
        "FacingForward", "EyesClosed", "FacingDown", "FacingSideways"
    }
    with pytest.raises(SchemaError):
        PoseLabel.parse("Grimacing")


def test_event_round_trip_and_null_pose():
    event = make_event(pose=None)
    again = deserialize(serialize(event), SuspicionEvent)
    assert again == event and again.pose_label is None


def test_event_negative_score_rejected():
    with pytest.raises(SchemaError):
        make_event(score=-0.1)


def test_alert_round_trip():
    alert = make_alert()
    assert deserialize(serialize(alert), Alert) == alert


def test_alert_zero_deficit_rejected():
    payload = make_alert().to_dict()
    payload["deficit"] = 0
    payload["observed_count"] = payload["expected_count"]
    with pytest.raises(SchemaError):
        deserialize(json.dumps(payload), Alert)


def test_alert_inconsistent_deficit_rejected():
    payload = make_alert().to_dict()
    payload["deficit"] = 5  # expected 8 - observed 6 = 2
    with pytest.raises(SchemaError):
        deserialize(json.dumps(payload), Alert)


def test_alert_status_transitions():
    alert = make_alert()
    assert alert.with_status(AlertStatus.CONFIRMED).status is AlertStatus.CONFIRMED
    assert alert.with_status(AlertStatus.DISMISSED).status is AlertStatus.DISMISSED
    terminal = alert.with_status(AlertStatus.CONFIRMED)
    with pytest.raises(ValueError):
        terminal.with_status(AlertStatus.DISMISSED)
    with pytest.raises(ValueError):
        alert.with_status(AlertStatus.OPEN)


@pytest.mark.parametrize(
    "cls,payload",
    [
        (ProductRecord, {"product_id": "p", "zone_id": "z", "display_name": "P", "expected_count": 3}),
        (SaleTransaction, {"tx_id": "t", "product_id": "p", "quantity": 2, "timestamp": 9}),
        (ShelfObservation, {"zone_id": "z", "product_id": "p", "observed_count": 4, "timestamp": 9}),
        (
            ReconciliationResult,
            {"product_id": "p", "expected_count": 8, "observed_count": 7, "mismatch": True, "deficit": 1},
        ),
        (
            StaffFeedback,
            {"alert_id": "a", "verdict": "Dismissed", "note": None, "timestamp": 4, "operator_id": "op"},
        ),
    ],
)
def test_inventory_types_round_trip(cls, payload):
    entity = cls.from_dict(payload)
    assert deserialize(serialize(entity), cls) == entity


def test_sale_quantity_floor():
    with pytest.raises(SchemaError):
        SaleTransaction(tx_id="t", product_id="p", quantity=0, timestamp=0)


def test_reconciliation_consistency_enforced():
    with pytest.raises(SchemaError):
        ReconciliationResult(
            product_id="p", expected_count=5, observed_count=9, mismatch=True, deficit=0
        )


def test_feedback_open_verdict_rejected():
    with pytest.raises(SchemaError):
        StaffFeedback(alert_id="a", verdict=AlertStatus.OPEN, timestamp=0, operator_id="op")
