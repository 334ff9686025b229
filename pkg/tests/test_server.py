import json
import queue
import threading
import time

import pytest
import requests

from shopwatch.cloud import DecisionService
from shopwatch.inventory import InventoryStore
from shopwatch.model import ProductRecord
from shopwatch.server import CloudServer

T0 = 1_700_000_000_000


@pytest.fixture
def server():
    inv = InventoryStore(staleness_ms=60_000)
    inv.load_catalog([
        ProductRecord("sku-1", "zone-a", "Cola", 10),
        ProductRecord("sku-2", "zone-a", "Chips", 5),
    ])
    service = DecisionService(inv, shared_token="tok")
    srv = CloudServer(service, inv, token="tok").start()
    yield srv
    srv.stop()


def event_payload(event_id="ev-1", ts=T0):
    return {
        "event_id": event_id,
        "camera_id": "cam-1",
        "zone_id": "zone-a",
        "timestamp": ts,
        "anomaly_score": 5.0,
        "pose_label": "FacingDown",
        "frame_ref": "frames/1",
    }


def auth():
    return {"X-Auth-Token": "tok"}


def post_observation(base, product, count, ts=T0):
    resp = requests.post(
        f"{base}/inventory/observations",
        json={"zone_id": "zone-a", "product_id": product, "observed_count": count, "timestamp": ts},
        headers=auth(),
    )
    assert resp.status_code == 200


def test_health(server):
    assert requests.get(f"{server.base_url}/healthz").json() == {"ok": True}


def test_event_intake_requires_token(server):
    resp = requests.post(f"{server.base_url}/events", json=event_payload())
    assert resp.status_code == 401


def test_event_topic_header_must_match(server):
    resp = requests.post(
        f"{server.base_url}/events",
        json=event_payload(),
        headers={**auth(), "X-Topic": "suspicion/cam-9"},
    )
    assert resp.status_code == 400


def test_full_decision_flow_over_http(server):
    base = server.base_url
    # sale: 10 -> 8
    resp = requests.post(
        f"{base}/inventory/sales",
        json={"tx_id": "t1", "product_id": "sku-1", "quantity": 2, "timestamp": T0},
        headers=auth(),
    )
    assert resp.json()["expected_count"] == 8
    # fresh observation shows only 6 on the shelf
    post_observation(base, "sku-1", 6)
    post_observation(base, "sku-2", 5)
    # reconcile endpoint agrees
    rec = requests.get(f"{base}/inventory/products/sku-1/reconcile", params={"now": T0}).json()
    assert rec["mismatch"] is True and rec["deficit"] == 2
    # suspicion event -> alert
    resp = requests.post(
        f"{base}/events",
        json=event_payload(),
        headers={**auth(), "X-Topic": "suspicion/cam-1"},
    )
    body = resp.json()
    assert body["accepted"] and len(body["alerts"]) == 1
    # duplicate replay: accepted, no second alert
    resp = requests.post(f"{base}/events", json=event_payload(), headers=auth())
    assert resp.json()["alerts"] == []

    feed = requests.get(f"{base}/alerts", params={"since": 0}).json()
    assert len(feed["alerts"]) == 1 and feed["cursor"] == 1
    alert = feed["alerts"][0]["alert"]
    assert alert["product_id"] == "sku-1" and alert["deficit"] == 2

    # staff dismisses it
    resp = requests.post(
        f"{base}/feedback",
        json={
            "alert_id": alert["alert_id"],
            "verdict": "Dismissed",
            "note": "regular customer",
            "timestamp": T0 + 1,
            "operator_id": "op-1",
        },
        headers=auth(),
    )
    assert resp.json()["status"] == "Dismissed"
    status = requests.get(f"{base}/zones/zone-a/status", params={"now": T0}).json()
    assert status["false_positives"] == 1 and status["open_alerts"] == []


def test_feedback_conflict_maps_to_409(server):
    base = server.base_url
    post_observation(base, "sku-1", 6)
    requests.post(f"{base}/events", json=event_payload(), headers=auth())
    alert_id = requests.get(f"{base}/alerts").json()["alerts"][0]["alert"]["alert_id"]
    fb = {"alert_id": alert_id, "verdict": "Confirmed", "timestamp": T0, "operator_id": "op"}
    assert requests.post(f"{base}/feedback", json=fb, headers=auth()).status_code == 200
    fb["verdict"] = "Dismissed"
    assert requests.post(f"{base}/feedback", json=fb, headers=auth()).status_code == 409


def test_unknown_routes_and_products(server):
    base = server.base_url
    assert requests.get(f"{base}/nope").status_code == 404
    assert requests.get(f"{base}/inventory/products/sku-404").status_code == 404
    assert requests.get(f"{base}/inventory/products/sku-1/reconcile").status_code == 409


def test_control_flow_over_http(server):
    base = server.base_url
    resp = requests.post(
        f"{base}/control/threshold",
        json={"camera_id": "cam-ghost", "threshold": 2.0},
        headers=auth(),
    )
    assert resp.status_code == 404
    server.service.register_camera("cam-1")
    resp = requests.post(
        f"{base}/control/threshold",
        json={"camera_id": "cam-1", "threshold": 2.0},
        headers=auth(),
    )
    body = resp.json()
    assert body["status"] == "pending" and body["version"] == 1

    polled = requests.get(f"{base}/control/cam-1")
    assert polled.status_code == 200 and polled.json()["threshold"] == 2.0
    ack = requests.post(f"{base}/control/cam-1/ack", json={"version": 1}, headers=auth())
    assert ack.status_code == 200
    assert requests.get(f"{base}/control/cam-1").status_code == 204

    resp = requests.post(
        f"{base}/control/threshold",
        json={"camera_id": "cam-1", "threshold": -3},
        headers=auth(),
    )
    assert resp.status_code == 400


class SseClient:
    """Tiny line-level SSE reader running in a thread."""

    def __init__(self, url, since=None, last_event_id=None):
        params = {"since": since} if since is not None else {}
        headers = {"Last-Event-ID": str(last_event_id)} if last_event_id is not None else {}
        self.resp = requests.get(url, params=params, headers=headers, stream=True, timeout=10)
        self.events: "queue.Queue[tuple[int, dict]]" = queue.Queue()
        self._thread = threading.Thread(target=self._pump, daemon=True)
        self._thread.start()

    def _pump(self):
        current_id = None
        try:
            # chunk_size=1 so frames surface immediately instead of waiting
            # for requests' internal 512-byte buffer to fill
            for raw in self.resp.iter_lines(chunk_size=1):
                line = raw.decode("utf-8")
                if line.startswith("id:"):
                    current_id = int(line[3:].strip())
                elif line.startswith("data:"):
                    self.events.put((current_id, json.loads(line[5:].strip())))
        except Exception:
            pass

    def next_event(self, timeout=5.0):
        return self.events.get(timeout=timeout)

    def close(self):
        self.resp.close()


def test_sse_stream_delivers_and_resumes(server):
    base = server.base_url
    post_observation(base, "sku-1", 9)
    post_observation(base, "sku-2", 4)

    client = SseClient(f"{base}/alerts/stream", since=0)
    time.sleep(0.2)  # let the subscription attach
    requests.post(f"{base}/events", json=event_payload("ev-1"), headers=auth())
    seq, alert = client.next_event()
    seq2, alert2 = client.next_event()
    assert (seq, seq2) == (1, 2)
    assert {alert["product_id"], alert2["product_id"]} == {"sku-1", "sku-2"}
    client.close()

    # resume from the cursor: only later alerts arrive, no duplicates
    post_observation(base, "sku-1", 8, ts=T0 + 130_000)
    requests.post(
        f"{base}/events",
        json=event_payload("ev-2", ts=T0 + 130_000),
        headers=auth(),
    )
    resumed = SseClient(f"{base}/alerts/stream", last_event_id=2)
    seq3, alert3 = resumed.next_event()
    assert seq3 == 3 and alert3["event"]["event_id"] == "ev-2"
    resumed.close()


def test_sse_catch_up_from_zero(server):
    base = server.base_url
    post_observation(base, "sku-1", 9)
    requests.post(f"{base}/events", json=event_payload("ev-1"), headers=auth())
    client = SseClient(f"{base}/alerts/stream", since=0)
    seq, alert = client.next_event()
    assert seq == 1 and alert["event"]["event_id"] == "ev-1"
    client.close()


def test_agent_picks_up_pending_threshold_over_http(server):
    import numpy as np

    from shopwatch.anomaly import LofConfig
    from shopwatch.edge import AgentConfig, EdgeAgent, HttpCloudLink
    from shopwatch.model import LANDMARK_COUNT, LandmarkFrame

    base = server.base_url
    server.service.register_camera("cam-1")
    status = requests.post(
        f"{base}/control/threshold",
        json={"camera_id": "cam-1", "threshold": 4.0},
        headers=auth(),
    ).json()
    assert status["status"] == "pending"  # no agent has polled yet

    config = AgentConfig(
        camera_id="cam-1",
        zone_id="zone-a",
        endpoint=base,
        lof=LofConfig(neighbor_count=5, threshold=1.5, window_capacity=64, warmup_min=16),
        control_token="tok",
        control_poll_frames=5,
        drain_timeout_s=1.0,
    )
    agent = EdgeAgent(config, HttpCloudLink(base, "tok"))
    rng = np.random.default_rng(0)
    frames = []
    for i in range(10):
        pts = tuple(map(tuple, 100.0 + rng.normal(0, 1.0, (LANDMARK_COUNT, 2))))
        frames.append(LandmarkFrame(
            camera_id="cam-1", zone_id="zone-a", timestamp=T0 + i * 100, points=pts,
            face_origin=(50.0, 50.0), face_size=(200.0, 200.0), frame_ref=f"f/{i}",
        ))
    agent.run(frames)
    assert agent.threshold == 4.0  # picked up between frames
    assert requests.get(f"{base}/control/cam-1").status_code == 204  # acked
