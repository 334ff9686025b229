"""Cloud decision service: corroborate edge suspicion events against live
inventory and page staff only when both signals agree.

The conjunction rule is the whole point: a suspicion event alone never
alerts, and a stock deficit alone never alerts. An alert is born only when a
suspicion event arrives for a zone AND a fresh reconciliation shows a deficit
for some product in that zone.

Every state change appends to a JSONL log before taking effect, so a restarted
service rebuilds itself by replay: processed event ids (idempotency), alerts,
feedback verdicts, pending control messages. Events that were accepted but not
yet decided when the process died are re-parked and retried.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .inventory import InventoryStore, InventoryUnavailable, StaleObservationError
from .model import Alert, AlertStatus, StaffFeedback, SuspicionEvent

log = logging.getLogger(__name__)

DEFAULT_DEDUP_WINDOW_MS = 120_000


@dataclass(frozen=True)
class DecisionPolicy:
    """Alerting policy. ``require_both`` is structural and cannot be disabled."""

    require_both: bool = True
    reconcile_scope: Optional[dict] = None  # zone_id -> [product_id]; None = whole zone
    alert_dedup_window_ms: int = DEFAULT_DEDUP_WINDOW_MS

    def __post_init__(self):
        if not self.require_both:
            raise ValueError("require_both cannot be disabled")


@dataclass
class ControlStatus:
    camera_id: str
    version: int
    status: str  # "applied" | "pending"
    message: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "version": self.version,
            "status": self.status,
            "message": self.message,
        }


class UnknownAlertError(KeyError):
    pass


class FeedbackConflictError(ValueError):
    pass


class UnknownCameraError(KeyError):
    pass


class DecisionService:
    """Receives suspicion events, reconciles, raises alerts, records verdicts."""

    def __init__(
        self,
        inventory: InventoryStore,
        policy: DecisionPolicy | None = None,
        log_path: str | Path | None = None,
        shared_token: str = "",
    ):
        self.inventory = inventory
        self.policy = policy or DecisionPolicy()
        self.shared_token = shared_token
        self._lock = threading.RLock()
        self._seen_events: set[str] = set()
        self._decided_events: set[str] = set()
        self._events: dict[str, SuspicionEvent] = {}
        self._alerts: dict[str, Alert] = {}
        self._alert_order: list[str] = []  # creation order; index+1 is the feed seq
        self._last_alert_ms: dict[tuple[str, str], int] = {}  # (zone, product) -> created_at
        self._fp_by_zone: dict[str, int] = {}
        self._uncorroborated: list[str] = []
        self._parked: list[SuspicionEvent] = []
        self._subscribers: list[Callable[[int, Alert], None]] = []
        self._known_cameras: set[str] = set()
        self._control_handlers: dict[str, Callable[[dict], dict]] = {}
        self._control_version: dict[str, int] = {}
        self._pending_control: dict[str, ControlStatus] = {}
        self._last_event_ts: dict[str, int] = {}
        self._log_path = Path(log_path) if log_path else None
        self._log_fh = None
        if self._log_path and self._log_path.exists():
            self._replay_log()
        if self._log_path:
            self._log_fh = open(self._log_path, "a", encoding="utf-8")
            for event in self._parked:
                log.info("re-parked undecided event %s after restart", event.event_id)

    # -- persistence -------------------------------------------------------

    def _append_log(self, record: dict) -> None:
        if self._log_fh:
            self._log_fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._log_fh.flush()

    def _replay_log(self) -> None:
        for record in read_log(self._log_path):
            kind = record["t"]
            if kind == "event":
                event = SuspicionEvent.from_dict(record["event"])
                self._seen_events.add(event.event_id)
                self._events[event.event_id] = event
                self._known_cameras.add(event.camera_id)
            elif kind == "alert":
                alert = Alert.from_dict(record["alert"])
                self._alerts[alert.alert_id] = alert
                self._alert_order.append(alert.alert_id)
                key = (alert.event.zone_id, alert.product_id)
                self._last_alert_ms[key] = max(self._last_alert_ms.get(key, 0), alert.created_at)
            elif kind == "uncorroborated":
                self._uncorroborated.append(record["event_id"])
            elif kind == "decided":
                self._decided_events.add(record["event_id"])
            elif kind == "feedback":
                fb = StaffFeedback.from_dict(record["feedback"])
                alert = self._alerts[fb.alert_id]
                if alert.status is AlertStatus.OPEN:
                    self._alerts[fb.alert_id] = alert.with_status(fb.verdict)
                    if fb.verdict is AlertStatus.DISMISSED:
                        zone = alert.event.zone_id
                        self._fp_by_zone[zone] = self._fp_by_zone.get(zone, 0) + 1
            elif kind == "control":
                status = ControlStatus(
                    camera_id=record["camera_id"],
                    version=record["version"],
                    status="pending",
                    message=record["message"],
                )
                self._pending_control[status.camera_id] = status
                self._control_version[status.camera_id] = status.version
                self._known_cameras.add(status.camera_id)
            elif kind == "control_ack":
                camera_id = record["camera_id"]
                pending = self._pending_control.get(camera_id)
                if pending and pending.version == record["version"]:
                    del self._pending_control[camera_id]
        # Accepted but never decided: pick these back up.
        self._parked = [
            self._events[eid] for eid in self._events if eid not in self._decided_events
        ]

    def close(self) -> None:
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    # -- decision path -----------------------------------------------------

    def _zone_products(self, zone_id: str) -> list[str]:
        scope = self.policy.reconcile_scope
        if scope is not None:
            return list(scope.get(zone_id, []))
        return [p.product_id for p in self.inventory.products_in_zone(zone_id)]

    def on_suspicion(self, event: SuspicionEvent) -> list[Alert]:
        """Corroborate one event. Returns the alerts it raised (possibly none).

        Duplicate event ids are no-ops. If the inventory backend is
        unreachable the event is parked for retry, never dropped.
        """
        with self._lock:
            if event.event_id in self._seen_events:
                return []
            self._seen_events.add(event.event_id)
            self._events[event.event_id] = event
            self._known_cameras.add(event.camera_id)
            self._last_event_ts[event.camera_id] = event.timestamp
            self._append_log({"t": "event", "event": event.to_dict()})
            return self._decide(event)

    def _decide(self, event: SuspicionEvent) -> list[Alert]:
        raised: list[Alert] = []
        any_fresh = False
        try:
            for product_id in self._zone_products(event.zone_id):
                try:
                    result = self.inventory.reconcile(product_id, now=event.timestamp)
                except StaleObservationError:
                    continue
                any_fresh = True
                if not result.mismatch:
                    continue
                key = (event.zone_id, product_id)
                last = self._last_alert_ms.get(key)
                if last is not None and event.timestamp - last < self.policy.alert_dedup_window_ms:
                    self._append_log(
                        {"t": "suppressed", "event_id": event.event_id, "product_id": product_id}
                    )
                    continue
                alert = Alert(
                    alert_id=f"alert-{len(self._alert_order) + 1:06d}",
                    event=event,
                    product_id=product_id,
                    expected_count=result.expected_count,
                    observed_count=result.observed_count,
                    deficit=result.deficit,
                    created_at=event.timestamp,
                )
                self._alerts[alert.alert_id] = alert
                self._alert_order.append(alert.alert_id)
                self._last_alert_ms[key] = alert.created_at
                self._append_log({"t": "alert", "alert": alert.to_dict()})
                raised.append(alert)
        except InventoryUnavailable:
            self._parked.append(event)
            self._append_log({"t": "parked", "event_id": event.event_id})
            log.warning("inventory unreachable; parked event %s", event.event_id)
            return []
        if not raised:
            reason = "no-deficit" if any_fresh else "stale"
            self._uncorroborated.append(event.event_id)
            self._append_log(
                {"t": "uncorroborated", "event_id": event.event_id, "reason": reason}
            )
        self._decided_events.add(event.event_id)
        self._append_log({"t": "decided", "event_id": event.event_id})
        for alert in raised:
            self._notify(alert)
        return raised

    def retry_parked(self) -> list[Alert]:
        """Re-run the decision for events parked on inventory failures."""
        with self._lock:
            pending = self._parked
            self._parked = []
            raised = []
            for event in pending:
                if event.event_id in self._decided_events:
                    continue
                raised.extend(self._decide(event))
            return raised

    @property
    def parked_count(self) -> int:
        with self._lock:
            return len(self._parked)

    # -- staff loop --------------------------------------------------------

    def record_feedback(self, fb: StaffFeedback) -> Alert:
        """Apply a staff verdict. Replaying the same verdict is a no-op;
        contradicting a terminal verdict is a conflict."""
        with self._lock:
            alert = self._alerts.get(fb.alert_id)
            if alert is None:
                raise UnknownAlertError(fb.alert_id)
            if alert.status is not AlertStatus.OPEN:
                if alert.status is fb.verdict:
                    return alert
                raise FeedbackConflictError(
                    f"alert {fb.alert_id} already {alert.status.value}"
                )
            updated = alert.with_status(fb.verdict)
            self._alerts[fb.alert_id] = updated
            if fb.verdict is AlertStatus.DISMISSED:
                zone = alert.event.zone_id
                self._fp_by_zone[zone] = self._fp_by_zone.get(zone, 0) + 1
            self._append_log({"t": "feedback", "feedback": fb.to_dict()})
            return updated

    # -- control channel ---------------------------------------------------

    def register_control_handler(self, camera_id: str, handler: Callable[[dict], dict]) -> None:
        """In-process agents register here; control messages apply immediately."""
        with self._lock:
            self._control_handlers[camera_id] = handler
            self._known_cameras.add(camera_id)

    def register_camera(self, camera_id: str) -> None:
        with self._lock:
            self._known_cameras.add(camera_id)

    def set_threshold(self, camera_id: str, threshold: float) -> ControlStatus:
        if not threshold > 0:
            raise ValueError(f"threshold must be > 0, got {threshold}")
        with self._lock:
            if camera_id not in self._known_cameras:
                raise UnknownCameraError(camera_id)
            version = self._control_version.get(camera_id, 0) + 1
            self._control_version[camera_id] = version
            message = {
                "version": version,
                "token": self.shared_token,
                "threshold": threshold,
            }
            handler = self._control_handlers.get(camera_id)
            if handler is not None:
                ack = handler(message)
                if ack.get("applied"):
                    return ControlStatus(camera_id, version, "applied", message)
            status = ControlStatus(camera_id, version, "pending", message)
            self._pending_control[camera_id] = status
            self._append_log(
                {"t": "control", "camera_id": camera_id, "version": version, "message": message}
            )
            return status

    def push_model(self, camera_id: str, model_payload: dict) -> ControlStatus:
        """Ship a serialized pose model to an agent through the same channel."""
        with self._lock:
            if camera_id not in self._known_cameras:
                raise UnknownCameraError(camera_id)
            version = self._control_version.get(camera_id, 0) + 1
            self._control_version[camera_id] = version
            message = {"version": version, "token": self.shared_token, "model": model_payload}
            handler = self._control_handlers.get(camera_id)
            if handler is not None:
                ack = handler(message)
                if ack.get("applied"):
                    return ControlStatus(camera_id, version, "applied", message)
                return ControlStatus(camera_id, version, "rejected", message)
            status = ControlStatus(camera_id, version, "pending", message)
            self._pending_control[camera_id] = status
            self._append_log(
                {"t": "control", "camera_id": camera_id, "version": version, "message": message}
            )
            return status

    def poll_control(self, camera_id: str) -> Optional[dict]:
        """Remote agents poll for their pending control message."""
        with self._lock:
            status = self._pending_control.get(camera_id)
            return status.message if status else None

    def ack_control(self, camera_id: str, version: int) -> None:
        with self._lock:
            status = self._pending_control.get(camera_id)
            if status and status.version == version:
                del self._pending_control[camera_id]
                self._append_log(
                    {"t": "control_ack", "camera_id": camera_id, "version": version}
                )

    def control_status(self, camera_id: str) -> Optional[ControlStatus]:
        with self._lock:
            pending = self._pending_control.get(camera_id)
            if pending:
                return pending
            version = self._control_version.get(camera_id)
            if version is None:
                return None
            return ControlStatus(camera_id, version, "applied")

    # -- alert feed --------------------------------------------------------

    def subscribe(self, callback: Callable[[int, Alert], None]) -> Callable[[], None]:
        """Register a push subscriber; returns the unsubscribe handle."""
        with self._lock:
            self._subscribers.append(callback)

        def unsubscribe() -> None:
            with self._lock:
                if callback in self._subscribers:
                    self._subscribers.remove(callback)

        return unsubscribe

    def _notify(self, alert: Alert) -> None:
        seq = self._alert_order.index(alert.alert_id) + 1
        for callback in list(self._subscribers):
            try:
                callback(seq, alert)
            except Exception:
                log.exception("alert subscriber failed; dropping it")
                self._subscribers.remove(callback)

    def alerts_since(self, since: int = 0) -> list[tuple[int, Alert]]:
        """Alerts with feed sequence above ``since``, in creation order."""
        with self._lock:
            return [
                (i + 1, self._alerts[alert_id])
                for i, alert_id in enumerate(self._alert_order)
                if i + 1 > since
            ]

    def get_alert(self, alert_id: str) -> Alert:
        with self._lock:
            if alert_id not in self._alerts:
                raise UnknownAlertError(alert_id)
            return self._alerts[alert_id]

    # -- status ------------------------------------------------------------

    def zone_status(self, zone_id: str, now: Optional[int] = None) -> dict:
        with self._lock:
            open_alerts = [
                a.alert_id
                for a in self._alerts.values()
                if a.event.zone_id == zone_id and a.status is AlertStatus.OPEN
            ]
            products = []
            for product_id in self._zone_products(zone_id):
                try:
                    result = self.inventory.reconcile(product_id, now=now)
                    products.append(result.to_dict())
                except StaleObservationError:
                    products.append({"product_id": product_id, "stale": True})
            return {
                "zone_id": zone_id,
                "false_positives": self._fp_by_zone.get(zone_id, 0),
                "open_alerts": open_alerts,
                "products": products,
            }

    def false_positive_count(self, zone_id: str) -> int:
        with self._lock:
            return self._fp_by_zone.get(zone_id, 0)

    def stats(self) -> dict:
        with self._lock:
            return {
                "events_seen": len(self._seen_events),
                "alerts": len(self._alert_order),
                "uncorroborated": len(self._uncorroborated),
                "parked": len(self._parked),
            }


def read_log(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_snapshot(service: DecisionService, path: str | Path) -> None:
    """Dump current state for operators; recovery always replays the log."""
    with service._lock:
        snapshot = {
            "alerts": [service._alerts[a].to_dict() for a in service._alert_order],
            "uncorroborated": list(service._uncorroborated),
            "false_positives": dict(service._fp_by_zone),
            "stats": service.stats(),
        }
    Path(path).write_text(json.dumps(snapshot, indent=2))


def audit_conjunction(records: list[dict]) -> list[str]:
    """Replay a decision log and flag any alert that violates the conjunction
    rule: every alert must trace back to a received suspicion event in its
    zone and carry a positive deficit."""
    events: dict[str, dict] = {}
    violations: list[str] = []
    for record in records:
        if record["t"] == "event":
            events[record["event"]["event_id"]] = record["event"]
        elif record["t"] == "alert":
            alert = record["alert"]
            source = events.get(alert["event"]["event_id"])
            if source is None:
                violations.append(f"{alert['alert_id']}: no suspicion event on file")
                continue
            if source["zone_id"] != alert["event"]["zone_id"]:
                violations.append(f"{alert['alert_id']}: zone mismatch")
            if alert["deficit"] <= 0:
                violations.append(f"{alert['alert_id']}: non-positive deficit")
            if alert["expected_count"] - alert["observed_count"] != alert["deficit"]:
                violations.append(f"{alert['alert_id']}: deficit arithmetic broken")
    return violations
