"""HTTP surface for the cloud service and the inventory application.

Endpoints (JSON bodies everywhere):

    POST /events                         suspicion event intake (topic header
                                         "suspicion/<camera_id>", shared token)
    POST /feedback                       staff verdict on an alert
    POST /control/threshold              {"camera_id", "threshold"}
    GET  /control/<camera_id>            pending control message, 204 if none
    POST /control/<camera_id>/ack        {"version"}
    GET  /alerts?since=<seq>             pull feed, creation order
    GET  /alerts/stream?since=<seq>      server-push stream, one JSON alert per
                                         SSE frame, id = feed sequence
    GET  /zones/<zone_id>/status         reconciliation + false-positive view
    POST /inventory/sales                apply-sale
    POST /inventory/observations         record-observation
    GET  /inventory/products/<id>        get-product
    GET  /inventory/products/<id>/reconcile?now=<ms>
    GET  /healthz

The push stream and the pull feed share one cursor space, so a console can
resume after a disconnect without gaps or duplicates.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .cloud import (
    DecisionService,
    FeedbackConflictError,
    UnknownAlertError,
    UnknownCameraError,
)
from .inventory import (
    InventoryStore,
    OversellError,
    StaleObservationError,
    UnknownPairingError,
    UnknownProductError,
)
from .model import SaleTransaction, SchemaError, ShelfObservation, StaffFeedback, SuspicionEvent

log = logging.getLogger(__name__)

SSE_HEARTBEAT_S = 1.0


class CloudServer:
    """Threaded HTTP server wrapping a DecisionService and its InventoryStore."""

    def __init__(
        self,
        service: DecisionService,
        inventory: InventoryStore,
        host: str = "127.0.0.1",
        port: int = 0,
        token: str = "",
        parked_retry_s: float = 0.5,
    ):
        self.service = service
        self.inventory = inventory
        self.token = token
        self._stopping = threading.Event()
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.port = self.httpd.server_address[1]
        self.host = host
        self._thread: Optional[threading.Thread] = None
        self._retry_thread: Optional[threading.Thread] = None
        self._parked_retry_s = parked_retry_s

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "CloudServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        self._retry_thread = threading.Thread(target=self._retry_loop, daemon=True)
        self._retry_thread.start()
        log.info("cloud server listening on %s", self.base_url)
        return self

    def _retry_loop(self) -> None:
        while not self._stopping.wait(self._parked_retry_s):
            if self.service.parked_count:
                self.service.retry_parked()

    def stop(self) -> None:
        self._stopping.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)
        self.service.close()


def _make_handler(server: CloudServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # route through logging, not stderr
            log.debug("%s " + fmt, self.address_string(), *args)

        # -- plumbing -------------------------------------------------------

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_empty(self, status: int) -> None:
            self.send_response(status)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length) if length else b"{}"
            obj = json.loads(raw)
            if not isinstance(obj, dict):
                raise SchemaError("<body>", "expected a JSON object")
            return obj

        def _authorized(self) -> bool:
            if not server.token:
                return True
            return self.headers.get("X-Auth-Token", "") == server.token

        # -- routes ----------------------------------------------------------

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type, X-Auth-Token, X-Topic")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            query = parse_qs(url.query)
            try:
                if url.path == "/healthz":
                    self._send_json(200, {"ok": True})
                elif url.path == "/alerts":
                    since = int(query.get("since", ["0"])[0])
                    entries = server.service.alerts_since(since)
                    self._send_json(
                        200,
                        {
                            "alerts": [
                                {"seq": seq, "alert": alert.to_dict()} for seq, alert in entries
                            ],
                            "cursor": entries[-1][0] if entries else since,
                        },
                    )
                elif url.path == "/alerts/stream":
                    self._stream_alerts(query)
                elif len(parts) == 3 and parts[0] == "zones" and parts[2] == "status":
                    now = query.get("now")
                    self._send_json(
                        200,
                        server.service.zone_status(parts[1], int(now[0]) if now else None),
                    )
                elif len(parts) == 2 and parts[0] == "control":
                    message = server.service.poll_control(parts[1])
                    if message is None:
                        self._send_empty(204)
                    else:
                        self._send_json(200, message)
                elif len(parts) == 3 and parts[:2] == ["inventory", "products"]:
                    record = server.inventory.get_product(parts[2])
                    self._send_json(200, record.to_dict())
                elif (
                    len(parts) == 4
                    and parts[:2] == ["inventory", "products"]
                    and parts[3] == "reconcile"
                ):
                    now = query.get("now")
                    result = server.inventory.reconcile(
                        parts[2], now=int(now[0]) if now else None
                    )
                    self._send_json(200, result.to_dict())
                else:
                    self._send_json(404, {"error": f"no route for {url.path}"})
            except UnknownProductError as exc:
                self._send_json(404, {"error": f"unknown product: {exc}"})
            except StaleObservationError as exc:
                self._send_json(409, {"error": str(exc)})
            except (ValueError, SchemaError) as exc:
                self._send_json(400, {"error": str(exc)})

        def do_POST(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if not self._authorized():
                    self._send_json(401, {"error": "bad or missing token"})
                    return
                body = self._read_json()
                if url.path == "/events":
                    event = SuspicionEvent.from_dict(body)
                    topic = self.headers.get("X-Topic")
                    if topic and topic != f"suspicion/{event.camera_id}":
                        self._send_json(
                            400, {"error": f"topic {topic} does not match camera"}
                        )
                        return
                    alerts = server.service.on_suspicion(event)
                    self._send_json(
                        200, {"accepted": True, "alerts": [a.alert_id for a in alerts]}
                    )
                elif url.path == "/feedback":
                    fb = StaffFeedback.from_dict(body)
                    alert = server.service.record_feedback(fb)
                    self._send_json(200, alert.to_dict())
                elif url.path == "/control/threshold":
                    status = server.service.set_threshold(
                        body.get("camera_id", ""), float(body.get("threshold", 0))
                    )
                    self._send_json(200, status.to_dict())
                elif len(parts) == 3 and parts[0] == "control" and parts[2] == "ack":
                    server.service.ack_control(parts[1], int(body.get("version", 0)))
                    self._send_json(200, {"ok": True})
                elif url.path == "/inventory/sales":
                    record = server.inventory.apply_sale(SaleTransaction.from_dict(body))
                    self._send_json(200, record.to_dict())
                elif url.path == "/inventory/observations":
                    server.inventory.record_observation(ShelfObservation.from_dict(body))
                    self._send_json(200, {"ok": True})
                else:
                    self._send_json(404, {"error": f"no route for {url.path}"})
            except json.JSONDecodeError as exc:
                self._send_json(400, {"error": f"invalid JSON: {exc.msg}"})
            except SchemaError as exc:
                self._send_json(400, {"error": str(exc)})
            except UnknownAlertError as exc:
                self._send_json(404, {"error": f"unknown alert: {exc}"})
            except UnknownCameraError as exc:
                self._send_json(404, {"error": f"unknown camera: {exc}"})
            except UnknownProductError as exc:
                self._send_json(404, {"error": f"unknown product: {exc}"})
            except UnknownPairingError as exc:
                self._send_json(404, {"error": f"unknown zone/product pairing: {exc}"})
            except FeedbackConflictError as exc:
                self._send_json(409, {"error": str(exc)})
            except OversellError as exc:
                self._send_json(409, {"error": str(exc)})
            except ValueError as exc:
                self._send_json(400, {"error": str(exc)})

        # -- SSE --------------------------------------------------------------

        def _stream_alerts(self, query: dict) -> None:
            since_param = query.get("since")
            last_id = self.headers.get("Last-Event-ID")
            since = int(since_param[0]) if since_param else int(last_id) if last_id else 0

            inbox: "queue.Queue[tuple[int, object]]" = queue.Queue()
            unsubscribe = server.service.subscribe(lambda seq, alert: inbox.put((seq, alert)))
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Connection", "close")
                self.end_headers()

                cursor = since
                for seq, alert in server.service.alerts_since(since):
                    self._write_sse(seq, alert)
                    cursor = seq
                while not server._stopping.is_set():
                    try:
                        seq, alert = inbox.get(timeout=SSE_HEARTBEAT_S)
                    except queue.Empty:
                        self.wfile.write(b": ping\n\n")
                        self.wfile.flush()
                        continue
                    if seq > cursor:
                        self._write_sse(seq, alert)
                        cursor = seq
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                unsubscribe()

        def _write_sse(self, seq: int, alert) -> None:
            frame = f"id: {seq}\nevent: alert\ndata: {json.dumps(alert.to_dict())}\n\n"
            self.wfile.write(frame.encode("utf-8"))
            self.wfile.flush()

    return Handler


def build_server(
    catalog_path: str,
    host: str = "127.0.0.1",
    port: int = 8770,
    state_dir: str | None = None,
    token: str = "",
    staleness_ms: int = 60_000,
) -> CloudServer:
    """Wire a fresh inventory + decision service pair behind one HTTP server.

    With a state dir, both components replay their logs on startup, which is
    what makes a restart lossless.
    """
    inv_log = str(Path(state_dir) / "inventory.log.jsonl") if state_dir else None
    cloud_log = str(Path(state_dir) / "cloud.log.jsonl") if state_dir else None
    if state_dir:
        Path(state_dir).mkdir(parents=True, exist_ok=True)
    inventory = InventoryStore(staleness_ms=staleness_ms, log_path=inv_log)
    fresh = not inventory.product_ids()
    if fresh and catalog_path:
        inventory.load_catalog_file(catalog_path)
    service = DecisionService(inventory, log_path=cloud_log, shared_token=token)
    return CloudServer(service, inventory, host=host, port=port, token=token)
