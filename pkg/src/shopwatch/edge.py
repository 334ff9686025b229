"""Store-side agent: landmark stream in, suspicion events out.

Per frame the agent normalizes landmarks, optionally annotates the pose with
a trained classifier, and feeds the feature vector to the streaming anomaly
detector. Emitted events go through a bounded, disk-spooled delivery queue
with at-least-once semantics: an event leaves the queue only on a confirmed
2xx from the cloud, retries back off exponentially, and per-camera order is
preserved because the queue is drained strictly head-first. If the queue
overflows while the cloud is down the oldest events are dropped and counted.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import requests

from .anomaly import LofConfig, StreamingDetector
from .classify import ModelError, TrainedModel, load_model, model_from_dict, predict
from .features import normalize
from .model import LandmarkFrame, SuspicionEvent

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAPACITY = 1024
DEFAULT_RETRY_BASE_S = 0.05
DEFAULT_RETRY_MAX_S = 2.0


@dataclass(frozen=True)
class AgentConfig:
    camera_id: str
    zone_id: str
    endpoint: str  # cloud base URL, or "direct" when wired in-process
    lof: LofConfig = field(default_factory=LofConfig)
    model_path: Optional[str] = None
    replay_speed: float = 0.0  # 0 = replay as fast as possible
    control_token: str = ""
    control_poll_frames: int = 25
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    spool_dir: Optional[str] = None
    retry_base_s: float = DEFAULT_RETRY_BASE_S
    retry_max_s: float = DEFAULT_RETRY_MAX_S
    drain_timeout_s: float = 10.0

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("endpoint must be non-empty")
        if self.replay_speed < 0:
            raise ValueError(f"replay_speed must be >= 0, got {self.replay_speed}")

    @classmethod
    def from_dict(cls, obj: dict) -> "AgentConfig":
        known = dict(obj)
        lof = LofConfig.from_dict(known.pop("lof", {}))
        return cls(lof=lof, **known)

    @classmethod
    def from_file(cls, path: str | Path) -> "AgentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


class DeliveryQueue:
    """Bounded FIFO of event payloads, optionally spooled to disk.

    The spool is an append-only JSONL file plus a head-offset sidecar; entries
    before the head are acked or dropped. A reloaded queue re-sends anything
    not yet acked, which is exactly the at-least-once contract.
    """

    def __init__(self, capacity: int, spool_dir: str | Path | None = None, name: str = "events"):
        self.capacity = capacity
        self.dropped = 0
        self._entries: deque[dict] = deque()
        self._spool_path: Optional[Path] = None
        self._state_path: Optional[Path] = None
        self._head = 0
        if spool_dir is not None:
            spool_dir = Path(spool_dir)
            spool_dir.mkdir(parents=True, exist_ok=True)
            self._spool_path = spool_dir / f"{name}.spool.jsonl"
            self._state_path = spool_dir / f"{name}.spool.state"
            self._load()

    def _load(self) -> None:
        if self._state_path.exists():
            self._head = json.loads(self._state_path.read_text()).get("head", 0)
        if self._spool_path.exists():
            with open(self._spool_path, "r", encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    line = line.strip()
                    if line and i >= self._head:
                        self._entries.append(json.loads(line))
        while len(self._entries) > self.capacity:
            self._entries.popleft()
            self._head += 1
            self.dropped += 1
        self._write_state()

    def _write_state(self) -> None:
        if self._state_path:
            self._state_path.write_text(json.dumps({"head": self._head}))

    def push(self, payload: dict) -> None:
        if len(self._entries) >= self.capacity:
            self._entries.popleft()
            self._head += 1
            self.dropped += 1
            self._write_state()
            log.warning("delivery queue full; dropped oldest (total dropped: %d)", self.dropped)
        self._entries.append(payload)
        if self._spool_path:
            with open(self._spool_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(payload, separators=(",", ":")) + "\n")

    def peek(self) -> Optional[dict]:
        return self._entries[0] if self._entries else None

    def ack(self) -> None:
        self._entries.popleft()
        self._head += 1
        self._write_state()

    def __len__(self) -> int:
        return len(self._entries)

    def close(self) -> None:
        """Compact the spool down to the unsent entries."""
        if self._spool_path:
            with open(self._spool_path, "w", encoding="utf-8") as fh:
                for payload in self._entries:
                    fh.write(json.dumps(payload, separators=(",", ":")) + "\n")
            self._head = 0
            self._write_state()


class DirectCloudLink:
    """In-process wiring straight into a DecisionService."""

    def __init__(self, service):
        self.service = service

    def post_event(self, payload: dict) -> bool:
        self.service.on_suspicion(SuspicionEvent.from_dict(payload))
        return True

    def poll_control(self, camera_id: str) -> Optional[dict]:
        return self.service.poll_control(camera_id)

    def ack_control(self, camera_id: str, version: int) -> None:
        self.service.ack_control(camera_id, version)


class HttpCloudLink:
    """HTTP wiring: JSON POST to /events with a per-camera topic header."""

    def __init__(self, base_url: str, token: str = "", timeout_s: float = 2.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout_s = timeout_s

    def _headers(self, camera_id: Optional[str] = None) -> dict:
        headers = {}
        if camera_id is not None:
            headers["X-Topic"] = f"suspicion/{camera_id}"
        if self.token:
            headers["X-Auth-Token"] = self.token
        return headers

    def post_event(self, payload: dict) -> bool:
        try:
            resp = requests.post(
                f"{self.base_url}/events",
                json=payload,
                headers=self._headers(payload["camera_id"]),
                timeout=self.timeout_s,
            )
            return resp.ok
        except requests.RequestException:
            return False

    def poll_control(self, camera_id: str) -> Optional[dict]:
        try:
            resp = requests.get(
                f"{self.base_url}/control/{camera_id}", timeout=self.timeout_s
            )
            if resp.status_code == 200:
                return resp.json()
        except requests.RequestException:
            pass
        return None

    def ack_control(self, camera_id: str, version: int) -> None:
        try:
            requests.post(
                f"{self.base_url}/control/{camera_id}/ack",
                json={"version": version},
                headers=self._headers(),
                timeout=self.timeout_s,
            )
        except requests.RequestException:
            pass


@dataclass
class AgentRunStats:
    frames: int = 0
    events_emitted: int = 0
    events_delivered: int = 0
    events_dropped: int = 0
    events_remaining: int = 0
    retries: int = 0

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "events_emitted": self.events_emitted,
            "events_delivered": self.events_delivered,
            "events_dropped": self.events_dropped,
            "events_remaining": self.events_remaining,
            "retries": self.retries,
        }


class EdgeAgent:
    """One camera's processing loop plus its control surface."""

    def __init__(self, config: AgentConfig, link=None):
        self.config = config
        self.link = link if link is not None else HttpCloudLink(config.endpoint, config.control_token)
        self.detector = StreamingDetector(config.lof, config.camera_id, config.zone_id)
        self.model: Optional[TrainedModel] = None
        if config.model_path:
            self.model = load_model(config.model_path)
        self.queue = DeliveryQueue(config.queue_capacity, config.spool_dir, name=config.camera_id)
        self.stats = AgentRunStats()
        self._applied_version = 0
        self._lock = threading.RLock()
        self._backoff_s = config.retry_base_s
        self._next_try = 0.0

    # -- control -----------------------------------------------------------

    def handle_control(self, message: dict) -> dict:
        """Apply a threshold or model update between frames; idempotent per version."""
        with self._lock:
            if message.get("token", "") != self.config.control_token:
                return {"applied": False, "error": "bad token"}
            version = int(message.get("version", 0))
            if version <= self._applied_version:
                return {"applied": True, "version": self._applied_version, "noop": True}
            if "threshold" in message:
                threshold = message["threshold"]
                try:
                    self.detector.set_threshold(float(threshold))
                except (TypeError, ValueError) as exc:
                    return {"applied": False, "error": str(exc)}
            if "model" in message:
                try:
                    self.model = model_from_dict(message["model"])
                except ModelError as exc:
                    return {"applied": False, "error": str(exc)}
            self._applied_version = version
            return {"applied": True, "version": version}

    @property
    def threshold(self) -> float:
        return self.detector.config.threshold

    # -- frame path --------------------------------------------------------

    def process_frame(self, frame: LandmarkFrame) -> Optional[SuspicionEvent]:
        with self._lock:
            self.stats.frames += 1
            feature = normalize(frame)
            pose = predict(self.model, feature) if self.model is not None else None
            event = self.detector.observe(feature, pose)
            if event is not None:
                self.stats.events_emitted += 1
                self.queue.push(event.to_dict())
            self._flush(opportunistic=True)
            return event

    def _flush(self, opportunistic: bool = False, deadline: Optional[float] = None) -> None:
        """Drain the queue head-first; stop at the first failure (order matters)."""
        while len(self.queue) > 0:
            now = time.monotonic()
            if opportunistic and now < self._next_try:
                return
            if deadline is not None and now >= deadline:
                return
            payload = self.queue.peek()
            if self.link.post_event(payload):
                self.queue.ack()
                self.stats.events_delivered += 1
                self._backoff_s = self.config.retry_base_s
                self._next_try = 0.0
            else:
                self.stats.retries += 1
                self._next_try = now + self._backoff_s
                self._backoff_s = min(self._backoff_s * 2, self.config.retry_max_s)
                if opportunistic:
                    return
                time.sleep(min(self._backoff_s, 0.2))

    def drain(self, timeout_s: Optional[float] = None) -> int:
        """Final flush with a deadline; whatever is left persists in the spool."""
        budget = self.config.drain_timeout_s if timeout_s is None else timeout_s
        self._flush(deadline=time.monotonic() + budget)
        self.stats.events_dropped = self.queue.dropped
        self.stats.events_remaining = len(self.queue)
        self.queue.close()
        return len(self.queue)

    def run(self, frames: Iterable[LandmarkFrame]) -> AgentRunStats:
        """Process a whole stream, polling for control between frames."""
        last_ts: Optional[int] = None
        for i, frame in enumerate(frames):
            if self.config.replay_speed > 0 and last_ts is not None:
                delta_s = max(0, frame.timestamp - last_ts) / 1000.0
                time.sleep(delta_s / self.config.replay_speed)
            last_ts = frame.timestamp
            if i % self.config.control_poll_frames == 0:
                self._poll_control()
            self.process_frame(frame)
        self._poll_control()
        self.drain()
        return self.stats

    def _poll_control(self) -> None:
        poll = getattr(self.link, "poll_control", None)
        if poll is None:
            return
        message = poll(self.config.camera_id)
        if message:
            ack = self.handle_control(message)
            if ack.get("applied"):
                self.link.ack_control(self.config.camera_id, int(message.get("version", 0)))
