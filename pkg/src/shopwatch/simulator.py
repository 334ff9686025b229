"""Deterministic store simulator: scripted customers generate landmark
streams, sales, and shelf observations; the harness wires agents to the cloud
service in-process and scores the resulting alerts against ground truth.

Every random draw comes from a per-entity generator derived from the scenario
seed and the entity id, so adding a customer never perturbs the streams of the
others. Tick order is fixed: scripted actions first, then shelf observations,
then one frame per camera; that way a steal's deficit is already observable
when the first anomalous frame of its burst reaches the cloud.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .anomaly import LofConfig
from .classify import linear_train
from .cloud import DecisionPolicy, DecisionService, audit_conjunction
from .edge import AgentConfig, DirectCloudLink, EdgeAgent
from .inventory import InventoryStore
from .model import POSE_LABELS, ProductRecord, SaleTransaction, ShelfObservation
from .posegen import (
    PoseGeneratorParams,
    anomalous_landmarks,
    generate_pose_dataset,
    landmarks_to_frame,
    sample_pose_points,
)

EPOCH_BASE_MS = 1_700_000_000_000


def entity_rng(seed: int, entity_id: str) -> np.random.Generator:
    """Independent substream per entity: the seed material mixes the scenario
    seed with a stable hash of the entity id."""
    digest = hashlib.sha256(entity_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


@dataclass(frozen=True)
class CameraSpec:
    camera_id: str
    zone_id: str


@dataclass(frozen=True)
class CustomerAction:
    tick: int
    kind: str  # "purchase" | "steal" | "gesture"
    product_id: Optional[str] = None
    quantity: int = 0
    visible: bool = True  # steal only: does it show as anomalous frames
    burst_ticks: int = 25

    def __post_init__(self):
        if self.kind not in ("purchase", "steal", "gesture"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind in ("purchase", "steal") and not self.product_id:
            raise ValueError(f"{self.kind} needs a product_id")
        if self.kind in ("purchase", "steal") and self.quantity < 1:
            raise ValueError(f"{self.kind} needs quantity >= 1")

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "kind": self.kind,
            "product_id": self.product_id,
            "quantity": self.quantity,
            "visible": self.visible,
            "burst_ticks": self.burst_ticks,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CustomerAction":
        return cls(
            tick=int(obj["tick"]),
            kind=obj["kind"],
            product_id=obj.get("product_id"),
            quantity=int(obj.get("quantity", 0)),
            visible=bool(obj.get("visible", True)),
            burst_ticks=int(obj.get("burst_ticks", 25)),
        )


@dataclass(frozen=True)
class Customer:
    customer_id: str
    camera_id: str
    enter_tick: int
    exit_tick: int
    actions: tuple[CustomerAction, ...] = ()

    def to_dict(self) -> dict:
        return {
            "customer_id": self.customer_id,
            "camera_id": self.camera_id,
            "enter_tick": self.enter_tick,
            "exit_tick": self.exit_tick,
            "actions": [a.to_dict() for a in self.actions],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Customer":
        return cls(
            customer_id=obj["customer_id"],
            camera_id=obj["camera_id"],
            enter_tick=int(obj["enter_tick"]),
            exit_tick=int(obj["exit_tick"]),
            actions=tuple(CustomerAction.from_dict(a) for a in obj.get("actions", [])),
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_ticks: int
    cameras: tuple[CameraSpec, ...]
    catalog: tuple[ProductRecord, ...]
    customers: tuple[Customer, ...]
    tick_ms: int = 100
    observation_every_ticks: int = 10
    staleness_ms: int = 60_000
    dedup_window_ms: int = 120_000
    lof: LofConfig = field(default_factory=lambda: LofConfig(
        neighbor_count=8, threshold=1.8, window_capacity=160, warmup_min=48
    ))
    pose_model: str = "none"  # "none" | "linear"
    pose_params: PoseGeneratorParams = field(default_factory=PoseGeneratorParams)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "duration_ticks": self.duration_ticks,
            "tick_ms": self.tick_ms,
            "observation_every_ticks": self.observation_every_ticks,
            "staleness_ms": self.staleness_ms,
            "dedup_window_ms": self.dedup_window_ms,
            "lof": self.lof.to_dict(),
            "pose_model": self.pose_model,
            "pose_jitter_sigma": self.pose_params.jitter_sigma,
            "cameras": [{"camera_id": c.camera_id, "zone_id": c.zone_id} for c in self.cameras],
            "catalog": [p.to_dict() for p in self.catalog],
            "customers": [c.to_dict() for c in self.customers],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        return cls(
            name=obj["name"],
            seed=int(obj["seed"]),
            duration_ticks=int(obj["duration_ticks"]),
            tick_ms=int(obj.get("tick_ms", 100)),
            observation_every_ticks=int(obj.get("observation_every_ticks", 10)),
            staleness_ms=int(obj.get("staleness_ms", 60_000)),
            dedup_window_ms=int(obj.get("dedup_window_ms", 120_000)),
            lof=LofConfig.from_dict(obj.get("lof", {})),
            pose_model=obj.get("pose_model", "none"),
            pose_params=PoseGeneratorParams(jitter_sigma=float(obj.get("pose_jitter_sigma", 2.0))),
            cameras=tuple(CameraSpec(c["camera_id"], c["zone_id"]) for c in obj["cameras"]),
            catalog=tuple(ProductRecord.from_dict(p) for p in obj["catalog"]),
            customers=tuple(Customer.from_dict(c) for c in obj.get("customers", [])),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass
class TheftTruth:
    customer_id: str
    product_id: str
    quantity: int
    timestamp: int
    detected: bool = False


@dataclass
class RunReport:
    scenario_name: str
    seed: int
    alerts: list[dict]
    true_positives: int
    false_positives: int
    misses: int
    precision: float
    recall: float
    events_emitted: int
    events_uncorroborated: int
    thefts_scripted: int
    frames_processed: int
    audit_violations: list[str]
    wall_ms: dict
    failed: bool = False
    failure: Optional[str] = None

    def to_dict(self, deterministic_only: bool = False) -> dict:
        out = {
            "scenario_name": self.scenario_name,
            "seed": self.seed,
            "alerts": self.alerts,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "misses": self.misses,
            "precision": self.precision,
            "recall": self.recall,
            "events_emitted": self.events_emitted,
            "events_uncorroborated": self.events_uncorroborated,
            "thefts_scripted": self.thefts_scripted,
            "frames_processed": self.frames_processed,
            "audit_violations": self.audit_violations,
            "failed": self.failed,
            "failure": self.failure,
        }
        if not deterministic_only:
            out["wall_ms"] = self.wall_ms
        return out


def _train_pose_model(scenario: Scenario):
    samples = generate_pose_dataset(scenario.pose_params, 400, seed=scenario.seed + 9001)
    return linear_train(samples, epochs=5, seed=scenario.seed)


def run_scenario(scenario: Scenario, log_dir: str | Path | None = None) -> RunReport:
    """Drive the whole pipeline in-process and score it against the script."""
    started = time.monotonic()
    try:
        return _run(scenario, log_dir, started)
    except Exception as exc:  # a crashed component still produces a report
        return RunReport(
            scenario_name=scenario.name,
            seed=scenario.seed,
            alerts=[],
            true_positives=0,
            false_positives=0,
            misses=sum(
                1 for c in scenario.customers for a in c.actions if a.kind == "steal"
            ),
            precision=0.0,
            recall=0.0,
            events_emitted=0,
            events_uncorroborated=0,
            thefts_scripted=sum(
                1 for c in scenario.customers for a in c.actions if a.kind == "steal"
            ),
            frames_processed=0,
            audit_violations=[],
            wall_ms={"total": (time.monotonic() - started) * 1000},
            failed=True,
            failure=f"{type(exc).__name__}: {exc}",
        )


def _run(scenario: Scenario, log_dir: str | Path | None, started: float) -> RunReport:
    inventory = InventoryStore(
        staleness_ms=scenario.staleness_ms,
        log_path=Path(log_dir) / "inventory.log.jsonl" if log_dir else None,
    )
    inventory.load_catalog(scenario.catalog)
    service = DecisionService(
        inventory,
        policy=DecisionPolicy(alert_dedup_window_ms=scenario.dedup_window_ms),
        log_path=Path(log_dir) / "cloud.log.jsonl" if log_dir else None,
    )

    pose_model = _train_pose_model(scenario) if scenario.pose_model == "linear" else None
    agents: dict[str, EdgeAgent] = {}
    for cam in scenario.cameras:
        config = AgentConfig(
            camera_id=cam.camera_id,
            zone_id=cam.zone_id,
            endpoint="direct",
            lof=scenario.lof,
        )
        agent = EdgeAgent(config, DirectCloudLink(service))
        agent.model = pose_model
        service.register_control_handler(cam.camera_id, agent.handle_control)
        agents[cam.camera_id] = agent

    zone_of = {cam.camera_id: cam.zone_id for cam in scenario.cameras}
    shelf = {p.product_id: p.expected_count for p in scenario.catalog}
    product_zone = {p.product_id: p.zone_id for p in scenario.catalog}
    customer_rng = {c.customer_id: entity_rng(scenario.seed, c.customer_id) for c in scenario.customers}
    burst_rng = {cam.camera_id: entity_rng(scenario.seed, f"burst:{cam.camera_id}") for cam in scenario.cameras}
    burst_until: dict[str, int] = {cam.camera_id: -1 for cam in scenario.cameras}
    thefts: list[TheftTruth] = []
    tx_counter = 0
    frames_processed = 0

    frame_wall = 0.0
    decide_wall = 0.0

    for tick in range(scenario.duration_ticks):
        now = EPOCH_BASE_MS + tick * scenario.tick_ms

        # 1. scripted actions
        for customer in scenario.customers:
            for action in customer.actions:
                if action.tick != tick:
                    continue
                if action.kind == "purchase":
                    tx_counter += 1
                    inventory.apply_sale(
                        SaleTransaction(
                            tx_id=f"tx-{tx_counter:05d}",
                            product_id=action.product_id,
                            quantity=action.quantity,
                            timestamp=now,
                        )
                    )
                    shelf[action.product_id] -= action.quantity
                elif action.kind == "steal":
                    shelf[action.product_id] -= action.quantity
                    thefts.append(
                        TheftTruth(customer.customer_id, action.product_id, action.quantity, now)
                    )
                    if action.visible:
                        burst_until[customer.camera_id] = tick + action.burst_ticks
                elif action.kind == "gesture":
                    burst_until[customer.camera_id] = tick + action.burst_ticks

        # 2. shelf observations
        last_tick = tick == scenario.duration_ticks - 1
        if tick % scenario.observation_every_ticks == 0 or last_tick:
            for product_id, count in shelf.items():
                inventory.record_observation(
                    ShelfObservation(
                        zone_id=product_zone[product_id],
                        product_id=product_id,
                        observed_count=max(0, count),
                        timestamp=now,
                    )
                )

        # 3. one frame per camera with a present customer
        for cam in scenario.cameras:
            present = [
                c
                for c in scenario.customers
                if c.camera_id == cam.camera_id and c.enter_tick <= tick <= c.exit_tick
            ]
            if not present:
                continue
            customer = min(present, key=lambda c: c.customer_id)
            if tick <= burst_until[cam.camera_id]:
                points = anomalous_landmarks(burst_rng[cam.camera_id])
            else:
                rng = customer_rng[customer.customer_id]
                label = POSE_LABELS[int(rng.integers(len(POSE_LABELS)))]
                points = sample_pose_points(label, scenario.pose_params, rng)
            frame = landmarks_to_frame(
                points,
                scenario.pose_params,
                camera_id=cam.camera_id,
                zone_id=zone_of[cam.camera_id],
                timestamp=now,
                frame_ref=f"{cam.camera_id}/{tick:05d}",
            )
            t0 = time.monotonic()
            agents[cam.camera_id].process_frame(frame)
            frame_wall += time.monotonic() - t0
            frames_processed += 1

    for agent in agents.values():
        agent.drain(timeout_s=1.0)

    # scoring
    t0 = time.monotonic()
    alert_entries = service.alerts_since(0)
    alerts = [alert for _, alert in alert_entries]
    true_alerts = 0
    for alert in alerts:
        matched = False
        for theft in thefts:
            if theft.product_id == alert.product_id and alert.created_at >= theft.timestamp:
                theft.detected = True
                matched = True
        if matched:
            true_alerts += 1
    detected = sum(1 for t in thefts if t.detected)
    misses = len(thefts) - detected
    decide_wall += time.monotonic() - t0

    events_emitted = sum(agent.stats.events_emitted for agent in agents.values())
    stats = service.stats()
    violations = []
    if log_dir:
        from .cloud import read_log

        violations = audit_conjunction(read_log(Path(log_dir) / "cloud.log.jsonl"))

    service.close()
    inventory.close()
    return RunReport(
        scenario_name=scenario.name,
        seed=scenario.seed,
        alerts=[a.to_dict() for a in alerts],
        true_positives=detected,
        false_positives=len(alerts) - true_alerts,
        misses=misses,
        precision=(true_alerts / len(alerts)) if alerts else 1.0,
        recall=(detected / len(thefts)) if thefts else 1.0,
        events_emitted=events_emitted,
        events_uncorroborated=stats["uncorroborated"],
        thefts_scripted=len(thefts),
        frames_processed=frames_processed,
        audit_violations=violations,
        wall_ms={
            "total": (time.monotonic() - started) * 1000,
            "frames": frame_wall * 1000,
            "scoring": decide_wall * 1000,
        },
    )


# -- canned scenarios --------------------------------------------------------


def _catalog_zone_a() -> tuple[ProductRecord, ...]:
    return (
        ProductRecord("sku-cola", "zone-a", "Cola 500ml", 30),
        ProductRecord("sku-chips", "zone-a", "Potato chips", 24),
    )


def builtin_scenario(name: str) -> Scenario:
    """The four canned end-to-end scripts used by the verification suite."""
    cameras = (CameraSpec("cam-1", "zone-a"),)
    if name == "clean-retail":
        return Scenario(
            name=name,
            seed=1101,
            duration_ticks=400,
            cameras=cameras,
            catalog=_catalog_zone_a(),
            customers=(
                Customer(
                    "cust-1",
                    "cam-1",
                    enter_tick=0,
                    exit_tick=399,
                    actions=(
                        CustomerAction(tick=120, kind="purchase", product_id="sku-cola", quantity=1),
                        CustomerAction(tick=260, kind="purchase", product_id="sku-chips", quantity=2),
                    ),
                ),
            ),
        )
    if name == "single-theft":
        return Scenario(
            name=name,
            seed=1102,
            duration_ticks=420,
            cameras=cameras,
            catalog=_catalog_zone_a(),
            pose_model="linear",
            customers=(
                Customer(
                    "cust-1",
                    "cam-1",
                    enter_tick=0,
                    exit_tick=419,
                    actions=(
                        CustomerAction(tick=130, kind="purchase", product_id="sku-cola", quantity=1),
                        CustomerAction(
                            tick=250,
                            kind="steal",
                            product_id="sku-chips",
                            quantity=2,
                            burst_ticks=30,
                        ),
                    ),
                ),
            ),
        )
    if name == "anomaly-without-theft":
        return Scenario(
            name=name,
            seed=1103,
            duration_ticks=400,
            cameras=cameras,
            catalog=_catalog_zone_a(),
            customers=(
                Customer(
                    "cust-1",
                    "cam-1",
                    enter_tick=0,
                    exit_tick=399,
                    actions=(CustomerAction(tick=240, kind="gesture", burst_ticks=30),),
                ),
            ),
        )
    if name == "theft-without-anomaly":
        # A palmed steal: stock drops, but the camera never sees anything odd.
        # The detector runs with a calmer threshold so stray noise events
        # cannot accidentally corroborate the deficit.
        return Scenario(
            name=name,
            seed=1104,
            duration_ticks=400,
            cameras=cameras,
            catalog=_catalog_zone_a(),
            lof=LofConfig(neighbor_count=8, threshold=2.5, window_capacity=160, warmup_min=48),
            customers=(
                Customer(
                    "cust-1",
                    "cam-1",
                    enter_tick=0,
                    exit_tick=399,
                    actions=(
                        CustomerAction(
                            tick=240,
                            kind="steal",
                            product_id="sku-cola",
                            quantity=3,
                            visible=False,
                        ),
                    ),
                ),
            ),
        )
    raise ValueError(f"unknown builtin scenario {name!r}")


BUILTIN_SCENARIOS = (
    "clean-retail",
    "single-theft",
    "anomaly-without-theft",
    "theft-without-anomaly",
)
