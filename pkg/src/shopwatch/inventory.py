"""Product database: live sales application, shelf observations, and
expected-vs-observed reconciliation.

State lives in memory behind a lock; every accepted mutation is appended to a
write-ahead JSONL log first, so a store can be rebuilt by replaying the log.
Reconciliation only trusts observations younger than the staleness bound, and
a surplus (observed above expected, e.g. an unbooked restock) is never a
mismatch.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Iterable, Optional

from .model import ProductRecord, ReconciliationResult, SaleTransaction, ShelfObservation

DEFAULT_STALENESS_MS = 60_000


class UnknownProductError(KeyError):
    pass


class OversellError(ValueError):
    pass


class UnknownPairingError(KeyError):
    pass


class StaleObservationError(ValueError):
    pass


class InventoryUnavailable(ConnectionError):
    """Raised by remote inventory clients when the backing service is down."""


def now_ms() -> int:
    return int(time.time() * 1000)


class InventoryStore:
    """In-memory product table with an optional write-ahead log."""

    def __init__(self, staleness_ms: int = DEFAULT_STALENESS_MS, log_path: str | Path | None = None):
        self.staleness_ms = staleness_ms
        self._lock = threading.RLock()
        self._products: dict[str, ProductRecord] = {}
        self._applied_tx: set[str] = set()
        self._latest_obs: dict[tuple[str, str], ShelfObservation] = {}
        self._audit: list[dict] = []
        self._log_path = Path(log_path) if log_path else None
        self._log_fh = None
        if self._log_path and self._log_path.exists():
            self._replay_log()
        if self._log_path:
            self._log_fh = open(self._log_path, "a", encoding="utf-8")

    # -- persistence -------------------------------------------------------

    def _append_log(self, record: dict) -> None:
        self._audit.append(record)
        if self._log_fh:
            self._log_fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._log_fh.flush()

    def _replay_log(self) -> None:
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._apply_record(record)
                self._audit.append(record)

    def _apply_record(self, record: dict) -> None:
        kind = record["op"]
        if kind == "catalog":
            product = ProductRecord.from_dict(record["product"])
            self._products[product.product_id] = product
        elif kind == "sale":
            tx = SaleTransaction.from_dict(record["tx"])
            current = self._products[tx.product_id]
            self._products[tx.product_id] = ProductRecord(
                product_id=current.product_id,
                zone_id=current.zone_id,
                display_name=current.display_name,
                expected_count=current.expected_count - tx.quantity,
            )
            self._applied_tx.add(tx.tx_id)
        elif kind == "observation":
            obs = ShelfObservation.from_dict(record["obs"])
            key = (obs.zone_id, obs.product_id)
            latest = self._latest_obs.get(key)
            if latest is None or obs.timestamp >= latest.timestamp:
                self._latest_obs[key] = obs

    def close(self) -> None:
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    # -- catalog -----------------------------------------------------------

    def load_catalog(self, records: Iterable[ProductRecord]) -> None:
        with self._lock:
            for record in records:
                self._products[record.product_id] = record
                self._append_log({"op": "catalog", "product": record.to_dict()})

    def load_catalog_file(self, path: str | Path) -> None:
        obj = json.loads(Path(path).read_text())
        items = obj["products"] if isinstance(obj, dict) else obj
        self.load_catalog(ProductRecord.from_dict(item) for item in items)

    def get_product(self, product_id: str) -> ProductRecord:
        with self._lock:
            if product_id not in self._products:
                raise UnknownProductError(product_id)
            return self._products[product_id]

    def products_in_zone(self, zone_id: str) -> list[ProductRecord]:
        with self._lock:
            return [p for p in self._products.values() if p.zone_id == zone_id]

    def product_ids(self) -> list[str]:
        with self._lock:
            return list(self._products)

    # -- writes ------------------------------------------------------------

    def apply_sale(self, tx: SaleTransaction) -> ProductRecord:
        """Atomically decrement expected stock; replaying a tx_id is a no-op."""
        with self._lock:
            if tx.product_id not in self._products:
                raise UnknownProductError(tx.product_id)
            current = self._products[tx.product_id]
            if tx.tx_id in self._applied_tx:
                return current
            if tx.quantity > current.expected_count:
                raise OversellError(
                    f"sale of {tx.quantity} exceeds expected stock "
                    f"{current.expected_count} for {tx.product_id}"
                )
            updated = ProductRecord(
                product_id=current.product_id,
                zone_id=current.zone_id,
                display_name=current.display_name,
                expected_count=current.expected_count - tx.quantity,
            )
            self._append_log({"op": "sale", "tx": tx.to_dict()})
            self._products[tx.product_id] = updated
            self._applied_tx.add(tx.tx_id)
            return updated

    def record_observation(self, obs: ShelfObservation) -> None:
        """Keep the newest observation per (zone, product) by timestamp."""
        with self._lock:
            product = self._products.get(obs.product_id)
            if product is None or product.zone_id != obs.zone_id:
                raise UnknownPairingError(f"({obs.zone_id}, {obs.product_id})")
            self._append_log({"op": "observation", "obs": obs.to_dict()})
            key = (obs.zone_id, obs.product_id)
            latest = self._latest_obs.get(key)
            if latest is None or obs.timestamp >= latest.timestamp:
                self._latest_obs[key] = obs

    # -- reads -------------------------------------------------------------

    def latest_observation(self, product_id: str) -> Optional[ShelfObservation]:
        with self._lock:
            product = self._products.get(product_id)
            if product is None:
                raise UnknownProductError(product_id)
            return self._latest_obs.get((product.zone_id, product_id))

    def reconcile(self, product_id: str, now: Optional[int] = None) -> ReconciliationResult:
        """Compare current expected stock against the latest fresh observation.

        ``now`` defaults to the wall clock; harnesses pass event time so the
        staleness bound is deterministic.
        """
        with self._lock:
            product = self.get_product(product_id)
            obs = self._latest_obs.get((product.zone_id, product_id))
            if obs is None:
                raise StaleObservationError(f"no observation for {product_id}")
            reference = now_ms() if now is None else now
            if reference - obs.timestamp > self.staleness_ms:
                raise StaleObservationError(
                    f"latest observation for {product_id} is "
                    f"{reference - obs.timestamp} ms old (bound {self.staleness_ms} ms)"
                )
            shortfall = product.expected_count - obs.observed_count
            return ReconciliationResult(
                product_id=product_id,
                expected_count=product.expected_count,
                observed_count=obs.observed_count,
                mismatch=shortfall > 0,
                deficit=max(0, shortfall),
            )

    def audit_log(self) -> list[dict]:
        with self._lock:
            return list(self._audit)
