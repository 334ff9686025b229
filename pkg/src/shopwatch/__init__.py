"""Edge-cloud retail loss prevention pipeline.

Landmark frames stream in at the store edge, get normalized into 136-dim
feature vectors, scored for anomaly against a sliding reference window, and
suspicious moments are shipped to a cloud decision service that cross-checks
the zone's live inventory before paging staff.
"""

from .model import (
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

__all__ = [
    "Alert",
    "AlertStatus",
    "FeatureVector",
    "LandmarkFrame",
    "PoseLabel",
    "ProductRecord",
    "ReconciliationResult",
    "SaleTransaction",
    "SchemaError",
    "ShelfObservation",
    "StaffFeedback",
    "SuspicionEvent",
    "deserialize",
    "serialize",
]

__version__ = "0.1.0"
