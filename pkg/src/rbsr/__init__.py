"""Range-based set reconciliation over range-summarizable ordered sets."""
from .btree import AggBTree
from .model import (
    DEFAULT_CONFIG,
    MINUS_INF,
    PLUS_INF,
    Aggregate,
    Bound,
    HalfOpenRange,
    ItemKey,
    PreconditionError,
    RSOSError,
    SummaryConfig,
    decode_key,
    encode_key,
    fingerprint_of_aggregate,
)
from .paged import CorruptFileError, PagedStore, SimulatedCrash, Snapshot, StoreError, verify_file
from .protocol import ProtocolError, ProtocolParams, ReconcileOutcome, reconcile
from .reference import SortedListStore
from .window import StaleWindowError, WindowHandle, window_open

__version__ = "0.1.0"

__all__ = [
    "AggBTree", "Aggregate", "Bound", "CorruptFileError", "DEFAULT_CONFIG", "HalfOpenRange",
    "ItemKey", "MINUS_INF", "PLUS_INF", "PagedStore", "PreconditionError", "ProtocolError",
    "ProtocolParams", "RSOSError", "ReconcileOutcome", "SimulatedCrash", "Snapshot",
    "SortedListStore", "StaleWindowError", "StoreError", "SummaryConfig", "WindowHandle",
    "decode_key", "encode_key", "fingerprint_of_aggregate", "reconcile", "verify_file",
    "window_open",
]
