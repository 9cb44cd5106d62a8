"""Benchmark runs: build both replicas on a backend, reconcile, check ground truth."""
from __future__ import annotations

import csv
import io
import json
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

from .base import RSOSBase
from .btree import AggBTree
from .model import DEFAULT_CONFIG, RSOSError, SummaryConfig
from .paged import PagedStore
from .protocol import ProtocolParams, ReconcileOutcome, reconcile
from .reference import SortedListStore
from .scenario import Scenario, ScenarioSpec, generate_scenario

BACKENDS = ("ref", "btree", "paged", "btree+window", "paged+window")

COLUMNS = ("family", "i", "backend", "seed", "t_prep_ms", "t_rec_ms", "rounds", "messages", "bytes",
           "Q", "I", "K", "node_visits", "disk_bytes", "transcript_hash")
TIMING_COLUMNS = ("t_prep_ms", "t_rec_ms")


class GroundTruthMismatch(RSOSError):
    pass


@dataclass
class RunMetrics:
    family: str
    i: int
    backend: str
    seed: int
    t_prep_ms: float
    t_rec_ms: float
    rounds: int
    messages: int
    bytes: int
    Q: int
    I: int
    K: int
    node_visits: int
    disk_bytes: int
    transcript_hash: str

    def row(self) -> dict:
        return asdict(self)

    def stable(self) -> dict:
        """Every column except timings."""
        return {k: v for k, v in asdict(self).items() if k not in TIMING_COLUMNS}


def build_store(backend: str, keys: list[bytes], workdir: Optional[Path] = None, name: str = "x",
                cfg: SummaryConfig = DEFAULT_CONFIG, fanout: int = 16) -> RSOSBase:
    kind = backend.split("+")[0]
    if kind == "ref":
        return SortedListStore.from_sorted_raw(keys, cfg)
    if kind == "btree":
        return AggBTree.from_sorted_raw(keys, cfg, fanout=fanout)
    if kind == "paged":
        if workdir is None:
            raise ValueError("paged backend needs a working directory")
        store = PagedStore.create(Path(workdir) / f"{name}.db", cfg, sync=False)
        store.bulk_load_raw(keys)
        store.commit()
        return store
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def check_outcome(outcome: ReconcileOutcome, scenario: Scenario) -> None:
    if outcome.have_raw != scenario.planted_have or outcome.need_raw != scenario.planted_need:
        raise GroundTruthMismatch(
            f"{scenario.spec}: have {len(outcome.have_raw)}/{len(scenario.planted_have)}, "
            f"need {len(outcome.need_raw)}/{len(scenario.planted_need)} do not match the planted difference")


def run(backend: str, spec: ScenarioSpec, repeats: int = 10,
        params: ProtocolParams = ProtocolParams(), scenario: Optional[Scenario] = None) -> RunMetrics:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    scenario = scenario or generate_scenario(spec)
    windowed = backend.endswith("+window")
    with tempfile.TemporaryDirectory(prefix="rbsr-bench-") as tmp:
        t0 = time.perf_counter()
        x = build_store(backend, scenario.items_x, Path(tmp), "x")
        y = build_store(backend, scenario.items_y, Path(tmp), "y")
        t_prep = (time.perf_counter() - t0) * 1000
        try:
            disk = 0
            if isinstance(x, PagedStore):
                disk = x.disk_bytes() + y.disk_bytes()
            first: Optional[ReconcileOutcome] = None
            elapsed = 0.0
            for _ in range(repeats):
                t1 = time.perf_counter()
                outcome = reconcile(x, y, scenario.outer, params, window_x=windowed, window_y=windowed)
                elapsed += time.perf_counter() - t1
                check_outcome(outcome, scenario)
                if first is None:
                    first = outcome
                elif (outcome.transcript_hash, outcome.counters) != (first.transcript_hash, first.counters):
                    raise GroundTruthMismatch(f"{spec}: repeat produced a different transcript")
        finally:
            for store in (x, y):
                if isinstance(store, PagedStore):
                    store.close()
    assert first is not None
    c = first.counters
    return RunMetrics(
        family=spec.family, i=spec.i, backend=backend, seed=spec.seed,
        t_prep_ms=round(t_prep, 3), t_rec_ms=round(elapsed / repeats * 1000, 3),
        rounds=first.rounds, messages=first.messages, bytes=first.bytes_sent,
        Q=c["Q"], I=c["I"], K=c["K"], node_visits=c["visits_x"] + c["visits_y"],
        disk_bytes=disk, transcript_hash=first.transcript_hash.hex(),
    )


def render(metrics: Iterable[RunMetrics], fmt: str = "csv") -> str:
    rows = [m.row() for m in metrics]
    if not rows:
        raise ValueError("nothing to report")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def report(metrics: Iterable[RunMetrics], fmt: str = "csv", out: Optional[str] = None) -> str:
    text = render(metrics, fmt)
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    return text


REPORT_SCHEMA = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": list(COLUMNS),
        "additionalProperties": False,
        "properties": {
            "family": {"type": "string"},
            "i": {"type": "integer", "minimum": 1},
            "backend": {"enum": list(BACKENDS)},
            "seed": {"type": "integer", "minimum": 0},
            "t_prep_ms": {"type": "number", "minimum": 0},
            "t_rec_ms": {"type": "number", "minimum": 0},
            "rounds": {"type": "integer", "minimum": 0},
            "messages": {"type": "integer", "minimum": 0},
            "bytes": {"type": "integer", "minimum": 0},
            "Q": {"type": "integer", "minimum": 0},
            "I": {"type": "integer", "minimum": 0},
            "K": {"type": "integer", "minimum": 0},
            "node_visits": {"type": "integer", "minimum": 0},
            "disk_bytes": {"type": "integer", "minimum": 0},
            "transcript_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        },
    },
}
