"""Execution traces, run metrics, results, and the happens-before verifier."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .affine import enumerate_points
from .prdg import Prdg

# Event kinds, in the per-tile order they must appear.
CLAIM = "claim"
ACQUIRE_BEGIN = "acquire_begin"
ACQUIRE_END = "acquire_end"
TILE_BEGIN = "tile_begin"
TILE_END = "tile_end"
UPDATE = "update"

_TILE_ORDER = (ACQUIRE_BEGIN, ACQUIRE_END, TILE_BEGIN, TILE_END, UPDATE)


@dataclass
class ExecutionTrace:
    """Append-only event list; sequence number is the list position.

    Events are tuples (worker, node, p, t, kind, extra); ``extra`` carries the
    spin count on acquire_end events and is 0 elsewhere.  For runs without a
    space/time split (sequential, wavefront) p is empty and t is the tile
    index.  Appends rely on list.append being atomic; the append order is the
    global sequence.
    """

    k: int
    events: list = field(default_factory=list)

    def append(self, worker, node, p, t, kind, extra=0):
        self.events.append((worker, node, p, t, kind, extra))

    def __len__(self):
        return len(self.events)

    def index(self):
        """(node, p + t) -> {kind: seq} (first occurrence wins)."""
        out = {}
        for seq, (worker, node, p, t, kind, extra) in enumerate(self.events):
            key = (node, p + t)
            slot = out.setdefault(key, {})
            if kind not in slot:
                slot[kind] = seq
        return out

    def to_csv_rows(self):
        header_p = max((len(e[2]) for e in self.events), default=0)
        header_t = max((len(e[3]) for e in self.events), default=0)
        header = (["seq", "worker", "node"]
                  + [f"p{i}" for i in range(header_p)]
                  + [f"t{i}" for i in range(header_t)]
                  + ["kind", "spins"])
        yield header
        for seq, (worker, node, p, t, kind, extra) in enumerate(self.events):
            row = [seq, worker, node]
            row += list(p) + [""] * (header_p - len(p))
            row += list(t) + [""] * (header_t - len(t))
            row += [kind, extra]
            yield row

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            for row in self.to_csv_rows():
                w.writerow(row)


def trace_from_csv(path, k: int) -> ExecutionTrace:
    trace = ExecutionTrace(k)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        p_cols = [i for i, h in enumerate(header) if h.startswith("p") and h[1:].isdigit()]
        t_cols = [i for i, h in enumerate(header) if h.startswith("t") and h[1:].isdigit()]
        kind_col = header.index("kind")
        node_col = header.index("node")
        worker_col = header.index("worker")
        spin_col = header.index("spins")
        for row in reader:
            p = tuple(int(row[i]) for i in p_cols if row[i] != "")
            t = tuple(int(row[i]) for i in t_cols if row[i] != "")
            trace.append(int(row[worker_col]), row[node_col], p, t,
                         row[kind_col], int(row[spin_col] or 0))
    return trace


@dataclass
class RunMetrics:
    tasks_spawned: int = 0
    checks_executed: int = 0
    sync_checks: int = 0        # deduplicated producer-entry waits actually polled
    total_spins: int = 0
    state_entries: int = 0
    barriers: int = 0
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "tasks_spawned": self.tasks_spawned,
            "checks_executed": self.checks_executed,
            "sync_checks": self.sync_checks,
            "total_spins": self.total_spins,
            "state_entries": self.state_entries,
            "barriers": self.barriers,
            "wall_time": self.wall_time,
        }


class RunStatus(Enum):
    COMPLETED = "completed"
    TIMEOUT = "timeout"
    ERROR = "error"


@dataclass
class RunResult:
    status: RunStatus
    outputs: dict
    trace: Optional[ExecutionTrace]
    metrics: RunMetrics
    seed: int = 0
    diagnostics: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def completed(self) -> bool:
        return self.status is RunStatus.COMPLETED


@dataclass(frozen=True)
class TraceViolation:
    consumer: tuple  # (node, coords)
    producer: tuple
    consumer_begin: Optional[int]
    producer_end: Optional[int]
    detail: str


@dataclass
class TraceReport:
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return (f"{self.checked} dependence instances checked, "
                f"{len(self.violations)} violation(s)")


def dependence_instances(g: Prdg, s: Sequence[int]):
    """All non-input dependence instances of g: list of ((src, z), (dst, f(z))).

    Precompute once per graph/size and reuse across repeated verifications.
    """
    out = []
    sval = tuple(s)
    for edge, idx, pair in g.compute_pairs():
        for z in enumerate_points(pair.domain, sval):
            out.append(((pair.src, z), (pair.dst, pair.map.apply(z, sval))))
    return out


def verify_trace(trace: ExecutionTrace, g: Prdg, s: Sequence[int],
                 deps=None) -> TraceReport:
    """Check producer tile_end happens before consumer tile_begin for every
    dependence instance of g.

    The graph must be expressed in the same coordinates the trace was recorded
    in (the space-time graph for self-scheduled runs, the tile graph for
    sequential and wavefront runs).
    """
    report = TraceReport()
    begins: dict = {}
    ends: dict = {}
    for seq, (worker, node, p, t, kind, extra) in enumerate(trace.events):
        if kind == TILE_BEGIN:
            begins.setdefault((node, p + t), seq)
        elif kind == TILE_END:
            ends.setdefault((node, p + t), seq)
    if deps is None:
        deps = dependence_instances(g, s)
    bget, eget = begins.get, ends.get
    for consumer, producer in deps:
        report.checked += 1
        cbeg = bget(consumer)
        pend = eget(producer)
        if cbeg is None or pend is None:
            report.violations.append(TraceViolation(
                consumer, producer, cbeg, pend,
                "missing tile_begin/tile_end event",
            ))
        elif pend >= cbeg:
            report.violations.append(TraceViolation(
                consumer, producer, cbeg, pend,
                f"producer finished at seq {pend}, consumer began at seq {cbeg}",
            ))
    return report


def check_tile_event_order(trace: ExecutionTrace) -> list:
    """Per-tile event ordering must follow acquire -> tile -> update."""
    bad = []
    for key, kinds in trace.index().items():
        seqs = [kinds[k] for k in _TILE_ORDER if k in kinds]
        if seqs != sorted(seqs):
            bad.append(key)
    return bad
