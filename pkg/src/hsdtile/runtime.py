"""Self-scheduling multi-worker executor plus wavefront and sequential baselines.

Concurrency contract of the self-scheduled path:

  * Virtual processors (VPs) are claimed through an indivisible fetch-and-advance
    over a precomputed lex-sorted VP list (a lock-guarded index, mirroring the
    claim-queue of the synchronization templates).
  * Each state entry has exactly one writer: the worker owning that VP.
  * State writes happen under the notification lock and wake all waiters;
    readers poll without the lock (safe under CPython's sequentially
    consistent dict operations) and must re-evaluate after every wakeup.
  * Waiting is bounded polling (spin_limit failed polls, 2 by default as in
    the synchronization templates) followed by suspension on a shared
    condition until any state change.

Tiles of one VP run in lexicographic local-time order; per tile the order is
obligations -> state checks -> kernel -> publish, with trace events recording
each step.  Obligations naming the same producer entry are merged to a single
check against the lexicographic maximum required time before polling: waiting
for the latest time subsumes the earlier ones on a monotone entry.
"""

from __future__ import annotations

import heapq
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .affine import ConstraintKind, enumerate_points, enumerate_union
from .errors import CycleDetected, HsdTileError, MonotonicityViolation
from .instrument import TileProgram
from .prdg import Prdg
from .trace import (
    ACQUIRE_BEGIN,
    ACQUIRE_END,
    CLAIM,
    TILE_BEGIN,
    TILE_END,
    UPDATE,
    ExecutionTrace,
    RunMetrics,
    RunResult,
    RunStatus,
)


@dataclass
class RunOptions:
    timeout: float = 60.0
    seed: int = 0
    jitter_ms: float = 0.0          # max uniform per-tile delay, for stress runs
    collect_trace: bool = True
    spin_limit: int = 2
    stall_first_vp_ms: float = 0.0  # fault-injection aid: delay the first VP's tiles
    drop_clauses: tuple = ()        # (node, clause_index) clauses to ignore


class RuntimeInstrumentationError(HsdTileError):
    """An obligation referenced a producer entry outside its state table."""


class _Aborted(Exception):
    pass


class _TimedOut(Exception):
    def __init__(self, blocked):
        super().__init__("timed out")
        self.blocked = blocked


class StateTable:
    """Per-node dense map: virtual processor -> last completed time tuple.

    Entries start at BOTTOM (None), which is lexicographically below every
    real time tuple.  Each entry has exactly one writer (the worker owning
    that VP), so publishing reads and writes its own entry without a lock; the
    per-entry condition is taken only to wake suspended waiters.  Published
    sequences are asserted strictly lexicographically increasing.
    """

    def __init__(self, domains: dict, time_dim: int):
        self.time_dim = time_dim
        self.tables = {name: {p: None for p in ps} for name, ps in domains.items()}
        self._slots = {name: {p: (threading.Condition(), [0]) for p in ps}
                       for name, ps in domains.items()}

    @property
    def entry_count(self) -> int:
        return sum(len(t) for t in self.tables.values()) * self.time_dim

    def snapshot(self):
        return {name: dict(table) for name, table in self.tables.items()}

    def wake_everyone(self):
        for per_node in self._slots.values():
            for cnd, waiters in per_node.values():
                if waiters[0]:
                    with cnd:
                        cnd.notify_all()

    def check(self, node: str, p, t, spin_limit: int, deadline: float,
              stop: threading.Event, consumer=None) -> int:
        """Block until entry(node, p) is lex >= t; returns failed-poll count."""
        table = self.tables.get(node)
        if table is None or p not in table:
            raise RuntimeInstrumentationError(
                f"obligation targets {node}{p}, outside its processor domain"
            )
        entry = table[p]
        if entry is not None and entry >= t:
            return 0
        spins = 1
        while spins <= spin_limit:
            if stop.is_set():
                raise _Aborted()
            entry = table[p]
            if entry is not None and entry >= t:
                return spins
            spins += 1
        cnd, waiters = self._slots[node][p]
        with cnd:
            waiters[0] += 1
            try:
                while True:
                    entry = table[p]
                    if entry is not None and entry >= t:
                        return spins
                    if stop.is_set():
                        raise _Aborted()
                    now = time.monotonic()
                    if now >= deadline:
                        raise _TimedOut((consumer, node, p, t, entry))
                    cnd.wait(min(0.05, deadline - now))
                    spins += 1
            finally:
                waiters[0] -= 1

    def publish(self, node: str, p, t):
        table = self.tables[node]
        old = table[p]
        if old is not None and not t > old:
            raise MonotonicityViolation(
                f"state[{node}][{p}]: {old} -> {t} is not increasing"
            )
        table[p] = t
        cnd, waiters = self._slots[node][p]
        if waiters[0]:
            with cnd:
                cnd.notify_all()


def _sparse_row(coef, const, is_eq):
    return (tuple((i, c) for i, c in enumerate(coef) if c), const, is_eq)


def _eval_rows(rows, z) -> bool:
    for terms, const, is_eq in rows:
        v = const
        for i, c in terms:
            v += c * z[i]
        if v != 0 if is_eq else v < 0:
            return False
    return True


def _sparse_map(lin, const):
    return tuple(
        (tuple((i, c) for i, c in enumerate(row) if c), k)
        for row, k in zip(lin, const)
    )


def _apply_sparse(rows, z):
    out = []
    for terms, k in rows:
        v = k
        for i, c in terms:
            v += c * z[i]
        out.append(v)
    return tuple(out)


class _Plan:
    """Concrete materialization of a TileProgram at fixed parameter values.

    Plans are read-only and cached across runs of the same program and sizes;
    two concurrent runs never share mutable state because all mutable run
    state (state tables, counters, traces) lives in run_hsd locals.
    """

    def __init__(self, tp: TileProgram, s: Sequence[int], drop_clauses: tuple):
        self.tp = tp
        self.s = tuple(s)
        k = tp.k
        self.node_names = [np.name for np in tp.nodes]
        tiles_by_vp: dict = {}
        self.state_domains: dict = {}
        node_rows = []
        for ni, np_ in enumerate(tp.nodes):
            pset = set()
            for z in enumerate_union(np_.domain, self.s):
                p, t = z[:k], z[k:]
                pset.add(p)
                tiles_by_vp.setdefault(p, []).append((t, ni))
            self.state_domains[np_.name] = pset
            node_rows.append({
                (r.coef, r.const, r.kind is ConstraintKind.EQ)
                for piece in np_.domain.pieces
                for r in piece.substitute_params(self.s).rows
            })
        self.vps = sorted(tiles_by_vp)
        self.tiles_by_vp = {}
        self.total_tiles = 0
        for p, tiles in tiles_by_vp.items():
            tiles.sort()
            self.tiles_by_vp[p] = [
                (t, ni, tp.nodes[ni].to_tile.apply(p + t, self.s)) for t, ni in tiles
            ]
            self.total_tiles += len(tiles)
        # Clause evaluators: parameters folded into constants, rows already
        # implied by the node domain pruned, everything in sparse form.
        self.clauses = []
        for ni, np_ in enumerate(tp.nodes):
            entries = []
            for ci, clause in enumerate(np_.clauses):
                if (np_.name, ci) in drop_clauses:
                    continue
                dom = clause.domain.substitute_params(self.s)
                rows = tuple(
                    _sparse_row(r.coef, r.const, r.kind is ConstraintKind.EQ)
                    for r in dom.rows
                    if (r.coef, r.const, r.kind is ConstraintKind.EQ) not in node_rows[ni]
                )
                targets = []
                for tgt in clause.targets:
                    sm, tm = tgt.space_map, tgt.time_map
                    sconst = tuple(
                        sm.const[i] + sum(c * v for c, v in zip(sm.param[i], self.s))
                        for i in range(sm.out_dim)
                    )
                    tconst = tuple(
                        tm.const[i] + sum(c * v for c, v in zip(tm.param[i], self.s))
                        for i in range(tm.out_dim)
                    )
                    targets.append((tgt.producer, _sparse_map(sm.linear, sconst),
                                    _sparse_map(tm.linear, tconst), tgt.provenance))
                entries.append((rows, tuple(targets)))
            self.clauses.append(tuple(entries))

    @property
    def state_entry_count(self) -> int:
        tdim = self.tp.n - self.tp.k
        return sum(len(ps) * tdim for ps in self.state_domains.values())


_plan_cache: dict = {}


def _plan_for(tp: TileProgram, s: Sequence[int], drop_clauses: tuple) -> _Plan:
    key = (tp, tuple(s), tuple(drop_clauses))
    plan = _plan_cache.get(key)
    if plan is None:
        if len(_plan_cache) > 32:
            _plan_cache.clear()
        plan = _Plan(tp, s, tuple(drop_clauses))
        _plan_cache[key] = plan
    return plan


def run_hsd(tp: TileProgram, kernels, s: Sequence[int], workers: int = 1,
            opts: Optional[RunOptions] = None) -> RunResult:
    """Execute a tile program with self-scheduling workers.

    Precondition: the program came from a schedule that passed the legality and
    deadlock checks (or the caller explicitly accepts a possible Timeout).
    Kernel outputs are deterministic for any worker count.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    opts = opts or RunOptions()
    plan = _plan_for(tp, s, tuple(opts.drop_clauses))
    state = StateTable(plan.state_domains, tp.n - tp.k)
    trace = ExecutionTrace(tp.k) if opts.collect_trace else None
    events = trace.events if trace is not None else None
    kernel_state = kernels.fresh_state()

    claim_lock = threading.Lock()
    stop = threading.Event()
    next_vp = [0]
    deadline = time.monotonic() + opts.timeout
    blocked: list = []
    errors: list = []
    counters = [[0, 0, 0, 0] for _ in range(workers)]  # claims, checks, syncs, spins
    done_tiles = [0] * workers
    spin_limit = opts.spin_limit

    def worker_fn(wid):
        rng = random.Random(opts.seed * 1000003 + wid) if opts.jitter_ms else None
        c = counters[wid]
        try:
            while not stop.is_set():
                with claim_lock:
                    i = next_vp[0]
                    next_vp[0] += 1
                if i >= len(plan.vps):
                    return
                p = plan.vps[i]
                c[0] += 1
                if events is not None:
                    events.append((wid, "", p, (), CLAIM, 0))
                stall = opts.stall_first_vp_ms if i == 0 else 0.0
                for t, ni, z_tile in plan.tiles_by_vp[p]:
                    if stop.is_set():
                        return
                    node_name = plan.node_names[ni]
                    z = p + t
                    obligations = []
                    for rows, targets in plan.clauses[ni]:
                        if _eval_rows(rows, z):
                            for prod, srows, trows, prov in targets:
                                obligations.append((
                                    prod,
                                    _apply_sparse(srows, z),
                                    _apply_sparse(trows, z),
                                ))
                    c[1] += len(obligations)
                    if events is not None:
                        events.append((wid, node_name, p, t, ACQUIRE_BEGIN, 0))
                    spins = 0
                    if obligations:
                        merged = {}
                        for prod, pp, tt in obligations:
                            key = (prod, pp)
                            cur = merged.get(key)
                            if cur is None or tt > cur:
                                merged[key] = tt
                        for (prod, pp), tt in merged.items():
                            c[2] += 1
                            spins += state.check(prod, pp, tt, spin_limit,
                                                 deadline, stop, (node_name, p, t))
                    c[3] += spins
                    if events is not None:
                        events.append((wid, node_name, p, t, ACQUIRE_END, spins))
                        events.append((wid, node_name, p, t, TILE_BEGIN, 0))
                    kernels.execute(kernel_state, node_name, z_tile)
                    if stall:
                        time.sleep(stall / 1000.0)
                    if rng is not None:
                        time.sleep(rng.uniform(0.0, opts.jitter_ms / 1000.0))
                    if events is not None:
                        events.append((wid, node_name, p, t, TILE_END, 0))
                    state.publish(node_name, p, t)
                    if events is not None:
                        events.append((wid, node_name, p, t, UPDATE, 0))
                    done_tiles[wid] += 1
        except _Aborted:
            pass
        except _TimedOut as e:
            blocked.append(e.blocked)
            stop.set()
            state.wake_everyone()
        except Exception as e:  # kernel failure or internal assertion
            errors.append(f"worker {wid}: {type(e).__name__}: {e}")
            stop.set()
            state.wake_everyone()

    start = time.monotonic()
    threads = [threading.Thread(target=worker_fn, args=(w,), daemon=True)
               for w in range(workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=opts.timeout + 10.0)
    wall = time.monotonic() - start
    alive = [th for th in threads if th.is_alive()]
    if alive:
        stop.set()
        errors.append(f"{len(alive)} worker(s) failed to stop")

    metrics = RunMetrics(
        tasks_spawned=sum(c[0] for c in counters),
        checks_executed=sum(c[1] for c in counters),
        sync_checks=sum(c[2] for c in counters),
        total_spins=sum(c[3] for c in counters),
        state_entries=state.entry_count,
        barriers=0,
        wall_time=wall,
    )
    executed = sum(done_tiles)
    diagnostics = []
    if errors:
        status = RunStatus.ERROR
        diagnostics.extend(errors)
    elif blocked or executed < plan.total_tiles:
        status = RunStatus.TIMEOUT
        for consumer, node_name, pp, tt, entry in blocked:
            diagnostics.append(
                f"tile {consumer[0]}{consumer[1] + consumer[2]} blocked on "
                f"State_{node_name}[{pp}] >= {tt}; entry was {entry}"
            )
        diagnostics.append(f"executed {executed} of {plan.total_tiles} tiles")
        for name, table in state.snapshot().items():
            published = {p: t for p, t in table.items() if t is not None}
            diagnostics.append(f"state table {name}: {len(published)} of "
                               f"{len(table)} entries published")
    else:
        status = RunStatus.COMPLETED
    outputs = kernels.outputs(kernel_state) if status is RunStatus.COMPLETED else {}
    return RunResult(status, outputs, trace, metrics, seed=opts.seed,
                     diagnostics=diagnostics, error=errors[0] if errors else None)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def _graph_tiles(g: Prdg, s):
    tiles = []
    for node in g.nodes:
        if node.is_input:
            continue
        for z in enumerate_union(node.domain, s):
            tiles.append((node.name, z))
    return tiles


def default_wavefront(z: Sequence[int]) -> int:
    return sum(z)


def validate_wavefront(g: Prdg, s, w: Callable) -> Optional[tuple]:
    """First dependence instance whose wavefront value does not strictly drop."""
    for edge, idx, pair in g.compute_pairs():
        for z in enumerate_points(pair.domain, s):
            tgt = pair.map.apply(z, s)
            if w(z) <= w(tgt):
                return (edge.name, idx, z, tgt)
    return None


def run_wavefront(g: Prdg, kernels, s: Sequence[int], workers: int = 1,
                  opts: Optional[RunOptions] = None,
                  wavefront: Optional[Callable] = None) -> RunResult:
    """Barrier-synchronized baseline: one task per tile, grouped by wavefront.

    All tiles of wave w complete before any tile of wave w+1 starts;
    metrics.barriers counts the distinct wavefront values.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    opts = opts or RunOptions()
    sval = tuple(s)
    w = wavefront or default_wavefront
    bad = validate_wavefront(g, sval, w)
    if bad is not None:
        raise HsdTileError(
            f"invalid wavefront function: dependence {bad[0]}[{bad[1]}] at "
            f"{bad[2]} -> {bad[3]} does not strictly decrease"
        )
    tiles = _graph_tiles(g, sval)
    waves_map: dict = {}
    for name, z in tiles:
        waves_map.setdefault(w(z), []).append((name, z))
    waves = [sorted(waves_map[key]) for key in sorted(waves_map)]
    trace = ExecutionTrace(0) if opts.collect_trace else None
    events = trace.events if trace is not None else None
    kernel_state = kernels.fresh_state()
    errors: list = []
    stop = threading.Event()
    claim_lock = threading.Lock()
    barrier = threading.Barrier(workers)
    wave_idx = [0]
    tile_idx = [0]

    def worker_fn(wid):
        rng = random.Random(opts.seed * 1000003 + wid) if opts.jitter_ms else None
        try:
            for wave in waves:
                while not stop.is_set():
                    with claim_lock:
                        i = tile_idx[0]
                        tile_idx[0] += 1
                    if i >= len(wave):
                        break
                    name, z = wave[i]
                    if events is not None:
                        events.append((wid, name, (), z, TILE_BEGIN, 0))
                    kernels.execute(kernel_state, name, z)
                    if rng is not None:
                        time.sleep(rng.uniform(0.0, opts.jitter_ms / 1000.0))
                    if events is not None:
                        events.append((wid, name, (), z, TILE_END, 0))
                i = barrier.wait()
                if i == 0:
                    tile_idx[0] = 0
                barrier.wait()
                if stop.is_set():
                    return
        except threading.BrokenBarrierError:
            pass
        except Exception as e:
            errors.append(f"worker {wid}: {type(e).__name__}: {e}")
            stop.set()
            barrier.abort()

    start = time.monotonic()
    threads = [threading.Thread(target=worker_fn, args=(w_,), daemon=True)
               for w_ in range(workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=opts.timeout + 10.0)
    wall = time.monotonic() - start

    metrics = RunMetrics(
        tasks_spawned=len(tiles),
        barriers=len(waves),
        state_entries=0,
        wall_time=wall,
    )
    if errors or any(th.is_alive() for th in threads):
        return RunResult(RunStatus.ERROR, {}, trace, metrics, seed=opts.seed,
                         diagnostics=errors, error=errors[0] if errors else "hung")
    return RunResult(RunStatus.COMPLETED, kernels.outputs(kernel_state), trace,
                     metrics, seed=opts.seed)


def run_sequential(g: Prdg, kernels, s: Sequence[int],
                   opts: Optional[RunOptions] = None) -> RunResult:
    """Ground-truth oracle: single worker, any topological order (lex-min heap).

    Raises CycleDetected (with a witness cycle) if the tile dependence graph
    is cyclic.
    """
    opts = opts or RunOptions()
    sval = tuple(s)
    tiles = _graph_tiles(g, sval)
    tile_set = set(tiles)
    preds: dict = {t: 0 for t in tiles}
    succs: dict = {}
    for edge, idx, pair in g.compute_pairs():
        for z in enumerate_points(pair.domain, sval):
            consumer = (pair.src, z)
            producer = (pair.dst, pair.map.apply(z, sval))
            if producer not in tile_set or consumer not in tile_set:
                continue
            preds[consumer] += 1
            succs.setdefault(producer, []).append(consumer)
    ready = [t for t in tiles if preds[t] == 0]
    heapq.heapify(ready)
    trace = ExecutionTrace(0) if opts.collect_trace else None
    events = trace.events if trace is not None else None
    kernel_state = kernels.fresh_state()
    start = time.monotonic()
    executed = 0
    while ready:
        name, z = heapq.heappop(ready)
        if events is not None:
            events.append((0, name, (), z, TILE_BEGIN, 0))
        kernels.execute(kernel_state, name, z)
        if events is not None:
            events.append((0, name, (), z, TILE_END, 0))
        executed += 1
        for nxt in succs.get((name, z), ()):
            preds[nxt] -= 1
            if preds[nxt] == 0:
                heapq.heappush(ready, nxt)
    if executed < len(tiles):
        cycle = _find_cycle({t for t in tiles if preds[t] > 0}, succs)
        raise CycleDetected(
            f"tile dependence graph has a cycle: {' -> '.join(map(str, cycle))}",
            cycle=cycle,
        )
    wall = time.monotonic() - start
    metrics = RunMetrics(tasks_spawned=len(tiles), wall_time=wall)
    return RunResult(RunStatus.COMPLETED, kernels.outputs(kernel_state), trace,
                     metrics, seed=opts.seed)


def _find_cycle(remaining, succs):
    remaining = set(remaining)
    seen: dict = {}
    for start_node in sorted(remaining):
        path = []
        on_path: dict = {}
        node = start_node
        stack = [(node, iter(succs.get(node, ())))]
        on_path[node] = 0
        path.append(node)
        while stack:
            cur, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt not in remaining:
                    continue
                if nxt in on_path:
                    return path[on_path[nxt]:] + [nxt]
                if nxt in seen:
                    continue
                on_path[nxt] = len(path)
                path.append(nxt)
                stack.append((nxt, iter(succs.get(nxt, ()))))
                advanced = True
                break
            if not advanced:
                seen[cur] = True
                on_path.pop(cur, None)
                path.pop()
                stack.pop()
    return []
