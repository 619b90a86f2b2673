"""Counter validation: measured runtime metrics against enumerated ground truth
and the expected per-benchmark overhead characteristics.

Two independent routes meet here.  The ground-truth side enumerates residual
instances straight from the residual graph (never touching the instrumented
program): per consumer tile it counts distinct producer state entries, which
is what one synchronization check costs at run time, and per virtual processor
it counts owned tiles.  The measured side runs the actual executor and reads
its counters.  The report compares both, instantiates the closed-form
tiles-per-task expressions where one exists, and fits growth degrees over a
size sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .affine import enumerate_points, enumerate_union
from .instrument import compile_program
from .kernels import BENCHMARKS, _data_text, load_fixture_prdg
from .residual import residualize
from .runtime import RunOptions, run_hsd, run_wavefront
from .schedule import parse_schedule


def enumerated_check_counts(g, sch, s) -> dict:
    """Per consumer tile: number of distinct producer state entries it must
    poll (obligations merged per producer VP).  Computed from the residual
    graph only."""
    r = residualize(g, sch, s)
    counts: dict = {}
    for edge in r.graph.edges:
        for pair in edge.pairs:
            prod_vp = sch.space_map(pair.dst).compose(pair.map)
            for z in enumerate_points(pair.domain, s):
                key = (pair.src, z)
                counts.setdefault(key, set()).add((pair.dst, prod_vp.apply(z, s)))
    return {k: len(v) for k, v in counts.items()}


def enumerated_obligation_total(g, sch, s) -> int:
    """Total residual obligations (pre-merge), from the residual graph."""
    r = residualize(g, sch, s)
    return sum(
        sum(1 for _ in enumerate_points(pair.domain, s))
        for edge in r.graph.edges for pair in edge.pairs
    )


def enumerated_tiles_per_vp(g, sch, s) -> dict:
    """Virtual processor -> owned tile count, from node domains and the
    schedule's processor part."""
    out: dict = {}
    for node in g.nodes:
        if node.is_input:
            continue
        sm = sch.space_map(node.name)
        for z in enumerate_union(node.domain, s):
            vp = sm.apply(z, s)
            out[vp] = out.get(vp, 0) + 1
    return out


def _slope(xs, ys) -> Optional[float]:
    pts = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < 2:
        return None
    n = len(pts)
    mx = sum(p[0] for p in pts) / n
    my = sum(p[1] for p in pts) / n
    denom = sum((p[0] - mx) ** 2 for p in pts)
    if denom == 0:
        return None
    return sum((p[0] - mx) * (p[1] - my) for p in pts) / denom


@dataclass
class FormulaReport:
    benchmark: str
    mapping: int
    params: dict
    checks_interior_measured: int = 0
    checks_interior_table: Optional[int] = None
    checks_total_measured: int = 0
    checks_total_enumerated: int = 0
    obligations_measured: int = 0
    obligations_enumerated: int = 0
    tiles_per_task_enumerated: dict = field(default_factory=dict)
    tiles_per_task_measured_tasks: int = 0
    tiles_per_task_formula_value: Optional[int] = None
    tiles_per_task_formula: str = ""
    sweep: list = field(default_factory=list)
    slope_tasks_ratio: Optional[float] = None
    slope_tiles_per_task: Optional[float] = None
    state_entry_ratios: list = field(default_factory=list)

    @property
    def checks_match_table(self) -> Optional[bool]:
        if self.checks_interior_table is None:
            return None
        return self.checks_interior_measured == self.checks_interior_table

    @property
    def ok(self) -> bool:
        if self.checks_match_table is False:
            return False
        if self.checks_total_measured != self.checks_total_enumerated:
            return False
        if self.obligations_measured != self.obligations_enumerated:
            return False
        if self.tiles_per_task_formula_value is not None:
            counts = set(self.tiles_per_task_enumerated.values())
            if counts != {self.tiles_per_task_formula_value}:
                return False
        if self.tiles_per_task_measured_tasks != len(self.tiles_per_task_enumerated):
            return False
        return True

    def to_dict(self):
        return {
            "benchmark": self.benchmark,
            "mapping": self.mapping,
            "params": self.params,
            "checks_per_interior_tile": {
                "measured": self.checks_interior_measured,
                "table": self.checks_interior_table,
                "match": self.checks_match_table,
            },
            "checks_total": {
                "measured": self.checks_total_measured,
                "enumerated": self.checks_total_enumerated,
            },
            "obligations": {
                "measured": self.obligations_measured,
                "enumerated": self.obligations_enumerated,
            },
            "tiles_per_task": {
                "tasks": self.tiles_per_task_measured_tasks,
                "formula": self.tiles_per_task_formula,
                "formula_value": self.tiles_per_task_formula_value,
                "min": min(self.tiles_per_task_enumerated.values(), default=0),
                "max": max(self.tiles_per_task_enumerated.values(), default=0),
            },
            "sweep": self.sweep,
            "slope_tasks_ratio": self.slope_tasks_ratio,
            "slope_tiles_per_task": self.slope_tiles_per_task,
            "state_entry_ratios": self.state_entry_ratios,
            "ok": self.ok,
        }


def metrics_against_formulas(bench_id: str, mapping_id: int,
                             params: Optional[dict] = None,
                             sweep_factors=(1, 2, 4),
                             workers: int = 2) -> FormulaReport:
    """Run the benchmark, compare its counters against enumerated ground truth,
    and fit growth degrees over a size sweep."""
    bench = BENCHMARKS[bench_id]
    mapping = bench.mappings[mapping_id]
    g = load_fixture_prdg(bench.prdg_file)
    sch = parse_schedule(_data_text(mapping.schedule_file), g)
    params = dict(params or bench.sweep_params(1))
    s = g.bind_params(params)

    report = FormulaReport(bench_id, mapping_id, params)
    check_counts = enumerated_check_counts(g, sch, s)
    report.checks_interior_measured = max(check_counts.values(), default=0)
    report.checks_interior_table = mapping.checks_interior
    report.checks_total_enumerated = sum(check_counts.values())
    report.obligations_enumerated = enumerated_obligation_total(g, sch, s)
    tiles_per_vp = enumerated_tiles_per_vp(g, sch, s)
    report.tiles_per_task_enumerated = tiles_per_vp
    if mapping.tiles_per_task is not None:
        report.tiles_per_task_formula_value = mapping.tiles_per_task(params)
    report.tiles_per_task_formula = mapping.tiles_formula

    tp, stg, _ = compile_program(g, sch, s)
    res = run_hsd(tp, bench.make_kernel(params), s, workers=workers)
    report.checks_total_measured = res.metrics.sync_checks
    report.obligations_measured = res.metrics.checks_executed
    report.tiles_per_task_measured_tasks = res.metrics.tasks_spawned

    xs, ratios = [], []
    prev_entries = None
    for f in sweep_factors:
        sp = bench.sweep_params(f)
        sv = g.bind_params(sp)
        tpf, _, _ = compile_program(g, sch, sv)
        hsd = run_hsd(tpf, bench.make_kernel(sp), sv, workers=workers,
                      opts=RunOptions(collect_trace=False))
        wave = run_wavefront(g, bench.make_kernel(sp), sv, workers=workers,
                             opts=RunOptions(collect_trace=False),
                             wavefront=bench.wavefront)
        entry = {
            "factor": f,
            "params": sp,
            "tasks_hsd": hsd.metrics.tasks_spawned,
            "tasks_wavefront": wave.metrics.tasks_spawned,
            "state_entries": hsd.metrics.state_entries,
            "barriers": wave.metrics.barriers,
            "sync_checks": hsd.metrics.sync_checks,
        }
        report.sweep.append(entry)
        xs.append(f)
        ratios.append(wave.metrics.tasks_spawned / hsd.metrics.tasks_spawned)
        if prev_entries is not None:
            report.state_entry_ratios.append(
                entry["state_entries"] / prev_entries)
        prev_entries = entry["state_entries"]
    # Mean tiles per task is exactly the wavefront/self-scheduled task ratio,
    # so one fitted slope serves both claims.
    report.slope_tasks_ratio = _slope(xs, ratios)
    report.slope_tiles_per_task = report.slope_tasks_ratio
    return report
