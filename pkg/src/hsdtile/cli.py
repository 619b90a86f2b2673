"""Command-line front end.

Subcommands: validate, residual, run, bench, emit, verify-trace.  Exit codes:
0 success, 1 semantic failure (violation, output mismatch, trace violation,
timeout), 2 usage or parse error.  Reports are dual-format: a human summary on
stdout plus machine-readable JSON/CSV files; nondeterministic values (wall
times, spin counts, timestamps) are isolated so identical inputs and seed give
identical report payloads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .codegen import emit as emit_source
from .errors import HsdTileError, UnsupportedTarget
from .formulas import enumerated_check_counts, metrics_against_formulas
from .instrument import compile_program
from .kernels import BENCHMARKS, NullKernel, checksum, fixture_path, kernel_catalog
from .prdg import parse_prdg_file, serialize_prdg, validate_prdg
from .residual import coverage_check, residualize
from .runtime import RunOptions, run_hsd, run_sequential, run_wavefront
from .report import (
    BENCH_COLUMNS,
    TIMING_COLUMNS,
    render_bench_figures,
    write_csv,
    write_meta,
)
from .schedule import (
    check_deadlock_freedom,
    check_partial_legality,
    parse_schedule_file,
    reindex_to_spacetime,
)
from .trace import trace_from_csv, verify_trace

OK, SEMANTIC_FAILURE, USAGE_ERROR = 0, 1, 2


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise HsdTileError(f"--param needs NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        out[name.strip()] = int(value)
    return out


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _resolve_inputs(args, need_schedule=True):
    """(graph, schedule, params dict, kernel factory or None, benchmark)."""
    if getattr(args, "benchmark", None):
        bench = BENCHMARKS.get(args.benchmark)
        if bench is None:
            raise HsdTileError(
                f"unknown benchmark {args.benchmark!r}; "
                f"known: {', '.join(sorted(BENCHMARKS))}"
            )
        mapping = getattr(args, "mapping", 1) or 1
        if mapping not in bench.mappings:
            raise HsdTileError(f"benchmark {bench.id} has no mapping {mapping}")
        g = parse_prdg_file(fixture_path(bench.prdg_file))
        sch = parse_schedule_file(
            fixture_path(bench.mappings[mapping].schedule_file), g)
        params = dict(bench.desk_params)
        params.update(_parse_params(getattr(args, "param", None)))
        return g, sch, params, bench.make_kernel, bench
    if not getattr(args, "prdg", None):
        raise HsdTileError("need either --benchmark or a PRDG file path")
    g = parse_prdg_file(args.prdg)
    sch = None
    if need_schedule:
        if not getattr(args, "schedule", None):
            raise HsdTileError("a schedule file is required")
        sch = parse_schedule_file(args.schedule, g)
    params = _parse_params(getattr(args, "param", None))
    kernel_factory = None
    kid = getattr(args, "kernel", None)
    if kid and kid != "none":
        if kid not in BENCHMARKS:
            raise HsdTileError(f"unknown kernel {kid!r}")
        kernel_factory = BENCHMARKS[kid].make_kernel
    return g, sch, params, kernel_factory, None


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    g, sch, params, _, _ = _resolve_inputs(args)
    s = g.bind_params(params)
    structure = validate_prdg(g, s)
    legality = check_partial_legality(g, sch, s)
    r = residualize(g, sch, s)
    deadlock = check_deadlock_freedom(r.graph, sch, s)
    coverage = coverage_check(g, sch, r, s)
    n_edges = len(r.graph.edges)

    payload = {
        "structure": {"ok": structure.ok, "findings": [
            {"kind": f.kind, "edge": f.edge, "witness": f.witness, "detail": f.detail}
            for f in structure.findings
        ]},
        "legality": {"status": legality.status.value, "violations": [
            {"edge": v.edge, "pair": v.pair_index, "witness": list(v.witness),
             "reason": v.reason} for v in legality.violations
        ]},
        "deadlock": {"status": deadlock.status.value, "violations": [
            {"edge": v.edge, "pair": v.pair_index, "witness": list(v.witness),
             "reason": v.reason} for v in deadlock.violations
        ]},
        "coverage": {"ok": coverage.ok, "static": coverage.static_count,
                     "residual": coverage.residual_count,
                     "uncovered": len(coverage.uncovered)},
        "residual_edges": n_edges,
        "params": params,
    }
    if args.report:
        _write_json(args.report, {"meta": {"version": __version__}, "result": payload})
    ok = (structure.ok and legality.legal and deadlock.legal and coverage.ok)
    if ok:
        print(f"legal, deadlock-free, {n_edges} residual edge(s); "
              f"{coverage.static_count} statically ordered / "
              f"{coverage.residual_count} runtime-enforced instances")
        return OK
    print("validation FAILED")
    if not structure.ok:
        print("  structure:", structure.summary())
    if not legality.legal:
        print("  legality:", legality.summary())
    if not deadlock.legal:
        print("  deadlock:", deadlock.summary())
    if not coverage.ok:
        print("  coverage:", coverage.summary())
    return SEMANTIC_FAILURE


# ---------------------------------------------------------------------------
# residual
# ---------------------------------------------------------------------------

def cmd_residual(args) -> int:
    g, sch, params, _, _ = _resolve_inputs(args)
    s = g.bind_params(params) if params else None
    r = residualize(g, sch, s)
    text = serialize_prdg(r.graph)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"residual written to {args.out} ({len(r.graph.edges)} edge(s))")
    else:
        sys.stdout.write(text)
    return OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _drop_clauses(items):
    out = []
    for item in items or []:
        node, _, idx = item.partition(":")
        out.append((node, int(idx or "0")))
    return tuple(out)


def cmd_run(args) -> int:
    g, sch, params, kernel_factory, bench = _resolve_inputs(
        args, need_schedule=args.mode == "hsd")
    s = g.bind_params(params)
    if kernel_factory is None:
        kernels = NullKernel()
    else:
        kernels = kernel_factory(params)
    drop = _drop_clauses(args.drop_clause)
    opts = RunOptions(
        timeout=args.timeout,
        seed=args.seed,
        jitter_ms=args.jitter_ms,
        drop_clauses=drop,
        stall_first_vp_ms=30.0 if drop else 0.0,
    )
    wavefront_fn = bench.wavefront if bench else None

    if args.mode == "sequential":
        res = run_sequential(g, kernels, s, opts=opts)
        verify_graph, verify_args = g, s
    elif args.mode == "wavefront":
        res = run_wavefront(g, kernels, s, workers=args.workers, opts=opts,
                            wavefront=wavefront_fn)
        verify_graph, verify_args = g, s
    else:
        legality = check_partial_legality(g, sch, s)
        r = residualize(g, sch, s)
        deadlock = check_deadlock_freedom(r.graph, sch, s)
        if not (legality.legal and deadlock.legal) and not args.force:
            print("schedule rejected before execution:")
            if not legality.legal:
                print("  legality:", legality.summary())
            if not deadlock.legal:
                print("  deadlock:", deadlock.summary())
            return SEMANTIC_FAILURE
        tp, stg, _ = compile_program(g, sch, s)
        res = run_hsd(tp, kernels, s, workers=args.workers, opts=opts)
        verify_graph, verify_args = stg.graph, s

    print(f"status: {res.status.value}; tasks={res.metrics.tasks_spawned} "
          f"obligations={res.metrics.checks_executed} "
          f"sync_checks={res.metrics.sync_checks} spins={res.metrics.total_spins} "
          f"wall={res.metrics.wall_time:.3f}s")
    for line in res.diagnostics:
        print(" ", line)
    if args.trace_out and res.trace is not None:
        res.trace.to_csv(args.trace_out)
    if args.metrics_out:
        _write_json(args.metrics_out, {
            "meta": {"version": __version__, "seed": args.seed,
                     "wall_time": res.metrics.wall_time},
            "status": res.status.value,
            "metrics": {k: v for k, v in res.metrics.to_dict().items()
                        if k not in ("wall_time", "total_spins")},
            "checksum": checksum(res.outputs) if res.outputs else None,
            "params": params,
        })
    if not res.completed:
        return SEMANTIC_FAILURE

    if args.verify:
        failures = []
        if kernel_factory is not None:
            seq = run_sequential(g, kernel_factory(params), s)
            for key in seq.outputs:
                if not np.array_equal(res.outputs.get(key), seq.outputs[key]):
                    failures.append(f"output {key} differs from sequential oracle")
        if res.trace is not None:
            rep = verify_trace(res.trace, verify_graph, verify_args)
            if not rep.ok:
                failures.append(
                    f"{len(rep.violations)} trace violation(s); first: "
                    f"{rep.violations[0].detail}")
        if failures:
            for f in failures:
                print("verify:", f)
            return SEMANTIC_FAILURE
        print("verify: outputs match the sequential oracle; trace clean")
    return OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    bench = BENCHMARKS.get(args.benchmark)
    if bench is None:
        raise HsdTileError(f"unknown benchmark {args.benchmark!r}")
    mappings = [args.mapping] if args.mapping else sorted(bench.mappings)
    factors = [int(f) for f in args.factors.split(",")]
    workers_list = [int(w) for w in args.workers.split(",")]
    os.makedirs(args.out_dir, exist_ok=True)

    g = parse_prdg_file(fixture_path(bench.prdg_file))
    bench_rows, timing_rows, formula_reports = [], [], {}
    for mapping_id in mappings:
        sch = parse_schedule_file(
            fixture_path(bench.mappings[mapping_id].schedule_file), g)
        for factor in factors:
            params = bench.sweep_params(factor)
            s = g.bind_params(params)
            tp, stg, _ = compile_program(g, sch, s)
            per_tile = enumerated_check_counts(g, sch, s)
            checks_interior = max(per_tile.values(), default=0)
            for workers in workers_list:
                for mode in ("hsd", "wavefront"):
                    kern = bench.make_kernel(params)
                    opts = RunOptions(seed=args.seed, timeout=args.timeout,
                                      collect_trace=False)
                    if mode == "hsd":
                        res = run_hsd(tp, kern, s, workers=workers, opts=opts)
                    else:
                        res = run_wavefront(g, kern, s, workers=workers,
                                            opts=opts, wavefront=bench.wavefront)
                    if not res.completed:
                        print(f"{mode} f{factor} w{workers}: {res.status.value}")
                        return SEMANTIC_FAILURE
                    m = res.metrics
                    bench_rows.append({
                        "benchmark": bench.id, "mapping": mapping_id,
                        "factor": factor, "params": json.dumps(params, sort_keys=True),
                        "mode": mode, "workers": workers,
                        "tasks": m.tasks_spawned, "sync_checks": m.sync_checks,
                        "checks_interior": checks_interior if mode == "hsd" else 0,
                        "obligations": m.checks_executed,
                        "state_entries": m.state_entries, "barriers": m.barriers,
                        "checksum": checksum(res.outputs),
                    })
                    timing_rows.append({
                        "benchmark": bench.id, "mapping": mapping_id,
                        "factor": factor, "mode": mode, "workers": workers,
                        "wall_time": round(m.wall_time, 6),
                        "total_spins": m.total_spins,
                    })
        formula_reports[str(mapping_id)] = metrics_against_formulas(
            bench.id, mapping_id, sweep_factors=tuple(factors),
            workers=workers_list[0]).to_dict()

    write_csv(os.path.join(args.out_dir, "bench.csv"), BENCH_COLUMNS,
              [[row[c] for c in BENCH_COLUMNS] for row in bench_rows])
    write_csv(os.path.join(args.out_dir, "timing.csv"), TIMING_COLUMNS,
              [[row[c] for c in TIMING_COLUMNS] for row in timing_rows])
    _write_json(os.path.join(args.out_dir, "formulas.json"), formula_reports)
    write_meta(os.path.join(args.out_dir, "meta.json"), sys.argv, args.seed,
               {"version": __version__})
    figures = render_bench_figures(os.path.join(args.out_dir, "figures"),
                                   bench_rows, timing_rows)
    # Informational wall-time ratio (never gated): self-scheduled vs wavefront.
    hsd_time = sum(r["wall_time"] for r in timing_rows if r["mode"] == "hsd")
    wave_time = sum(r["wall_time"] for r in timing_rows if r["mode"] == "wavefront")
    ratio = hsd_time / wave_time if wave_time else float("nan")
    with open(os.path.join(args.out_dir, "timing-summary.txt"), "w") as fh:
        fh.write(f"hsd/wavefront wall-time ratio: {ratio:.3f}\n")
        fh.write(f"hsd total: {hsd_time:.3f}s; wavefront total: {wave_time:.3f}s\n")
    print(f"bench report in {args.out_dir}: bench.csv, timing.csv, "
          f"formulas.json, {len(figures)} figure(s); "
          f"hsd/wavefront time ratio {ratio:.3f}")
    checks_ok = all(rep["ok"] for rep in formula_reports.values())
    if not checks_ok:
        print("counter comparison FAILED (see formulas.json)")
        return SEMANTIC_FAILURE
    return OK


# ---------------------------------------------------------------------------
# emit
# ---------------------------------------------------------------------------

def cmd_emit(args) -> int:
    g, sch, params, _, _ = _resolve_inputs(args)
    tp, _, _ = compile_program(g, sch)
    source = emit_source(tp, args.target)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(source)
        print(f"wrote {args.target} source to {args.out}")
    else:
        sys.stdout.write(source)
    return OK


# ---------------------------------------------------------------------------
# verify-trace
# ---------------------------------------------------------------------------

def cmd_verify_trace(args) -> int:
    g, sch, params, _, _ = _resolve_inputs(args)
    s = g.bind_params(params)
    if args.coords == "spacetime":
        graph = reindex_to_spacetime(g, sch).graph
        k = sch.k
    else:
        graph = g
        k = 0
    trace = trace_from_csv(args.trace, k)
    rep = verify_trace(trace, graph, s)
    print(rep.summary())
    if not rep.ok:
        v = rep.violations[0]
        print(f"  first: consumer {v.consumer} vs producer {v.producer}: {v.detail}")
        return SEMANTIC_FAILURE
    return OK


def cmd_catalog(_args) -> int:
    for entry in kernel_catalog():
        print(f"{entry['id']}: {entry['dims']}D, {entry['dependence_pattern']}; "
              f"mappings {entry['mappings']}")
    return OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hsdtile",
        description="Hybrid static/dynamic scheduling for tiled polyhedral "
                    "programs: validate, residualize, execute, benchmark, emit.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_inputs(sp, kernel=False):
        sp.add_argument("prdg", nargs="?", help="PRDG file (or use --benchmark)")
        sp.add_argument("schedule", nargs="?", help="schedule file")
        sp.add_argument("--benchmark", help="built-in benchmark id")
        sp.add_argument("--mapping", type=int, default=None,
                        help="benchmark mapping number (default 1)")
        sp.add_argument("--param", action="append", metavar="NAME=VALUE",
                        help="size parameter binding (repeatable)")
        if kernel:
            sp.add_argument("--kernel", default=None,
                            help="kernel id for file-based graphs, or 'none'")

    sp = sub.add_parser("validate", help="legality, deadlock, residual, coverage")
    add_inputs(sp)
    sp.add_argument("--report", help="write machine-readable JSON report here")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("residual", help="write the residual PRDG")
    add_inputs(sp)
    sp.add_argument("-o", "--out", help="output path (default stdout)")
    sp.set_defaults(fn=cmd_residual)

    sp = sub.add_parser("run", help="execute a tile program")
    add_inputs(sp, kernel=True)
    sp.add_argument("--mode", choices=("hsd", "wavefront", "sequential"),
                    default="hsd")
    sp.add_argument("--workers", type=_positive_int, default=1)
    sp.add_argument("--verify", action="store_true",
                    help="compare against the sequential oracle and check the trace")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.add_argument("--jitter-ms", type=float, default=0.0)
    sp.add_argument("--trace-out", help="write the execution trace CSV here")
    sp.add_argument("--metrics-out", help="write the metrics JSON here")
    sp.add_argument("--drop-clause", action="append", metavar="NODE:IDX",
                    help="fault injection: ignore an acquire clause (stalls the "
                         "first VP so the missing synchronization is observable)")
    sp.add_argument("--force", action="store_true",
                    help="run even if legality/deadlock checks fail")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("bench", help="size/worker sweeps with reports and figures")
    sp.add_argument("--benchmark", required=True)
    sp.add_argument("--mapping", type=int, default=None,
                    help="single mapping (default: all)")
    sp.add_argument("--factors", default="1,2,4")
    sp.add_argument("--workers", default="2,4")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("emit", help="emit C source for a target")
    add_inputs(sp)
    sp.add_argument("--target", default="pthreads",
                    help="pthreads or generic_stubs (cuda/x10 are documented only)")
    sp.add_argument("-o", "--out", help="output path (default stdout)")
    sp.set_defaults(fn=cmd_emit)

    sp = sub.add_parser("verify-trace", help="check a trace CSV against a graph")
    sp.add_argument("trace", help="trace CSV file")
    add_inputs(sp)
    sp.add_argument("--coords", choices=("spacetime", "tile"), default="spacetime",
                    help="coordinate system the trace was recorded in")
    sp.set_defaults(fn=cmd_verify_trace)

    sp = sub.add_parser("catalog", help="list built-in benchmarks")
    sp.set_defaults(fn=cmd_catalog)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except UnsupportedTarget as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except HsdTileError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
