import json
import threading
import time

import numpy as np
import pytest

from hsdtile.errors import CycleDetected, MonotonicityViolation
from hsdtile.instrument import compile_program
from hsdtile.kernels import BENCHMARKS, NullKernel, _data_text, load_fixture_prdg
from hsdtile.prdg import parse_prdg
from hsdtile.runtime import (
    RunOptions,
    StateTable,
    run_hsd,
    run_sequential,
    run_wavefront,
)
from hsdtile.schedule import parse_schedule
from hsdtile.trace import (
    RunStatus,
    TILE_BEGIN,
    TILE_END,
    UPDATE,
    ExecutionTrace,
    check_tile_event_order,
    dependence_instances,
    trace_from_csv,
    verify_trace,
)


def rex_setup(mb=4, nb=4):
    g = parse_prdg(_data_text("rex2d.prdg.json"))
    sch = parse_schedule(_data_text("rex2d.sched1.json"), g)
    params = {"M_b": mb, "N_b": nb}
    s = g.bind_params(params)
    tp, stg, r = compile_program(g, sch, s)
    return g, sch, params, s, tp, stg


def rex_kernel(params):
    return BENCHMARKS["rex2d"].make_kernel(params)


# ---------------------------------------------------------------------------
# run_hsd
# ---------------------------------------------------------------------------

def test_rex_single_worker_matches_sequential():
    g, sch, params, s, tp, stg = rex_setup()
    seq = run_sequential(g, rex_kernel(params), s)
    res = run_hsd(tp, rex_kernel(params), s, workers=1)
    assert res.completed
    assert res.metrics.tasks_spawned == 5  # VPs i_b in 0..4
    assert np.array_equal(res.outputs["H"], seq.outputs["H"])
    # Single worker in lex VP order never has to wait.
    assert res.metrics.total_spins == 0


def test_rex_many_workers_deterministic():
    g, sch, params, s, tp, stg = rex_setup()
    expected = run_sequential(g, rex_kernel(params), s).outputs["H"]
    for rep in range(20):
        res = run_hsd(tp, rex_kernel(params), s, workers=8,
                      opts=RunOptions(seed=rep))
        assert res.completed
        assert np.array_equal(res.outputs["H"], expected)


def test_reversed_producer_map_times_out():
    text = """
    {"params": ["P", "T"],
     "nodes": [{"name": "S", "dims": ["p", "t"],
                "domain": ["p >= 0", "p <= P - 1", "t >= 0", "t <= T - 1"]}],
     "edges": [{"src": "S",
                "domain": ["p >= 0", "p <= P - 2", "t >= 0", "t <= T - 1"],
                "deps": [{"dst": "S", "map": ["p + 1", "t"]}]}]}
    """
    g = parse_prdg(text)
    sch = parse_schedule(
        '{"n": 2, "k": 1, "maps": {"S": {"rows": ["p", "t"]}}}', g)
    s = g.bind_params({"P": 3, "T": 2})
    tp, _, _ = compile_program(g, sch, s)
    res = run_hsd(tp, NullKernel(), s, workers=1,
                  opts=RunOptions(timeout=0.5))
    assert res.status is RunStatus.TIMEOUT
    text = "\n".join(res.diagnostics)
    assert "blocked on" in text and "State_S" in text
    assert "entries published" in text


def test_state_check_immediate_and_blocking():
    table = StateTable({"S": {(0,), (1,)}}, time_dim=1)
    stop = threading.Event()
    table.publish("S", (0,), (3,))
    # Entry already past the requirement: zero failed polls.
    assert table.check("S", (0,), (3,), 2, time.monotonic() + 1, stop) == 0
    assert table.check("S", (0,), (2,), 2, time.monotonic() + 1, stop) == 0
    # Two-worker handshake: waiter suspends after the spin limit, publisher
    # wakes it.
    spins = []

    def waiter():
        spins.append(table.check("S", (1,), (0,), 2, time.monotonic() + 5, stop))

    th = threading.Thread(target=waiter)
    th.start()
    time.sleep(0.1)
    table.publish("S", (1,), (0,))
    th.join(timeout=5)
    assert not th.is_alive()
    assert spins and spins[0] > 2  # exceeded the busy-wait limit, then suspended


def test_state_monotonicity_enforced():
    table = StateTable({"S": {(0,)}}, time_dim=1)
    table.publish("S", (0,), (1,))
    with pytest.raises(MonotonicityViolation):
        table.publish("S", (0,), (1,))
    with pytest.raises(MonotonicityViolation):
        table.publish("S", (0,), (0,))
    table.publish("S", (0,), (2,))
    assert table.tables["S"][(0,)] == (2,)


def test_waiters_observe_no_regression():
    table = StateTable({"S": {(0,)}}, time_dim=1)
    seen = []

    def reader():
        last = None
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            v = table.tables["S"][(0,)]
            if v is not None:
                assert last is None or v >= last
                last = v
                if v == (49,):
                    break
        seen.append(last)

    th = threading.Thread(target=reader)
    th.start()
    for t in range(50):
        table.publish("S", (0,), (t,))
    th.join()
    assert seen == [(49,)]


def test_trace_event_order_and_prop2():
    g, sch, params, s, tp, stg = rex_setup()
    res = run_hsd(tp, rex_kernel(params), s, workers=4)
    assert res.completed
    assert check_tile_event_order(res.trace) == []
    # Update events only after the same tile's end (state entry implies
    # completed execution).
    idx = res.trace.index()
    for key, kinds in idx.items():
        if UPDATE in kinds:
            assert kinds[TILE_END] < kinds[UPDATE]


def test_verify_trace_good_and_forged():
    g, sch, params, s, tp, stg = rex_setup()
    res = run_hsd(tp, rex_kernel(params), s, workers=4)
    deps = dependence_instances(stg.graph, s)
    assert verify_trace(res.trace, stg.graph, s, deps).ok
    # Forge: swap a producer's tile_end after its consumer's tile_begin.
    forged = ExecutionTrace(tp.k)
    forged.events = list(res.trace.events)
    idx = forged.index()
    consumer, producer = deps[0]
    pend = idx[producer][TILE_END]
    cbeg = idx[consumer][TILE_BEGIN]
    forged.events[pend], forged.events[cbeg] = forged.events[cbeg], forged.events[pend]
    bad = verify_trace(forged, stg.graph, s, deps)
    assert not bad.ok
    assert any(v.producer == producer for v in bad.violations)


def test_sequential_trace_verifies():
    g, sch, params, s, tp, stg = rex_setup(3, 3)
    seq = run_sequential(g, rex_kernel(params), s)
    assert verify_trace(seq.trace, g, s).ok


def test_trace_csv_roundtrip(tmp_path):
    g, sch, params, s, tp, stg = rex_setup(2, 2)
    res = run_hsd(tp, rex_kernel(params), s, workers=2)
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    again = trace_from_csv(path, tp.k)
    assert again.events == res.trace.events


def test_over_approximation_safety():
    g, sch, params, s, tp, stg = rex_setup()
    expected = run_sequential(g, rex_kernel(params), s).outputs["H"]
    tp_full, _, _ = compile_program(g, sch, s, keep_all_instances=True)
    base_obl = run_hsd(tp, rex_kernel(params), s, workers=4)
    full = run_hsd(tp_full, rex_kernel(params), s, workers=4)
    assert full.completed
    assert np.array_equal(full.outputs["H"], expected)
    assert verify_trace(full.trace, stg.graph, s).ok
    # Extra obligations were actually injected.
    assert full.metrics.checks_executed > base_obl.metrics.checks_executed


def test_state_entries_metric():
    g, sch, params, s, tp, stg = rex_setup(4, 4)
    res = run_hsd(tp, rex_kernel(params), s, workers=1)
    # One table for S over 5 VPs, each holding an (n-k)=1 tuple.
    assert res.metrics.state_entries == 5


def test_k0_and_kn_degenerate_schedules():
    g = parse_prdg(_data_text("rex2d.prdg.json"))
    params = {"M_b": 3, "N_b": 3}
    for k in (0, 2):
        sch = parse_schedule(json.dumps({
            "n": 2, "k": k,
            "maps": {"S": {"rows": ["i_b", "j_b"]},
                     "In": {"rows": ["i_b", "j_b"]}},
        }), g)
        s = g.bind_params(params)
        tp, stg, r = compile_program(g, sch, s)
        res = run_hsd(tp, rex_kernel(params), s, workers=3)
        assert res.completed, (k, res.diagnostics)
        seq = run_sequential(g, rex_kernel(params), s)
        assert np.array_equal(res.outputs["H"], seq.outputs["H"])
        if k == 0:
            assert res.metrics.tasks_spawned == 1  # single empty-coordinate VP
        else:
            assert res.metrics.tasks_spawned == 16  # one VP per tile


def test_dropped_clause_with_stall_breaks_output():
    g, sch, params, s, tp, stg = rex_setup()
    expected = run_sequential(g, rex_kernel(params), s).outputs["H"]
    res = run_hsd(tp, rex_kernel(params), s, workers=2,
                  opts=RunOptions(drop_clauses=(("S", 0), ("S", 1)),
                                  stall_first_vp_ms=30.0))
    assert res.completed
    deps = dependence_instances(stg.graph, s)
    trace_bad = not verify_trace(res.trace, stg.graph, s, deps).ok
    output_bad = not np.array_equal(res.outputs["H"], expected)
    assert trace_bad and output_bad


def test_workers_beyond_vps_exit():
    g, sch, params, s, tp, stg = rex_setup(1, 1)
    res = run_hsd(tp, rex_kernel(params), s, workers=16)
    assert res.completed
    assert res.metrics.tasks_spawned == 2


def test_kernel_failure_reported():
    class Boom(NullKernel):
        def execute(self, state, node, z):
            raise RuntimeError("boom")

    g, sch, params, s, tp, stg = rex_setup(2, 2)
    res = run_hsd(tp, Boom(), s, workers=2)
    assert res.status is RunStatus.ERROR
    assert "boom" in res.error


# ---------------------------------------------------------------------------
# Wavefront baseline
# ---------------------------------------------------------------------------

def test_wavefront_rex_barriers():
    g, sch, params, s, tp, stg = rex_setup(4, 4)  # 5x5 tiles
    res = run_wavefront(g, rex_kernel(params), s, workers=4)
    assert res.completed
    assert res.metrics.barriers == 9  # waves 0..8
    assert res.metrics.tasks_spawned == 25
    seq = run_sequential(g, rex_kernel(params), s)
    assert np.array_equal(res.outputs["H"], seq.outputs["H"])
    assert verify_trace(res.trace, g, s).ok


def test_wavefront_single_tile():
    g, sch, params, s, tp, stg = rex_setup(0, 0)
    res = run_wavefront(g, rex_kernel(params), s, workers=2)
    assert res.completed
    assert res.metrics.barriers == 1
    assert res.metrics.tasks_spawned == 1


def test_wavefront_invalid_function_rejected():
    g, sch, params, s, tp, stg = rex_setup(2, 2)
    from hsdtile.errors import HsdTileError
    with pytest.raises(HsdTileError):
        run_wavefront(g, rex_kernel(params), s, workers=2, wavefront=lambda z: 0)


def test_wavefront_matches_sequential_all_benchmarks():
    for bid, small in [("rex3d", {"N_b": 3}), ("jacobi1d", {"T_b": 4, "I_b": 6}),
                       ("jacobi2d", {"T_b": 3, "I_b": 4, "J_b": 4}),
                       ("ltmi", {"N_b": 4})]:
        bench = BENCHMARKS[bid]
        g = load_fixture_prdg(bench.prdg_file)
        s = g.bind_params(small)
        seq = run_sequential(g, bench.make_kernel(small), s)
        res = run_wavefront(g, bench.make_kernel(small), s, workers=4,
                            wavefront=bench.wavefront)
        assert res.completed
        for key in seq.outputs:
            assert np.array_equal(res.outputs[key], seq.outputs[key]), bid


# ---------------------------------------------------------------------------
# Sequential oracle
# ---------------------------------------------------------------------------

def test_sequential_rex_values():
    g, sch, params, s, tp, stg = rex_setup(1, 1)  # 4x4 points with b = 2
    res = run_sequential(g, rex_kernel(params), s)
    h = res.outputs["H"]
    assert h[0, 0] == 1 and h[1, 1] == 5 and h[2, 2] == 19


def test_sequential_cycle_detected():
    text = """
    {"params": [], "nodes": [{"name": "S", "dims": ["i"],
       "domain": ["i >= 0", "i <= 3"]}],
     "edges": [
       {"src": "S", "domain": ["i >= 0", "i <= 2"],
        "deps": [{"dst": "S", "map": ["i + 1"]}]},
       {"src": "S", "domain": ["i >= 1", "i <= 3"],
        "deps": [{"dst": "S", "map": ["i - 1"]}]}
     ]}
    """
    g = parse_prdg(text)
    with pytest.raises(CycleDetected) as exc:
        run_sequential(g, NullKernel(), ())
    assert exc.value.cycle  # witness reported


def test_legal_random_schedules_run_clean():
    # Cross-module property: any schedule passing both checks yields runs with
    # zero trace violations.
    import random as _random
    from hsdtile.residual import residualize
    from hsdtile.schedule import check_deadlock_freedom, check_partial_legality

    g = parse_prdg(_data_text("jacobi1d.prdg.json"))
    s = g.bind_params({"T_b": 4, "I_b": 5})
    rng = _random.Random(99)
    tried = accepted = 0
    while accepted < 6 and tried < 60:
        tried += 1
        c = rng.randint(-2, 2)
        rows = ["t", f"{c}*t + i" if c >= 0 else f"i - {-c}*t"]
        if rng.random() < 0.5:
            rows = [rows[1], rows[0]]
        k = rng.choice([0, 1, 2])
        try:
            sch = parse_schedule(json.dumps(
                {"n": 2, "k": k, "maps": {"S": {"rows": rows}}}), g)
        except Exception:
            continue
        if not check_partial_legality(g, sch, s).legal:
            continue
        r = residualize(g, sch, s)
        if not check_deadlock_freedom(r.graph, sch, s).legal:
            continue
        accepted += 1
        tp, stg, _ = compile_program(g, sch, s)
        res = run_hsd(tp, NullKernel(), s, workers=3, opts=RunOptions(timeout=20))
        assert res.completed, (rows, k, res.diagnostics)
        assert verify_trace(res.trace, stg.graph, s).ok, (rows, k)
    assert accepted >= 3
