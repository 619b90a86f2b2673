import json
import random

import numpy as np
import pytest

from hsdtile.kernels import (
    BENCHMARKS,
    FIXTURE_BUILDERS,
    Jacobi1dKernel,
    Rex2dKernel,
    _data_text,
    checksum,
    dump_grid_csv,
    kernel_catalog,
    load_fixture_prdg,
    reference_eval,
)
from hsdtile.tiling import tiled_instances
from hsdtile.trace import dependence_instances


def test_catalog_contents():
    cat = kernel_catalog()
    ids = [c["id"] for c in cat]
    assert ids == ["jacobi1d", "jacobi2d", "ltmi", "rex2d", "rex3d"]
    by_id = {c["id"]: c for c in cat}
    assert by_id["rex3d"]["mappings"] == [1, 2]
    assert by_id["jacobi2d"]["mappings"] == [1, 2]
    assert by_id["rex2d"]["dims"] == 2


def test_jacobi1d_mapping_rows():
    doc = json.loads(_data_text("jacobi1d.sched1.json"))
    assert doc["maps"]["S"]["rows"] == ["t", "2*t + i"]
    assert (doc["n"], doc["k"]) == (2, 1)


def test_rex3d_mappings_identity_rows():
    for name, k in (("rex3d.sched1.json", 1), ("rex3d.sched2.json", 2)):
        doc = json.loads(_data_text(name))
        assert doc["maps"]["S"]["rows"] == ["i", "j", "k"]
        assert doc["k"] == k


def test_fixtures_match_builders():
    for name, builder in FIXTURE_BUILDERS.items():
        assert json.loads(_data_text(name)) == builder(), name


def test_rex2d_reference_values():
    # Hand-derived from the recurrence with foo(a, b) = a + b + 1, boundary 0:
    # H(1,1)=1 H(1,2)=2 H(2,1)=2 H(2,2)=5 H(3,3)=19.
    k = Rex2dKernel(1, 1, b=(2, 2))  # 4x4 points
    h = k.reference()["H"]
    assert h[0, 0] == 1
    assert h[0, 1] == 2
    assert h[1, 0] == 2
    assert h[1, 1] == 5
    assert h[2, 2] == 19


def test_rex2d_max_foo_all_zero():
    k = Rex2dKernel(1, 1, foo=lambda a, b: max(a, b))
    assert not k.reference()["H"].any()


def test_jacobi1d_constant_line_fixed_point():
    k = Jacobi1dKernel(4, 4, b=2)
    a = k.fresh_state()
    a[:] = 0.0
    a[0] = 1.0
    a[:, 0] = 1.0
    a[:, -1] = 1.0
    for t in range(4):
        for ib in range(4):
            k.execute(a, "S", (t, ib))
    assert np.array_equal(a, np.ones_like(a))


def test_reference_eval_pure():
    p = {"M_b": 3, "N_b": 3}
    a = reference_eval("rex2d", p)
    b = reference_eval("rex2d", p)
    assert np.array_equal(a["H"], b["H"])
    assert checksum(a) == checksum(b)


SMALL = {
    "rex2d": {"M_b": 3, "N_b": 3},
    "rex3d": {"N_b": 3},
    "jacobi1d": {"T_b": 4, "I_b": 6},
    "jacobi2d": {"T_b": 3, "I_b": 4, "J_b": 4},
    "ltmi": {"N_b": 4},
}


def graph_tiles(g, s):
    from hsdtile.affine import enumerate_union
    return [
        (n.name, z) for n in g.nodes if not n.is_input
        for z in enumerate_union(n.domain, s)
    ]


def random_topological_orders(tiles, deps, rng, count):
    succs = {}
    preds = {t: 0 for t in tiles}
    tile_set = set(tiles)
    for consumer, producer in deps:
        if consumer in tile_set and producer in tile_set:
            succs.setdefault(producer, []).append(consumer)
            preds[consumer] += 1
    for _ in range(count):
        counts = dict(preds)
        ready = [t for t in tiles if counts[t] == 0]
        order = []
        while ready:
            t = ready.pop(rng.randrange(len(ready)))
            order.append(t)
            for nxt in succs.get(t, ()):
                counts[nxt] -= 1
                if counts[nxt] == 0:
                    ready.append(nxt)
        assert len(order) == len(tiles)
        yield order


@pytest.mark.parametrize("bid", sorted(BENCHMARKS))
def test_tile_order_independence(bid):
    bench = BENCHMARKS[bid]
    g = load_fixture_prdg(bench.prdg_file)
    params = SMALL[bid]
    s = g.bind_params(params)
    tiles = graph_tiles(g, s)
    deps = dependence_instances(g, s)
    expected = bench.make_kernel(params).reference()
    rng = random.Random(77)
    for order in random_topological_orders(tiles, deps, rng, 100):
        k = bench.make_kernel(params)
        state = k.fresh_state()
        for name, z in order:
            k.execute(state, name, z)
        got = k.outputs(state)
        for key in expected:
            assert np.array_equal(got[key], expected[key]), (bid, key)


def _write_region(bid, kernel, z):
    """Index expression selecting exactly the cells written by tile z."""
    if bid == "rex2d":
        ib, jb = z
        b0, b1 = kernel.b
        return np.s_[ib * b0 + 1:(ib + 1) * b0 + 1, jb * b1 + 1:(jb + 1) * b1 + 1]
    if bid == "rex3d":
        i, j, k = z
        b = kernel.b
        return np.s_[i * b + 1:(i + 1) * b + 1, j * b + 1:(j + 1) * b + 1,
                     k * b + 1:(k + 1) * b + 1]
    if bid == "jacobi1d":
        t, ib = z
        lo = max(1, ib * kernel.b)
        hi = min(kernel.i - 2, (ib + 1) * kernel.b - 1)
        return np.s_[t + 1, lo:hi + 1]
    if bid == "jacobi2d":
        t, ib, jb = z
        b = kernel.b
        ilo, ihi = max(1, ib * b), min(kernel.i - 2, (ib + 1) * b - 1)
        jlo, jhi = max(1, jb * b), min(kernel.j - 2, (jb + 1) * b - 1)
        return np.s_[t + 1, ilo:ihi + 1, jlo:jhi + 1]
    if bid == "ltmi":
        return tuple(z)
    raise AssertionError(bid)


@pytest.mark.parametrize("bid", sorted(BENCHMARKS))
def test_single_tile_reproduces_reference(bid):
    # Intra-tile order check: take the fully computed reference state, clear
    # exactly one tile's cells, re-execute just that tile, and require exact
    # recovery.  A wrong intra-tile point order would read a cleared cell.
    bench = BENCHMARKS[bid]
    g = load_fixture_prdg(bench.prdg_file)
    params = SMALL[bid]
    s = g.bind_params(params)
    tiles = graph_tiles(g, s)
    deps = dependence_instances(g, s)
    order = next(random_topological_orders(tiles, deps, random.Random(1), 1))
    k = bench.make_kernel(params)
    ref_state = k.fresh_state()
    for n2, z2 in order:
        k.execute(ref_state, n2, z2)
    rng = random.Random(5)
    for name, z in rng.sample(tiles, min(8, len(tiles))):
        staged = ref_state.copy()
        staged[_write_region(bid, k, z)] = 0
        k.execute(staged, name, z)
        assert np.array_equal(staged, ref_state), (bid, name, z)


def test_ltmi_fixture_matches_kernel_reads():
    g = load_fixture_prdg("ltmi.prdg.json")
    nb = 4
    s = g.bind_params({"N_b": nb})
    got = tiled_instances(g, s)
    expected = set()
    for i in range(nb):
        for j in range(i + 1):
            for k in range(j + 1):
                if k >= 1:
                    expected.add(("S", (i, j, k), "S", (i, j, k - 1)))
                if j >= 1 and k <= j - 1:
                    expected.add(("S", (i, j, k), "S", (i, j - 1, k)))
                if i >= 1 and j <= i - 1:
                    expected.add(("S", (i, j, k), "S", (i - 1, j, k)))
    assert got == expected


def test_rex3d_fixture_matches_point_projection():
    g = load_fixture_prdg("rex3d.prdg.json")
    nb, b = 3, 2
    n = nb * b
    s = g.bind_params({"N_b": nb})
    got = tiled_instances(g, s)
    expected = set()
    for x in range(1, n + 1):
        for y in range(1, n + 1):
            for w in range(1, n + 1):
                for d in ((-1, 0, 0), (0, -1, 0), (0, 0, -1)):
                    src = (x, y, w)
                    tgt = (x + d[0], y + d[1], w + d[2])
                    if min(tgt) < 1:
                        continue  # boundary read, live-in data
                    tz = tuple((c - 1) // b for c in src)
                    tt = tuple((c - 1) // b for c in tgt)
                    if tz != tt:
                        expected.add(("S", tz, "S", tt))
    assert got == expected


def test_jacobi1d_fixture_matches_point_projection():
    g = load_fixture_prdg("jacobi1d.prdg.json")
    tb, ib, b = 5, 4, 4
    big_i = ib * b
    s = g.bind_params({"T_b": tb, "I_b": ib})
    got = tiled_instances(g, s)
    expected = set()
    # Point (r, i) is computed by tile (r - 1, i // b); row 0 and the boundary
    # columns are live-in.  Producers from computed cells only.
    for r in range(1, tb + 1):
        for i in range(1, big_i - 1):
            for a in (-1, 0, 1):
                pr, pi = r - 1, i + a
                if pr < 1 or pi < 1 or pi > big_i - 2:
                    continue
                tz = (r - 1, i // b)
                tt = (pr - 1, pi // b)
                if tz != tt:
                    expected.add(("S", tz, "S", tt))
    assert got == expected


def test_jacobi2d_fixture_matches_point_projection():
    g = load_fixture_prdg("jacobi2d.prdg.json")
    tb, ib, jb, b = 3, 4, 4, 2
    big_i, big_j = ib * b, jb * b
    s = g.bind_params({"T_b": tb, "I_b": ib, "J_b": jb})
    got = tiled_instances(g, s)
    expected = set()
    for r in range(1, tb + 1):
        for i in range(1, big_i - 1):
            for j in range(1, big_j - 1):
                for di, dj in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
                    pr, pi, pj = r - 1, i + di, j + dj
                    if pr < 1 or not (1 <= pi <= big_i - 2) or not (1 <= pj <= big_j - 2):
                        continue
                    tz = (r - 1, i // b, j // b)
                    tt = (pr - 1, pi // b, pj // b)
                    if tz != tt:
                        expected.add(("S", tz, "S", tt))
    assert got == expected


@pytest.mark.parametrize("bid", sorted(BENCHMARKS))
def test_shipped_fixtures_validate_clean_at_desk_sizes(bid):
    from hsdtile.prdg import validate_prdg
    from hsdtile.residual import residualize
    from hsdtile.schedule import (
        check_deadlock_freedom,
        check_partial_legality,
        parse_schedule,
    )

    bench = BENCHMARKS[bid]
    g = load_fixture_prdg(bench.prdg_file)
    s = g.bind_params(bench.desk_params)
    report = validate_prdg(g, s)
    assert report.ok, (bid, report.summary())
    for mid, mi in bench.mappings.items():
        sch = parse_schedule(_data_text(mi.schedule_file), g)
        leg = check_partial_legality(g, sch, s)
        assert leg.legal, (bid, mid, leg.summary())
        r = residualize(g, sch, s)
        dl = check_deadlock_freedom(r.graph, sch, s)
        assert dl.legal, (bid, mid, dl.summary())


def test_dump_grid_csv(tmp_path):
    out = reference_eval("ltmi", {"N_b": 2})
    path = tmp_path / "grid.csv"
    dump_grid_csv(out, path)
    text = path.read_text()
    assert text.startswith("V,int64,2,2,2")
    assert len(text.splitlines()) == 1 + 8
