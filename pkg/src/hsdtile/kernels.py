"""Built-in benchmark tile kernels with exact sequential references.

Integer benchmarks (rex2d, rex3d, ltmi) run in a wrapping ring modulo 2^31 so
equality checks are exact and overflow-free.  The jacobi stencils use float64
with dyadic weights under a fixed evaluation order; since every grid cell has
exactly one writing tile, runs are bit-identical for any worker count.

Each benchmark couples a parametric tile-level PRDG fixture, its target
mappings, a tile-execute procedure (given a tile index, computes all points of
that tile in intra-tile dependence order) and an independent whole-program
reference implementation.  The jacobi benchmarks use unit time tiles, which
keeps the tiled dependence sets exactly equal to the projection of the
point-level stencil (validated in the tests); the skew of their shipped
mappings lives in the schedule, not in the tiling.
"""

from __future__ import annotations

import hashlib
import importlib.resources
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .prdg import Prdg, parse_prdg

MOD = 2 ** 31


def checksum(outputs: dict) -> str:
    h = hashlib.sha1()
    for name in sorted(outputs):
        arr = np.ascontiguousarray(outputs[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _data_text(name: str) -> str:
    return importlib.resources.files("hsdtile").joinpath(f"data/{name}").read_text()


def fixture_path(name: str) -> str:
    return str(importlib.resources.files("hsdtile").joinpath(f"data/{name}"))


def load_fixture_prdg(name: str) -> Prdg:
    return parse_prdg(_data_text(name))


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

class Rex2dKernel:
    """H[x,y] = foo(H[x-1,y], H[x,y-1]) on 1..M x 1..N, zero boundary.

    foo defaults to the ring sum a + b + 1 (mod 2^31).  Tile (i_b, j_b) covers
    the b x b point block starting at (i_b*b + 1, j_b*b + 1).
    """

    def __init__(self, mb: int, nb: int, b: tuple = (2, 2), foo=None):
        self.b = b
        self.m = (mb + 1) * b[0]
        self.n = (nb + 1) * b[1]
        self.foo = foo

    def fresh_state(self):
        return np.zeros((self.m + 1, self.n + 1), dtype=np.int64)

    def execute(self, h, node, z):
        ib, jb = z
        b0, b1 = self.b
        foo = self.foo
        for x in range(ib * b0 + 1, (ib + 1) * b0 + 1):
            row = h[x]
            prev = h[x - 1]
            for y in range(jb * b1 + 1, (jb + 1) * b1 + 1):
                if foo is None:
                    row[y] = (prev[y] + row[y - 1] + 1) % MOD
                else:
                    row[y] = foo(int(prev[y]), int(row[y - 1])) % MOD

    def outputs(self, h):
        return {"H": h[1:, 1:].copy()}

    def reference(self):
        h = np.zeros((self.m + 1, self.n + 1), dtype=np.int64)
        foo = self.foo
        for x in range(1, self.m + 1):
            for y in range(1, self.n + 1):
                if foo is None:
                    h[x, y] = (h[x - 1, y] + h[x, y - 1] + 1) % MOD
                else:
                    h[x, y] = foo(int(h[x - 1, y]), int(h[x, y - 1])) % MOD
        return {"H": h[1:, 1:].copy()}


class Rex3dKernel:
    """3D analogue: H[x,y,z] = H[x-1,..] + H[..,y-1,..] + H[..,z-1] + 1."""

    def __init__(self, nb: int, b: int = 2):
        self.b = b
        self.n = nb * b  # tiles 0..nb-1 cover points 1..n

    def fresh_state(self):
        return np.zeros((self.n + 1,) * 3, dtype=np.int64)

    def execute(self, h, node, z):
        i, j, k = z
        b = self.b
        for x in range(i * b + 1, (i + 1) * b + 1):
            for y in range(j * b + 1, (j + 1) * b + 1):
                for w in range(k * b + 1, (k + 1) * b + 1):
                    h[x, y, w] = (h[x - 1, y, w] + h[x, y - 1, w]
                                  + h[x, y, w - 1] + 1) % MOD

    def outputs(self, h):
        return {"H": h[1:, 1:, 1:].copy()}

    def reference(self):
        h = np.zeros((self.n + 1,) * 3, dtype=np.int64)
        for x in range(1, self.n + 1):
            for y in range(1, self.n + 1):
                for w in range(1, self.n + 1):
                    h[x, y, w] = (h[x - 1, y, w] + h[x, y - 1, w]
                                  + h[x, y, w - 1] + 1) % MOD
        return {"H": h[1:, 1:, 1:].copy()}


def _jacobi_line(i: np.ndarray) -> np.ndarray:
    # Dyadic initial data: exact in float64 and preserved by dyadic weights.
    return ((i * 37) % 101).astype(np.float64) * 0.125


class Jacobi1dKernel:
    """3-point stencil a[r,i] = (a[r-1,i-1] + 2 a[r-1,i] + a[r-1,i+1]) / 4.

    Unit time tiles: tile (t, i_b) computes time step r = t + 1 on the i-block
    of width b.  Boundary columns are held constant.
    """

    def __init__(self, tb: int, ib: int, b: int = 4):
        self.t = tb
        self.i = ib * b
        self.b = b

    def fresh_state(self):
        a = np.zeros((self.t + 1, self.i), dtype=np.float64)
        a[0] = _jacobi_line(np.arange(self.i))
        a[:, 0] = a[0, 0]
        a[:, -1] = a[0, -1]
        return a

    def execute(self, a, node, z):
        t, ib = z
        r = t + 1
        lo = max(1, ib * self.b)
        hi = min(self.i - 2, (ib + 1) * self.b - 1)
        if lo > hi:
            return
        prev = a[r - 1]
        a[r, lo:hi + 1] = (prev[lo - 1:hi] + 2.0 * prev[lo:hi + 1]
                           + prev[lo + 1:hi + 2]) * 0.25

    def outputs(self, a):
        return {"A": a.copy()}

    def reference(self):
        a = self.fresh_state()
        for r in range(1, self.t + 1):
            prev = a[r - 1]
            a[r, 1:-1] = (prev[:-2] + 2.0 * prev[1:-1] + prev[2:]) * 0.25
        return {"A": a.copy()}


class Jacobi2dKernel:
    """5-point stencil with dyadic weights (4c + n + s + e + w) / 8."""

    def __init__(self, tb: int, ib: int, jb: int, b: int = 2):
        self.t = tb
        self.i = ib * b
        self.j = jb * b
        self.b = b

    def fresh_state(self):
        a = np.zeros((self.t + 1, self.i, self.j), dtype=np.float64)
        ii, jj = np.meshgrid(np.arange(self.i), np.arange(self.j), indexing="ij")
        a[0] = ((ii * 31 + jj * 17) % 97).astype(np.float64) * 0.0625
        a[:, 0, :] = a[0, 0, :]
        a[:, -1, :] = a[0, -1, :]
        a[:, :, 0] = a[0, :, 0][None, :]
        a[:, :, -1] = a[0, :, -1][None, :]
        return a

    def execute(self, a, node, z):
        t, ib, jb = z
        r = t + 1
        b = self.b
        ilo, ihi = max(1, ib * b), min(self.i - 2, (ib + 1) * b - 1)
        jlo, jhi = max(1, jb * b), min(self.j - 2, (jb + 1) * b - 1)
        if ilo > ihi or jlo > jhi:
            return
        prev = a[r - 1]
        a[r, ilo:ihi + 1, jlo:jhi + 1] = (
            4.0 * prev[ilo:ihi + 1, jlo:jhi + 1]
            + prev[ilo - 1:ihi, jlo:jhi + 1]
            + prev[ilo + 1:ihi + 2, jlo:jhi + 1]
            + prev[ilo:ihi + 1, jlo - 1:jhi]
            + prev[ilo:ihi + 1, jlo + 1:jhi + 2]
        ) * 0.125

    def outputs(self, a):
        return {"A": a.copy()}

    def reference(self):
        a = self.fresh_state()
        for r in range(1, self.t + 1):
            prev = a[r - 1]
            a[r, 1:-1, 1:-1] = (
                4.0 * prev[1:-1, 1:-1] + prev[:-2, 1:-1] + prev[2:, 1:-1]
                + prev[1:-1, :-2] + prev[1:-1, 2:]
            ) * 0.125
        return {"A": a.copy()}


class LtmiKernel:
    """Integer surrogate with the lower-triangular in-place dependence shape.

    One point per tile over {0 <= k <= j <= i < N}: each cell folds its three
    predecessors (along k, then the column update along j, then the panel
    update along i) into a ring value.
    """

    def __init__(self, nb: int):
        self.n = nb

    def fresh_state(self):
        return np.zeros((self.n,) * 3, dtype=np.int64)

    def execute(self, v, node, z):
        i, j, k = z
        acc = 1 + i + 2 * j + 3 * k
        if k >= 1:
            acc += v[i, j, k - 1]
        if j >= 1 and k <= j - 1:
            acc += v[i, j - 1, k]
        if i >= 1 and j <= i - 1:
            acc += v[i - 1, j, k]
        v[i, j, k] = acc % MOD

    def outputs(self, v):
        return {"V": v.copy()}

    def reference(self):
        v = np.zeros((self.n,) * 3, dtype=np.int64)
        for i in range(self.n):
            for j in range(i + 1):
                for k in range(j + 1):
                    acc = 1 + i + 2 * j + 3 * k
                    if k >= 1:
                        acc += v[i, j, k - 1]
                    if j >= 1 and k <= j - 1:
                        acc += v[i, j - 1, k]
                    if i >= 1 and j <= i - 1:
                        acc += v[i - 1, j, k]
                    v[i, j, k] = acc % MOD
        return {"V": v.copy()}


class NullKernel:
    """Trace-only kernel for verification runs on arbitrary graphs."""

    def fresh_state(self):
        return None

    def execute(self, state, node, z):
        pass

    def outputs(self, state):
        return {}


# ---------------------------------------------------------------------------
# Benchmark catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MappingInfo:
    schedule_file: str
    checks_interior: Optional[int]       # expected interior sync checks per tile
    tiles_per_task: Optional[Callable]   # params dict -> expected tiles per task
    tiles_formula: str


@dataclass(frozen=True)
class Benchmark:
    id: str
    description: str
    dims: int
    dependence_pattern: str
    prdg_file: str
    mappings: dict
    desk_params: dict
    sweep_params: Callable            # scale factor (1, 2, 4, ...) -> params dict
    make_kernel: Callable             # params dict -> kernel
    wavefront: Optional[Callable] = None  # tile -> wave; None means sum of coords


def _rex2d_kernel(params):
    return Rex2dKernel(params["M_b"], params["N_b"])


def _rex3d_kernel(params):
    return Rex3dKernel(params["N_b"])


def _jacobi1d_kernel(params):
    return Jacobi1dKernel(params["T_b"], params["I_b"])


def _jacobi2d_kernel(params):
    return Jacobi2dKernel(params["T_b"], params["I_b"], params["J_b"])


def _ltmi_kernel(params):
    return LtmiKernel(params["N_b"])


BENCHMARKS = {
    "rex2d": Benchmark(
        id="rex2d",
        description="2D running-example recurrence, tiled, column mapping",
        dims=2,
        dependence_pattern="uniform (-1,0) and (0,-1)",
        prdg_file="rex2d.prdg.json",
        mappings={
            1: MappingInfo("rex2d.sched1.json", 1,
                           lambda p: p["N_b"] + 1, "N/b"),
        },
        desk_params={"M_b": 63, "N_b": 63},
        sweep_params=lambda f: {"M_b": 8 * f - 1, "N_b": 8 * f - 1},
        make_kernel=_rex2d_kernel,
    ),
    "rex3d": Benchmark(
        id="rex3d",
        description="3D recurrence over a cube, plane or pencil mapping",
        dims=3,
        dependence_pattern="uniform (-1,0,0), (0,-1,0), (0,0,-1)",
        prdg_file="rex3d.prdg.json",
        mappings={
            1: MappingInfo("rex3d.sched1.json", 1,
                           lambda p: p["N_b"] ** 2, "(N/b)^2"),
            2: MappingInfo("rex3d.sched2.json", 2,
                           lambda p: p["N_b"], "N/b"),
        },
        desk_params={"N_b": 8},
        sweep_params=lambda f: {"N_b": 4 * f},
        make_kernel=_rex3d_kernel,
    ),
    "jacobi1d": Benchmark(
        id="jacobi1d",
        description="1D 3-point stencil over time, skewed time-band mapping",
        dims=2,
        dependence_pattern="uniform (-1,a) for a in {-1,0,1}",
        prdg_file="jacobi1d.prdg.json",
        mappings={
            1: MappingInfo("jacobi1d.sched1.json", 1,
                           lambda p: p["I_b"], "N/b"),
        },
        desk_params={"T_b": 64, "I_b": 256},
        sweep_params=lambda f: {"T_b": 8 * f, "I_b": 16 * f},
        make_kernel=_jacobi1d_kernel,
        wavefront=lambda z: 2 * z[0] + z[1],
    ),
    "jacobi2d": Benchmark(
        id="jacobi2d",
        description="2D 5-point stencil over time, skewed mappings",
        dims=3,
        dependence_pattern="uniform (-1,a,0) and (-1,0,b), cross pattern",
        prdg_file="jacobi2d.prdg.json",
        mappings={
            1: MappingInfo("jacobi2d.sched1.json", 1,
                           lambda p: p["I_b"] * p["J_b"], "(N/b)^2"),
            2: MappingInfo("jacobi2d.sched2.json", 3,
                           lambda p: p["J_b"], "N/b"),
        },
        desk_params={"T_b": 16, "I_b": 32, "J_b": 32},
        sweep_params=lambda f: {"T_b": 4 * f, "I_b": 8 * f, "J_b": 8 * f},
        make_kernel=_jacobi2d_kernel,
        wavefront=lambda z: 2 * z[0] + z[1] + z[2],
    ),
    "ltmi": Benchmark(
        id="ltmi",
        description="lower-triangular in-place pattern (integer surrogate)",
        dims=3,
        dependence_pattern="uniform along k, column along j, panel along i",
        prdg_file="ltmi.prdg.json",
        mappings={
            1: MappingInfo("ltmi.sched1.json", 1, None,
                           "(N/b)^2 asymptotically; per-VP (i+1)(i+2)/2"),
        },
        desk_params={"N_b": 8},
        sweep_params=lambda f: {"N_b": 4 * f},
        make_kernel=_ltmi_kernel,
    ),
}


def dump_grid_csv(outputs: dict, path) -> None:
    """Debug dump: each named grid flattened to rows of index..., value."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for name in sorted(outputs):
            arr = np.asarray(outputs[name])
            w.writerow([name, str(arr.dtype)] + list(arr.shape))
            for idx in np.ndindex(*arr.shape):
                w.writerow(list(idx) + [arr[idx]])


def kernel_catalog() -> list:
    """Stable benchmark listing: id, dims, dependence pattern, mappings."""
    out = []
    for bid in sorted(BENCHMARKS):
        b = BENCHMARKS[bid]
        out.append({
            "id": b.id,
            "dims": b.dims,
            "dependence_pattern": b.dependence_pattern,
            "mappings": sorted(b.mappings),
            "description": b.description,
        })
    return out


def reference_eval(bench_id: str, params: dict) -> dict:
    """Canonical sequential output of a benchmark; pure."""
    bench = BENCHMARKS[bench_id]
    return bench.make_kernel(params).reference()


# ---------------------------------------------------------------------------
# Fixture builders (the shipped data files are generated from these; a test
# keeps them in sync)
# ---------------------------------------------------------------------------

def build_jacobi1d_prdg() -> dict:
    box = ["t >= 0", "t <= T_b - 1", "i >= 0", "i <= I_b - 1"]
    time_guard = ["t >= 1", "t <= T_b - 1"]

    def dep(a):
        return {"dst": "S", "map": ["t - 1", f"i + {a}" if a >= 0 else f"i - {-a}"]}

    return {
        "notes": "Unit time tiles: tile (t, i) runs time step t+1 on space block i. "
                 "All three stencil legs cross into the previous time row.",
        "params": ["T_b", "I_b"],
        "nodes": [{"name": "S", "dims": ["t", "i"], "domain": box}],
        "edges": [
            {"name": "j1", "src": "S",
             "domain": time_guard + ["i >= 1", "i <= I_b - 2"],
             "deps": [dep(-1), dep(0), dep(1)]},
            {"name": "j2", "src": "S", "domain": time_guard + ["i = 0", "i <= I_b - 2"],
             "deps": [dep(0), dep(1)]},
            {"name": "j3", "src": "S", "domain": time_guard + ["i = I_b - 1", "i >= 1"],
             "deps": [dep(-1), dep(0)]},
        ],
    }


def build_jacobi2d_prdg() -> dict:
    box = ["t >= 0", "t <= T_b - 1", "i >= 0", "i <= I_b - 1",
           "j >= 0", "j <= J_b - 1"]
    tg = ["t >= 1", "t <= T_b - 1"]

    def dep(a, b):
        mi = f"i + {a}" if a >= 0 else f"i - {-a}"
        mj = f"j + {b}" if b >= 0 else f"j - {-b}"
        return {"dst": "S", "map": ["t - 1", mi, mj]}

    def region(iguard, ia, jguard, jb):
        deps = [dep(a, 0) for a in ia] + [dep(0, b) for b in jb if b != 0]
        return {"src": "S", "domain": tg + iguard + jguard, "deps": deps}

    i_regions = [
        (["i = 0", "i <= I_b - 2"], (0, 1)),
        (["i >= 1", "i <= I_b - 2"], (-1, 0, 1)),
        (["i = I_b - 1", "i >= 1"], (-1, 0)),
    ]
    j_regions = [
        (["j = 0", "j <= J_b - 2"], (1,)),
        (["j >= 1", "j <= J_b - 2"], (-1, 1)),
        (["j = J_b - 1", "j >= 1"], (-1,)),
    ]
    edges = []
    n = 1
    for iguard, ia in i_regions:
        for jguard, jb in j_regions:
            e = region(iguard, ia, jguard, jb)
            e["name"] = f"j{n}"
            n += 1
            edges.append(e)
    return {
        "notes": "Unit time tiles over the plain (t, i, j) tile grid; the "
                 "shipped mappings put the skew in the schedule. The printed "
                 "form of mapping 2 reuses mapping 1's row text with a wider "
                 "processor split; the j/k lettering there is a typo for the "
                 "(i, j) space dims, which is what these fixtures implement.",
        "params": ["T_b", "I_b", "J_b"],
        "nodes": [{"name": "S", "dims": ["t", "i", "j"], "domain": box}],
        "edges": edges,
    }


def build_rex3d_prdg() -> dict:
    box = ["i >= 0", "i <= N_b - 1", "j >= 0", "j <= N_b - 1",
           "k >= 0", "k <= N_b - 1"]
    dims = ["i", "j", "k"]
    edges = []
    n = 1
    for fi in (0, 1):
        for fj in (0, 1):
            for fk in (0, 1):
                if not (fi or fj or fk):
                    continue
                guards = []
                deps = []
                for d, flag in zip(dims, (fi, fj, fk)):
                    if flag:
                        guards.append(f"{d} >= 1")
                        deps.append({
                            "dst": "S",
                            "map": [f"{x} - 1" if x == d else x for x in dims],
                        })
                    else:
                        guards.append(f"{d} = 0")
                edges.append({"name": f"r{n}", "src": "S",
                              "domain": box + guards, "deps": deps})
                n += 1
    return {
        "notes": "Cube of tiles with the three backward unit dependences, "
                 "split by which faces the tile touches.",
        "params": ["N_b"],
        "nodes": [{"name": "S", "dims": dims, "domain": box}],
        "edges": edges,
    }


def build_ltmi_prdg() -> dict:
    dom = ["i >= 0", "i <= N_b - 1", "j >= 0", "j <= i", "k >= 0", "k <= j"]
    return {
        "notes": "Triangular tile domain 0 <= k <= j <= i < N_b with one point "
                 "per tile; guards keep every target inside the triangle.",
        "params": ["N_b"],
        "nodes": [{"name": "S", "dims": ["i", "j", "k"], "domain": dom}],
        "edges": [
            {"name": "lk", "src": "S", "domain": dom + ["k >= 1"],
             "deps": [{"dst": "S", "map": ["i", "j", "k - 1"]}]},
            {"name": "lj", "src": "S", "domain": dom + ["j >= 1", "k <= j - 1"],
             "deps": [{"dst": "S", "map": ["i", "j - 1", "k"]}]},
            {"name": "li", "src": "S", "domain": dom + ["i >= 1", "j <= i - 1"],
             "deps": [{"dst": "S", "map": ["i - 1", "j", "k"]}]},
        ],
    }


def build_schedule(rows: dict, n: int, k: int, notes: str = "") -> dict:
    doc = {"n": n, "k": k, "maps": {name: {"rows": r} for name, r in rows.items()}}
    if notes:
        doc["notes"] = notes
    return doc


FIXTURE_BUILDERS = {
    "jacobi1d.prdg.json": build_jacobi1d_prdg,
    "jacobi2d.prdg.json": build_jacobi2d_prdg,
    "rex3d.prdg.json": build_rex3d_prdg,
    "ltmi.prdg.json": build_ltmi_prdg,
    "jacobi1d.sched1.json": lambda: build_schedule(
        {"S": ["t", "2*t + i"]}, 2, 1, "time-band processor t, skewed local time"),
    "jacobi2d.sched1.json": lambda: build_schedule(
        {"S": ["t", "2*t + i", "2*t + j"]}, 3, 1, "processor t, skewed 2D time"),
    "jacobi2d.sched2.json": lambda: build_schedule(
        {"S": ["t", "2*t + i", "2*t + j"]}, 3, 2,
        "processors (t, 2t+i), skewed 1D time"),
    "rex3d.sched1.json": lambda: build_schedule(
        {"S": ["i", "j", "k"]}, 3, 1, "processor i, time (j, k)"),
    "rex3d.sched2.json": lambda: build_schedule(
        {"S": ["i", "j", "k"]}, 3, 2, "processors (i, j), time k"),
    "ltmi.sched1.json": lambda: build_schedule(
        {"S": ["i", "j", "k"]}, 3, 1, "processor i, time (j, k)"),
}
