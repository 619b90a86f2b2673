"""Rectangular fixed-size tiling of uniform-dependence PRDGs.

``tile_uniform`` turns a point-level PRDG whose node domains are boxes and
whose real dependences are uniform (f(z) = z + d with |d_i| <= b_i) into the
tile-level PRDG: domains become floor-divided tile boxes (introducing derived
size parameters like M_b = floor(M / b) for parametric upper bounds), and each
offset d becomes the set of inter-tile pairs with tile offsets in
{0, sign(d_i)} per dimension, each restricted exactly to the consumer tiles
containing at least one point with that boundary-crossing pattern.  All-zero
tile offsets (intra-tile dependences) are dropped: tiles execute atomically.

Dependences targeting input nodes are carried over without crossing analysis
(they are never synchronized); their map components must be plain point
indices or constants.

The independent check for all of this is the projection oracle: enumerate the
point-level dependence instances, map both endpoints through z -> floor(z/b),
deduplicate and drop zero offsets.  ``projection_oracle`` implements it for
the tests.
"""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

from .affine import AffineMap, Constraint, ConstraintKind, PolyUnion, Polyhedron, enumerate_points
from .errors import NonRectangularDomain, NonUniformDependence
from .prdg import DerivedParam, HyperEdge, IoPair, Prdg, PrdgNode

# Raw rows carry a param marker instead of a widened coefficient vector:
# None (no parameter) or (param_index_in_final_space, coefficient).
_RawRow = tuple  # (dim coefs, marker, const, kind)


def _box_bounds(piece: Polyhedron, where: str):
    """Extract per-dim (lo, hi) from a box piece.

    lo must be an integer constant; hi may be an integer or (param_idx, offset)
    meaning "parameter + offset".
    """
    lo: list[Optional[int]] = [None] * piece.dim
    hi: list = [None] * piece.dim

    def set_lower(i, value):
        if lo[i] is None or value > lo[i]:
            lo[i] = value

    def set_upper(i, value, where=where):
        if hi[i] is None:
            hi[i] = value
        elif isinstance(hi[i], int) and isinstance(value, int):
            hi[i] = min(hi[i], value)
        else:
            raise NonRectangularDomain(
                f"{where}: multiple parametric upper bounds on one dimension"
            )

    for row in piece.rows:
        nz = [(i, c) for i, c in enumerate(row.coef) if c != 0]
        if len(nz) != 1 or abs(nz[0][1]) != 1:
            raise NonRectangularDomain(f"{where}: row is not a single-variable bound")
        i, c = nz[0]
        pnz = [(j, pc) for j, pc in enumerate(row.param) if pc != 0]
        if row.kind is ConstraintKind.EQ:
            if pnz:
                raise NonRectangularDomain(f"{where}: parametric equality bound")
            val = -row.const if c == 1 else row.const
            set_lower(i, val)
            set_upper(i, val)
        elif c == 1:
            if pnz:
                raise NonRectangularDomain(f"{where}: parametric lower bound")
            set_lower(i, -row.const)
        else:
            if not pnz:
                set_upper(i, row.const)
            elif len(pnz) == 1 and pnz[0][1] == 1:
                set_upper(i, (pnz[0][0], row.const))
            else:
                raise NonRectangularDomain(f"{where}: upper bound uses several parameters")
    for i in range(piece.dim):
        if lo[i] is None or hi[i] is None:
            raise NonRectangularDomain(f"{where}: dimension {i} lacks a finite bound")
    return list(zip(lo, hi))


class _Deriver:
    """Allocates floor-divided size parameters (M_b = floor((M + off) / b)).

    Derived parameters are appended after the base ones, so base indices keep
    their positions in the tiled parameter space.
    """

    def __init__(self, base_params: Sequence[str]):
        self.base = list(base_params)
        self.derived: list[DerivedParam] = []
        self._index: dict = {}

    def get(self, param_idx: int, divisor: int, offset: int) -> int:
        key = (param_idx, divisor, offset)
        if key not in self._index:
            base_name = self.base[param_idx]
            taken = {d.name for d in self.derived}
            name = f"{base_name}_b"
            k = 2
            while name in taken or name in self.base:
                name = f"{base_name}_b{k}"
                k += 1
            self.derived.append(DerivedParam(name, base_name, divisor, offset))
            self._index[key] = len(self.base) + len(self.derived) - 1
        return self._index[key]

    @property
    def width(self) -> int:
        return len(self.base) + len(self.derived)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.base) + tuple(d.name for d in self.derived)


def _unit(dim: int, i: int, scale: int = 1) -> tuple[int, ...]:
    return tuple(scale if j == i else 0 for j in range(dim))


def _finalize_rows(raw_rows: Sequence[_RawRow], dim: int, width: int) -> Polyhedron:
    rows = []
    for coef, marker, const, kind in raw_rows:
        if marker is None:
            par = (0,) * width
        else:
            idx, pc = marker
            par = tuple(pc if j == idx else 0 for j in range(width))
        rows.append(Constraint(coef, par, const, kind))
    return Polyhedron(dim, width, tuple(rows))


def _tile_node_piece(piece: Polyhedron, b: Sequence[int], deriver: _Deriver,
                     where: str) -> list[_RawRow]:
    bounds = _box_bounds(piece, where)
    dim = piece.dim
    rows: list[_RawRow] = []
    for i, (lo, hi) in enumerate(bounds):
        tlo = lo // b[i]
        if isinstance(hi, int):
            thi = hi // b[i]
            if tlo == thi:
                rows.append((_unit(dim, i), None, -tlo, ConstraintKind.EQ))
                continue
            rows.append((_unit(dim, i), None, -tlo, ConstraintKind.GE))
            rows.append((_unit(dim, i, -1), None, thi, ConstraintKind.GE))
        else:
            pidx, off = hi
            dp = deriver.get(pidx, b[i], off)
            rows.append((_unit(dim, i), None, -tlo, ConstraintKind.GE))
            rows.append((_unit(dim, i, -1), (dp, 1), 0, ConstraintKind.GE))
    return rows


def _edge_dim_rows(i: int, dim: int, b: int, lo: int, hi, d: int,
                   crossing: bool) -> list[_RawRow]:
    """Rows over tile variable t_i selecting consumer tiles that contain a
    point of the edge box whose dependence crosses (or stays inside) the tile
    boundary in this dimension."""
    rows: list[_RawRow] = []

    def lower(slack: int):
        # b*t_i + slack >= lo
        rows.append((_unit(dim, i, b), None, slack - lo, ConstraintKind.GE))

    def upper(slack: int):
        # b*t_i <= hi + slack
        if isinstance(hi, int):
            rows.append((_unit(dim, i, -b), None, hi + slack, ConstraintKind.GE))
        else:
            pidx, off = hi
            rows.append((_unit(dim, i, -b), (pidx, 1), off + slack, ConstraintKind.GE))

    if d == 0:
        lower(b - 1)
        upper(0)
    elif crossing:
        if d < 0:
            lower(-d - 1)        # first |d| cells of the tile
            upper(0)
        else:
            lower(b - 1)
            upper(-(b - d))      # last d cells: b*t + b - d <= hi
    else:
        if d < 0:
            lower(b - 1)
            upper(d)             # needs a cell at offset >= |d|: b*t + |d| <= hi
        else:
            lower(b - 1 - d)     # needs a cell at offset <= b-1-d
            upper(0)
    return rows


def tile_uniform(g: Prdg, tile_sizes: Sequence[int]) -> Prdg:
    """Tile a uniform-dependence box PRDG with fixed rectangular tile sizes."""
    b = [int(x) for x in tile_sizes]
    if any(x < 1 for x in b):
        raise NonUniformDependence("tile sizes must be positive")
    ndims = {len(n.dims) for n in g.nodes}
    if len(ndims) != 1 or next(iter(ndims)) != len(b):
        raise NonRectangularDomain("all nodes must share the tiled dimensionality")
    dim = len(b)
    deriver = _Deriver(g.params)
    inputs = {n.name for n in g.nodes if n.is_input}

    # Nodes first: their parametric upper bounds mint the derived parameters.
    node_raw = {
        n.name: [
            _tile_node_piece(piece, b, deriver, f"node {n.name} piece {k}")
            for k, piece in enumerate(n.domain.pieces)
        ]
        for n in g.nodes
    }

    edge_specs = []
    for edge in g.edges:
        bounds = _box_bounds(edge.domain, f"edge {edge.name}")
        groups: list[list] = []  # [key_rows, [(dst, map, provenance), ...]]

        def add_pair(raw_rows, dst, tmap, prov, groups=groups):
            key = tuple(raw_rows)
            for entry in groups:
                if entry[0] == key:
                    entry[1].append((dst, tmap, prov))
                    return
            groups.append([key, [(dst, tmap, prov)]])

        for pidx, pair in enumerate(edge.pairs):
            if pair.dst in inputs:
                comp_rows = []
                for r in range(pair.map.out_dim):
                    lin = pair.map.linear[r]
                    if any(pair.map.param[r]):
                        raise NonUniformDependence(
                            f"edge {edge.name}: parametric input-node map"
                        )
                    nz = [(j, c) for j, c in enumerate(lin) if c != 0]
                    if not nz:
                        comp_rows.append(((0,) * dim, (), pair.map.const[r] // b[r]))
                    elif len(nz) == 1 and nz[0][1] == 1 and pair.map.const[r] == 0:
                        comp_rows.append((_unit(dim, nz[0][0]), (), 0))
                    else:
                        raise NonUniformDependence(
                            f"edge {edge.name}: input-node map component {r} is not "
                            "a plain index or constant"
                        )
                raw = []
                for i, (lo, hi) in enumerate(bounds):
                    raw.extend(_edge_dim_rows(i, dim, b[i], lo, hi, 0, False))
                tmap = AffineMap.from_rows(comp_rows, in_dim=dim)
                add_pair(raw, pair.dst, tmap, (edge.name, pidx))
                continue

            ident = AffineMap.identity(pair.map.in_dim, pair.map.n_params)
            if (pair.map.in_dim != dim or pair.map.out_dim != dim
                    or pair.map.linear != ident.linear
                    or any(any(rw) for rw in pair.map.param)):
                raise NonUniformDependence(
                    f"edge {edge.name} pair {pidx}: dependence is not z + d"
                )
            d = pair.map.const
            for i in range(dim):
                if abs(d[i]) > b[i]:
                    raise NonUniformDependence(
                        f"edge {edge.name} pair {pidx}: |d_{i}| = {abs(d[i])} exceeds "
                        f"tile size {b[i]}"
                    )
            choices = []
            for i in range(dim):
                if d[i] == 0:
                    choices.append((0,))
                elif abs(d[i]) == b[i]:
                    choices.append((1 if d[i] > 0 else -1,))
                else:
                    choices.append((0, 1 if d[i] > 0 else -1))
            same_node = pair.src == pair.dst
            for delta in itertools.product(*choices):
                if same_node and not any(delta):
                    # Same-signature, same-tile: satisfied by atomic execution.
                    continue
                raw = []
                for i, (lo, hi) in enumerate(bounds):
                    raw.extend(_edge_dim_rows(i, dim, b[i], lo, hi, d[i], delta[i] != 0))
                tmap = AffineMap.from_rows(
                    [(_unit(dim, i), (), delta[i]) for i in range(dim)], in_dim=dim
                )
                add_pair(raw, pair.dst, tmap, (edge.name, pidx))
        edge_specs.append((edge, groups))

    width = deriver.width
    params = deriver.names

    def widen_map(m: AffineMap) -> AffineMap:
        return AffineMap(m.in_dim, width, m.linear,
                         tuple((0,) * width for _ in range(m.out_dim)), m.const)

    nodes = []
    for n in g.nodes:
        pieces = tuple(_finalize_rows(raw, dim, width) for raw in node_raw[n.name])
        dims = tuple(f"{d}_b" for d in n.dims)
        nodes.append(PrdgNode(n.name, dims, PolyUnion(dim, width, pieces), n.is_input))

    edges = []
    for edge, groups in edge_specs:
        multi = len(groups) > 1
        for k, (key, members) in enumerate(groups):
            dom = _finalize_rows(key, dim, width)
            name = f"{edge.name}.{k + 1}" if multi else edge.name
            io = tuple(
                IoPair(edge.src, dst, dom, widen_map(m), prov)
                for dst, m, prov in members
            )
            edges.append(HyperEdge(name, edge.src, dom, io))

    return Prdg(params, tuple(nodes), tuple(edges), tuple(deriver.derived))


def projection_oracle(g: Prdg, tile_sizes: Sequence[int], param_values: Sequence[int]):
    """Reference inter-tile dependence set, from point-level enumeration.

    Returns the set of (consumer node, consumer tile, producer node, producer
    tile) with same-node equal-tile entries dropped.  This is the mandated
    independent check for ``tile_uniform``.
    """
    b = list(tile_sizes)
    s = tuple(param_values)
    out = set()
    for edge in g.edges:
        for pair in edge.pairs:
            for z in enumerate_points(edge.domain, s):
                tgt = pair.map.apply(z, s)
                tz = tuple(x // bb for x, bb in zip(z, b))
                tt = tuple(x // bb for x, bb in zip(tgt, b))
                if pair.src == pair.dst and tz == tt:
                    continue
                out.add((pair.src, tz, pair.dst, tt))
    return out


def tiled_instances(tiled: Prdg, param_values: Sequence[int]):
    """Enumerated dependence instance set of a tiled PRDG (same shape as the oracle)."""
    s = tuple(param_values)
    out = set()
    for edge in tiled.edges:
        for pair in edge.pairs:
            for z in enumerate_points(pair.domain, s):
                tgt = pair.map.apply(z, s)
                if pair.src == pair.dst and tgt == z:
                    continue
                out.add((pair.src, z, pair.dst, tgt))
    return out
