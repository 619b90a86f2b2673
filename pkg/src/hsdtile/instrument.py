"""Build the executable tile program: acquire clauses first, tile body, update last.

For each node with residual dependences, every residual hyper-edge becomes one
acquire clause (pairs sharing the edge domain are grouped into a single clause
with several targets).  A clause target is the producer node plus the split
dependence map: the processor part gives which state entry to check, the time
part gives the minimum time tuple that entry must have reached.  The update
step is implicit: every executed tile publishes its own time tuple as its last
action, and the update domain is by construction the union of all node domains.

Acquire clauses are data, not generated statements, so the same TileProgram
drives both the embedded runtime and the source emitters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .affine import AffineMap, PolyUnion, Polyhedron
from .errors import CoordinateMismatch, UnknownNodeError
from .exprs import render_constraint, render_map
from .prdg import DerivedParam, Prdg
from .residual import ResidualPrdg
from .schedule import SpaceTimePrdg, st_dim_names


@dataclass(frozen=True)
class AcquireTarget:
    producer: str
    space_map: AffineMap  # (p, t) -> producer processor coordinate
    time_map: AffineMap   # (p, t) -> producer time tuple to wait for
    provenance: Optional[tuple] = None


@dataclass(frozen=True)
class AcquireClause:
    domain: Polyhedron  # over space-time coordinates
    targets: tuple[AcquireTarget, ...]


@dataclass(frozen=True)
class NodeProgram:
    name: str
    domain: PolyUnion            # space-time tile instances of this signature
    clauses: tuple[AcquireClause, ...]
    to_tile: AffineMap           # inverse schedule: (p, t) -> original tile index
    kernel_id: str = ""


@dataclass(frozen=True)
class TileProgram:
    n: int
    k: int
    params: tuple[str, ...]
    derived_params: tuple[DerivedParam, ...]
    nodes: tuple[NodeProgram, ...]

    def node(self, name: str) -> NodeProgram:
        for np in self.nodes:
            if np.name == name:
                return np
        raise UnknownNodeError(f"tile program has no node {name!r}")

    def bind_params(self, values: dict) -> tuple[int, ...]:
        vals = dict(values)
        for d in self.derived_params:
            if d.name not in vals:
                vals[d.name] = (vals[d.base] + d.offset) // d.divisor
        return tuple(int(vals[p]) for p in self.params)


def build_tile_program(stg: SpaceTimePrdg, residual: ResidualPrdg) -> TileProgram:
    """Attach acquire clauses from a space-time residual to the space-time graph."""
    if residual.coords != "spacetime":
        raise CoordinateMismatch(
            "build_tile_program needs the residual reindexed into space-time "
            "coordinates (see residual.reindex_residual)"
        )
    if residual.graph.params != stg.graph.params:
        raise CoordinateMismatch("residual and graph parameter spaces differ")
    clauses_by_node: dict = {}
    for edge in residual.graph.edges:
        targets = []
        for pair in edge.pairs:
            space, time = stg.split(pair.map)
            targets.append(AcquireTarget(pair.dst, space, time, pair.provenance))
        clause = AcquireClause(edge.domain, tuple(targets))
        clauses_by_node.setdefault(edge.src, []).append(clause)
    nodes = []
    for node in stg.graph.nodes:
        if node.is_input:
            continue
        nodes.append(NodeProgram(
            name=node.name,
            domain=node.domain,
            clauses=tuple(clauses_by_node.get(node.name, ())),
            to_tile=stg.theta_inv[node.name],
            kernel_id=node.name,
        ))
    return TileProgram(stg.n, stg.k, stg.graph.params, stg.graph.derived_params,
                       tuple(nodes))


def acquire_obligations(tp: TileProgram, node: str, p: Sequence[int],
                        t: Sequence[int], s: Sequence[int] = ()) -> list:
    """Producer obligations of tile (p, t): list of (producer, p', t').

    Pure function of the coordinates; clauses are evaluated in their stored
    (deterministic) order and a clause contributes only when its domain
    contains the tile.
    """
    z = tuple(p) + tuple(t)
    out = []
    for clause in tp.node(node).clauses:
        if clause.domain.contains(z, s):
            for tgt in clause.targets:
                out.append((tgt.producer, tgt.space_map.apply(z, s),
                            tgt.time_map.apply(z, s)))
    return out


def tile_program_to_text(tp: TileProgram) -> str:
    """Structured-text dump (for the emitters and for debugging)."""
    dims = st_dim_names(tp.n, tp.k)
    doc = {"n": tp.n, "k": tp.k, "params": list(tp.params), "nodes": []}
    for np_ in tp.nodes:
        spec = {
            "name": np_.name,
            "domain": [
                [render_constraint(r, dims, tp.params) for r in piece.rows]
                for piece in np_.domain.pieces
            ],
            "acquire": [],
            "update": "state[%s][p] = t" % np_.name,
        }
        for clause in np_.clauses:
            spec["acquire"].append({
                "when": [render_constraint(r, dims, tp.params) for r in clause.domain.rows],
                "targets": [
                    {
                        "producer": tgt.producer,
                        "processor": render_map(tgt.space_map, dims, tp.params),
                        "time": render_map(tgt.time_map, dims, tp.params),
                        "provenance": list(tgt.provenance) if tgt.provenance else None,
                    }
                    for tgt in clause.targets
                ],
            })
        doc["nodes"].append(spec)
    return json.dumps(doc, indent=2) + "\n"


def compile_program(g: Prdg, sch, s: Optional[Sequence[int]] = None,
                    keep_all_instances: bool = False):
    """Pipeline convenience: residualize, reindex, instrument.

    Returns (TileProgram, SpaceTimePrdg, ResidualPrdg in original coords).
    """
    from .residual import reindex_residual, residualize
    from .schedule import reindex_to_spacetime

    r = residualize(g, sch, s, keep_all_instances=keep_all_instances)
    stg = reindex_to_spacetime(g, sch)
    tp = build_tile_program(stg, reindex_residual(r, sch))
    return tp, stg, r
