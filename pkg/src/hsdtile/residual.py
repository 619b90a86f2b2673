"""Residual dependence construction: split each dependence into the part the
schedule orders statically and the part the runtime must enforce.

For every non-input pair, the retained domain is D intersected with the set
where consumer and producer processors differ (an exact integer split via
``neq_set``).  Input-targeted pairs are removed outright: live-in data exists
before execution starts.  Pieces proved empty are deleted; in symbolic mode a
piece with Unknown emptiness is retained, which over-approximates the true
residual set and is safe for the runtime (extra acquire checks are satisfied
immediately by already-published state entries).

Every retained pair records provenance (source edge, pair index, piece index)
so runtime waits can be reported in terms of the original program dependence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .affine import enumerate_points, is_empty, neq_set
from .errors import CoordinateMismatch
from .prdg import HyperEdge, IoPair, Prdg
from .schedule import HsdSchedule, reindex_to_spacetime


@dataclass(frozen=True)
class ResidualPrdg:
    graph: Prdg
    coords: str = "original"  # "original" tile indices or "spacetime"

    @property
    def edges(self):
        return self.graph.edges


def residualize(g: Prdg, sch: HsdSchedule, s: Optional[Sequence[int]] = None,
                keep_all_instances: bool = False) -> ResidualPrdg:
    """Build the residual PRDG under a schedule.

    Concrete mode when ``s`` is given (emptiness decided exactly at those
    sizes); symbolic mode otherwise (Unknown pieces are retained).  With
    ``keep_all_instances`` the processor-inequality restriction is skipped and
    every non-input pair is retained whole; that is the deliberate
    over-approximation used by the safety tests.
    """
    sval = None if s is None else tuple(s)
    inputs = {n.name for n in g.nodes if n.is_input}
    edges = []
    for edge in g.edges:
        groups: list[list] = []  # [domain, [pairs]]
        for idx, pair in enumerate(edge.pairs):
            if pair.dst in inputs:
                continue
            if keep_all_instances:
                pieces = [pair.domain]
            else:
                cons = sch.space_map(pair.src)
                prod = sch.space_map(pair.dst).compose(pair.map)
                pieces = list(neq_set(cons, prod, pair.domain).pieces)
            seen_pieces = set()
            for piece_idx, piece in enumerate(pieces):
                piece = piece.normalized()
                if piece.is_trivially_empty():
                    continue
                # Constant processor differences in several coordinates yield
                # syntactically identical pieces; keep one.
                if piece in seen_pieces:
                    continue
                seen_pieces.add(piece)
                if sval is not None:
                    if is_empty(piece.substitute_params(sval)).is_empty:
                        continue
                else:
                    if is_empty(piece).is_empty:
                        continue
                new_pair = IoPair(pair.src, pair.dst, piece, pair.map,
                                  provenance=(edge.name, idx, piece_idx))
                for entry in groups:
                    if entry[0] == piece:
                        entry[1].append(new_pair)
                        break
                else:
                    groups.append([piece, [new_pair]])
        multi = len(groups) > 1
        for gi, (dom, pairs) in enumerate(groups):
            name = f"{edge.name}.{gi + 1}" if multi else edge.name
            edges.append(HyperEdge(name, edge.src, dom, tuple(pairs)))
    return ResidualPrdg(Prdg(g.params, g.nodes, tuple(edges), g.derived_params))


def reindex_residual(r: ResidualPrdg, sch: HsdSchedule) -> ResidualPrdg:
    """Bring a residual PRDG into space-time coordinates (provenance preserved)."""
    if r.coords != "original":
        raise CoordinateMismatch("residual is already in space-time coordinates")
    st = reindex_to_spacetime(r.graph, sch)
    return ResidualPrdg(st.graph, coords="spacetime")


def residual_instances(r: ResidualPrdg, s: Sequence[int]):
    """All retained dependence instances: set of (src, z, dst, f(z))."""
    out = set()
    sval = tuple(s)
    for edge in r.graph.edges:
        for pair in edge.pairs:
            for z in enumerate_points(pair.domain, sval):
                out.add((pair.src, z, pair.dst, pair.map.apply(z, sval)))
    return out


@dataclass(frozen=True)
class Uncovered:
    edge: str
    pair_index: int
    witness: tuple
    reason: str


@dataclass
class CoverageReport:
    static_count: int = 0
    residual_count: int = 0
    uncovered: list = field(default_factory=list)
    both: list = field(default_factory=list)  # instances counted on both sides

    @property
    def ok(self) -> bool:
        return not self.uncovered

    def summary(self) -> str:
        base = (f"{self.static_count} statically ordered, "
                f"{self.residual_count} residual")
        if self.ok:
            return base
        return base + f", {len(self.uncovered)} UNCOVERED"


def coverage_check(g: Prdg, sch: HsdSchedule, r: ResidualPrdg,
                   s: Sequence[int]) -> CoverageReport:
    """Safety net: every non-input dependence instance must be either
    statically ordered (same processor, consumer time strictly after) or
    present in the residual's retained domains."""
    if r.coords != "original":
        raise CoordinateMismatch("coverage_check expects the residual in "
                                 "original (pre-schedule) coordinates")
    sval = tuple(s)
    report = CoverageReport()
    retained = {}
    for edge in r.graph.edges:
        for pair in edge.pairs:
            src_edge, src_idx, _ = pair.provenance
            retained.setdefault((src_edge, src_idx), []).append(pair.domain)
    for edge, idx, pair in g.compute_pairs():
        cons_s = sch.space_map(pair.src)
        cons_t = sch.time_map(pair.src)
        prod_s = sch.space_map(pair.dst).compose(pair.map)
        prod_t = sch.time_map(pair.dst).compose(pair.map)
        domains = retained.get((edge.name, idx), [])
        for z in enumerate_points(pair.domain, sval):
            in_residual = any(dom.contains(z, sval) for dom in domains)
            static = (cons_s.apply(z, sval) == prod_s.apply(z, sval)
                      and tuple(cons_t.apply(z, sval)) > tuple(prod_t.apply(z, sval)))
            if static:
                report.static_count += 1
                if in_residual:
                    report.both.append((edge.name, idx, z))
            elif in_residual:
                report.residual_count += 1
            else:
                report.uncovered.append(Uncovered(
                    edge.name, idx, z,
                    "neither statically ordered nor retained in the residual",
                ))
    return report
