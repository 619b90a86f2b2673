"""Hybrid static/dynamic schedules: parsing, legality, deadlock checks, reindexing.

A schedule gives every node a bijective affine map into a common n-dimensional
space-time; the first k output dimensions are virtual-processor coordinates,
the remaining n-k are local lexicographic time.  Bijectivity is enforced as
unimodularity of the linear part, which also yields exact integer inverses.

Partial legality: whenever consumer and producer land on the same processor,
the consumer's time must be lexicographically strictly after the producer's.
Cross-processor pairs are left to the residual/runtime path.  Deadlock
freedom (for residual pairs, assuming processors are claimed in increasing
lexicographic order): consumer processor >= producer processor, lexicographically.

Checks run concretely (exhaustive enumeration at given sizes) or symbolically
(the violation set is encoded as a union of polyhedra via a lexicographic case
split and tested for emptiness; an Unknown answer is reported as "unproven",
never as legal).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .affine import (
    AffineMap,
    Constraint,
    ConstraintKind,
    Polyhedron,
    enumerate_points,
    is_empty,
)
from .errors import ScheduleFormatError, NotInvertible, UnknownNodeError
from .exprs import parse_map
from .prdg import HyperEdge, IoPair, Prdg, PrdgNode


@dataclass(frozen=True)
class HsdSchedule:
    n: int
    k: int
    maps: dict  # node name -> AffineMap (node dims -> n space-time dims)

    def map_of(self, node: str) -> AffineMap:
        try:
            return self.maps[node]
        except KeyError:
            raise UnknownNodeError(f"schedule has no map for node {node!r}") from None

    def space_map(self, node: str) -> AffineMap:
        return self.map_of(node).row_slice(0, self.k)

    def time_map(self, node: str) -> AffineMap:
        return self.map_of(node).row_slice(self.k, self.n)


def parse_schedule(text: str, g: Prdg) -> HsdSchedule:
    """Parse and validate a schedule file against a PRDG."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScheduleFormatError(
            f"JSON syntax error at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    try:
        n = int(doc["n"])
        k = int(doc["k"])
        raw_maps = doc["maps"]
    except (KeyError, TypeError) as e:
        raise ScheduleFormatError(f"schedule needs n, k and maps: {e}") from e
    if not 0 <= k <= n:
        raise ScheduleFormatError(f"need 0 <= k <= n, got k={k}, n={n}")
    maps = {}
    for node in g.nodes:
        if node.name not in raw_maps:
            raise ScheduleFormatError(f"missing map for node {node.name!r}")
        rows = raw_maps[node.name]["rows"]
        if len(rows) != n:
            raise ScheduleFormatError(
                f"node {node.name}: {len(rows)} rows, schedule dimension is {n}"
            )
        if len(node.dims) != n:
            raise ScheduleFormatError(
                f"node {node.name} has {len(node.dims)} dims; bijective schedules "
                f"need the node dimension to equal n={n}"
            )
        m = parse_map(rows, node.dims, g.params)
        try:
            m.invert()
        except NotInvertible as e:
            raise ScheduleFormatError(
                f"node {node.name}: map is not bijective ({e})"
            ) from e
        maps[node.name] = m
    extra = set(raw_maps) - {node.name for node in g.nodes}
    if extra:
        raise ScheduleFormatError(f"maps for unknown nodes: {sorted(extra)}")
    return HsdSchedule(n, k, maps)


def parse_schedule_file(path, g: Prdg) -> HsdSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_schedule(fh.read(), g)


# ---------------------------------------------------------------------------
# Legality and deadlock-freedom
# ---------------------------------------------------------------------------

class LegalityStatus(Enum):
    LEGAL = "legal"
    VIOLATIONS = "violations"
    UNPROVEN = "unproven"


@dataclass(frozen=True)
class Violation:
    edge: str
    pair_index: int
    witness: tuple
    consumer_space: tuple
    producer_space: tuple
    consumer_time: tuple
    producer_time: tuple
    reason: str


@dataclass
class LegalityReport:
    status: LegalityStatus
    violations: list = field(default_factory=list)
    unproven: list = field(default_factory=list)  # (edge, pair_index) in symbolic mode

    @property
    def legal(self) -> bool:
        return self.status is LegalityStatus.LEGAL

    def summary(self) -> str:
        if self.legal:
            return "legal"
        if self.status is LegalityStatus.UNPROVEN:
            return f"unproven for {len(self.unproven)} pair(s)"
        v = self.violations[0]
        return (f"{len(self.violations)} violation(s); first: edge {v.edge} pair "
                f"{v.pair_index} at {v.witness}: {v.reason}")


def _pair_parts(g: Prdg, sch: HsdSchedule, pair: IoPair):
    """(consumer space, consumer time, producer space, producer time) maps on z."""
    cs = sch.space_map(pair.src)
    ct = sch.time_map(pair.src)
    ps = sch.space_map(pair.dst).compose(pair.map)
    pt = sch.time_map(pair.dst).compose(pair.map)
    return cs, ct, ps, pt


def _map_diff_rows(a: AffineMap, b: AffineMap, rows_idx, kind, strict_row=None):
    """Constraints expressing a_i(z) ? b_i(z) for the selected rows."""
    out = []
    for i in rows_idx:
        coef = tuple(x - y for x, y in zip(a.linear[i], b.linear[i]))
        par = tuple(x - y for x, y in zip(a.param[i], b.param[i]))
        const = a.const[i] - b.const[i]
        out.append(Constraint(coef, par, const, kind))
    return out


def _lex_le_pieces(a: AffineMap, b: AffineMap, domain: Polyhedron) -> list[Polyhedron]:
    """Pieces of {z in domain | a(z) lex<= b(z)} (equality included)."""
    m = a.out_dim
    pieces = []
    for j in range(m):
        rows = _map_diff_rows(a, b, range(j), ConstraintKind.EQ)
        # a_j < b_j  <=>  b_j - a_j - 1 >= 0
        coef = tuple(y - x for x, y in zip(a.linear[j], b.linear[j]))
        par = tuple(y - x for x, y in zip(a.param[j], b.param[j]))
        const = b.const[j] - a.const[j] - 1
        rows.append(Constraint(coef, par, const, ConstraintKind.GE))
        pieces.append(domain.with_rows(rows).normalized())
    # all coordinates equal
    rows = _map_diff_rows(a, b, range(m), ConstraintKind.EQ)
    pieces.append(domain.with_rows(rows).normalized())
    return [p for p in pieces if not p.is_trivially_empty()]


def _check_pairs(g, sch, pairs, s, per_pair_violation, violation_pieces):
    """Shared driver: concrete enumeration (s given) or symbolic emptiness per pair."""
    report = LegalityReport(LegalityStatus.LEGAL)
    for edge, idx, pair in pairs:
        cs, ct, ps, pt = _pair_parts(g, sch, pair)
        if s is not None:
            for z in enumerate_points(pair.domain, s):
                v = per_pair_violation(edge, idx, pair, cs, ct, ps, pt, z, s)
                if v is not None:
                    report.violations.append(v)
        else:
            for piece in violation_pieces(pair, cs, ct, ps, pt):
                res = is_empty(piece)
                if res.is_nonempty:
                    # The piece encodes the violation, so re-evaluating at the
                    # witness must reproduce it; if it somehow does not, stay
                    # conservative and report the pair as unproven.
                    v = per_pair_violation(edge, idx, pair, cs, ct, ps, pt,
                                           res.witness, res.param_witness or ())
                    if v is not None:
                        report.violations.append(v)
                    else:
                        report.unproven.append((edge.name, idx))
                elif res.is_unknown:
                    report.unproven.append((edge.name, idx))
    if report.violations:
        report.status = LegalityStatus.VIOLATIONS
    elif report.unproven:
        report.status = LegalityStatus.UNPROVEN
    return report


def check_partial_legality(g: Prdg, sch: HsdSchedule,
                           s: Optional[Sequence[int]] = None) -> LegalityReport:
    """Same processor implies consumer time lexicographically after producer time.

    Concrete mode when ``s`` is given (exhaustive over every dependence
    instance); symbolic otherwise.  Input-targeted pairs are skipped.
    """
    def violation(edge, idx, pair, cs, ct, ps, pt, z, sval):
        pc, pp = cs.apply(z, sval), ps.apply(z, sval)
        if pc != pp:
            return None
        tc, tp = ct.apply(z, sval), pt.apply(z, sval)
        if tuple(tc) > tuple(tp):
            return None
        return Violation(edge.name, idx, tuple(z), pc, pp, tc, tp,
                         "same processor but consumer time not strictly after")

    def pieces(pair, cs, ct, ps, pt):
        base = pair.domain.with_rows(
            _map_diff_rows(cs, ps, range(sch.k), ConstraintKind.EQ)
        )
        return _lex_le_pieces(ct, pt, base)

    return _check_pairs(g, sch, g.compute_pairs(), None if s is None else tuple(s),
                        violation, pieces)


def check_deadlock_freedom(residual: Prdg, sch: HsdSchedule,
                           s: Optional[Sequence[int]] = None) -> LegalityReport:
    """Every residual pair must map producers to lex <= processors.

    ``residual`` is the output of residualize (already restricted to
    cross-processor instances); non-strict comparison exactly as specified.
    """
    def violation(edge, idx, pair, cs, ct, ps, pt, z, sval):
        pc, pp = cs.apply(z, sval), ps.apply(z, sval)
        if tuple(pc) >= tuple(pp):
            return None
        tc, tp = ct.apply(z, sval), pt.apply(z, sval)
        return Violation(edge.name, idx, tuple(z), pc, pp, tc, tp,
                         "producer processor lexicographically after consumer")

    def pieces(pair, cs, ct, ps, pt):
        # Violations: consumer processor lex < producer processor.
        strict = []
        for j in range(sch.k):
            rows = _map_diff_rows(cs, ps, range(j), ConstraintKind.EQ)
            coef = tuple(y - x for x, y in zip(cs.linear[j], ps.linear[j]))
            par = tuple(y - x for x, y in zip(cs.param[j], ps.param[j]))
            const = ps.const[j] - cs.const[j] - 1
            rows.append(Constraint(coef, par, const, ConstraintKind.GE))
            piece = pair.domain.with_rows(rows).normalized()
            if not piece.is_trivially_empty():
                strict.append(piece)
        return strict

    return _check_pairs(residual, sch, residual.compute_pairs(),
                        None if s is None else tuple(s), violation, pieces)


# ---------------------------------------------------------------------------
# Reindexing into common space-time coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceTimePrdg:
    """The PRDG rewritten so every domain and map ranges over (p, t) coordinates."""

    graph: Prdg
    n: int
    k: int
    theta: dict      # node -> original-to-space-time map
    theta_inv: dict  # node -> space-time-to-original map

    def split(self, m: AffineMap):
        """Split a space-time pair map into (processor part, time part)."""
        return m.row_slice(0, self.k), m.row_slice(self.k, self.n)


def st_dim_names(n: int, k: int) -> tuple[str, ...]:
    return tuple(f"p{i}" for i in range(k)) + tuple(f"t{i}" for i in range(n - k))


def reindex_to_spacetime(g: Prdg, sch: HsdSchedule) -> SpaceTimePrdg:
    """Rewrite nodes, domains, and dependences through the schedule maps.

    Node domains become images theta(dom); each pair map f becomes
    theta_Y o f o theta_X^-1; structure (nodes, edges, pair order, provenance)
    is preserved.
    """
    theta = {node.name: sch.map_of(node.name) for node in g.nodes}
    theta_inv = {name: m.invert() for name, m in theta.items()}
    dims = st_dim_names(sch.n, sch.k)
    nodes = []
    for node in g.nodes:
        dom = node.domain.composed_with(theta_inv[node.name])
        nodes.append(PrdgNode(node.name, dims, dom, node.is_input))
    edges = []
    for edge in g.edges:
        dom = edge.domain.composed_with(theta_inv[edge.src])
        pairs = []
        for pair in edge.pairs:
            fprime = theta[pair.dst].compose(pair.map).compose(theta_inv[pair.src])
            pairs.append(IoPair(pair.src, pair.dst, dom, fprime, pair.provenance))
        edges.append(HyperEdge(edge.name, edge.src, dom, tuple(pairs)))
    st = Prdg(g.params, tuple(nodes), tuple(edges), g.derived_params)
    return SpaceTimePrdg(st, sch.n, sch.k, theta, theta_inv)
