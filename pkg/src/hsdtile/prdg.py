"""PRDG program representation: parsing, validation, serialization.

A PRDG is a hyper-graph whose nodes are statements (or tile signatures) with
polyhedral domains, and whose hyper-edges carry input-output pairs: the source
node X is the *consumer*, each pair names a *producer* node Y together with an
affine map f taking a consumer point to the producer point it reads, valid on
the pair's domain D.

File format (JSON):

    {"params": ["M", "N"],
     "nodes": [{"name": "S", "dims": ["i", "j"],
                "domain": ["i >= 1", "i <= M"],      # or a list of pieces
                "input": false}],
     "edges": [{"name": "e1", "src": "S",
                "domain": ["i >= 2", ...],
                "deps": [{"dst": "S", "map": ["i - 1", "j"]}]}]}

Constraint and map entries use the affine expression grammar from
:mod:`hsdtile.exprs`.  ``derived_params`` optionally records parameters whose
values are computed from other parameters (used by uniform tiling, which
introduces floor-divided size parameters).  ``notes`` fields anywhere are
free-form comments and are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .affine import (
    AffineMap,
    PolyUnion,
    Polyhedron,
    enumerate_points,
)
from .errors import PrdgFormatError, UnknownNodeError
from .exprs import parse_constraint, parse_map, render_constraint, render_map


@dataclass(frozen=True)
class PrdgNode:
    name: str
    dims: tuple[str, ...]
    domain: PolyUnion
    is_input: bool = False


@dataclass(frozen=True)
class IoPair:
    """One consumer-to-producer dependence: consumer z reads producer f(z) on D."""

    src: str
    dst: str
    domain: Polyhedron
    map: AffineMap
    provenance: Optional[tuple] = None


@dataclass(frozen=True)
class HyperEdge:
    name: str
    src: str
    domain: Polyhedron
    pairs: tuple[IoPair, ...]


@dataclass(frozen=True)
class DerivedParam:
    """name = floor((base + offset) / divisor), evaluated from bound params."""

    name: str
    base: str
    divisor: int
    offset: int = 0


@dataclass(frozen=True)
class Prdg:
    params: tuple[str, ...]
    nodes: tuple[PrdgNode, ...]
    edges: tuple[HyperEdge, ...]
    derived_params: tuple[DerivedParam, ...] = ()

    def node(self, name: str) -> PrdgNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise UnknownNodeError(f"no node named {name!r}")

    def node_names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def bind_params(self, values: dict) -> tuple[int, ...]:
        """Resolve a {name: value} mapping (deriving derived params) to a vector."""
        vals = dict(values)
        for d in self.derived_params:
            if d.name not in vals:
                if d.base not in vals:
                    raise PrdgFormatError(
                        f"cannot derive {d.name}: base parameter {d.base} unbound"
                    )
                vals[d.name] = (vals[d.base] + d.offset) // d.divisor
        missing = [p for p in self.params if p not in vals]
        if missing:
            raise PrdgFormatError(f"unbound parameters: {', '.join(missing)}")
        return tuple(int(vals[p]) for p in self.params)

    def compute_pairs(self) -> list[tuple[HyperEdge, int, IoPair]]:
        """All pairs whose producer is a real (non-input) node."""
        inputs = {n.name for n in self.nodes if n.is_input}
        out = []
        for edge in self.edges:
            for idx, pair in enumerate(edge.pairs):
                if pair.dst not in inputs:
                    out.append((edge, idx, pair))
        return out


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _domain_pieces(raw, dims, params, where: str) -> PolyUnion:
    if not isinstance(raw, list):
        raise PrdgFormatError(f"{where}: domain must be a list of constraint strings")
    if raw and all(isinstance(x, list) for x in raw):
        pieces = raw
    else:
        pieces = [raw]
    polys = []
    for piece in pieces:
        rows = tuple(parse_constraint(c, dims, params) for c in piece)
        polys.append(Polyhedron(len(dims), len(params), rows))
    return PolyUnion(len(dims), len(params), tuple(polys))


def _single_domain(raw, dims, params, where: str) -> Polyhedron:
    union = _domain_pieces(raw, dims, params, where)
    if len(union.pieces) != 1:
        raise PrdgFormatError(f"{where}: expected a single-piece domain")
    return union.pieces[0]


def parse_prdg(text: str) -> Prdg:
    """Parse the PRDG file format; raises PrdgFormatError with location info."""
    if not text.strip():
        raise PrdgFormatError("empty PRDG description")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise PrdgFormatError(f"JSON syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise PrdgFormatError("top level must be an object")

    params = tuple(doc.get("params", []))
    derived = tuple(
        DerivedParam(d["name"], d["base"], int(d["divisor"]), int(d.get("offset", 0)))
        for d in doc.get("derived_params", [])
    )

    nodes = []
    for spec in doc.get("nodes", []):
        name = spec["name"]
        dims = tuple(spec["dims"])
        domain = _domain_pieces(spec["domain"], dims, params, f"node {name}")
        nodes.append(PrdgNode(name, dims, domain, bool(spec.get("input", False))))
    if not nodes:
        raise PrdgFormatError("PRDG has no nodes")
    by_name = {}
    for n in nodes:
        if n.name in by_name:
            raise PrdgFormatError(f"duplicate node name {n.name!r}")
        by_name[n.name] = n

    edges = []
    for i, spec in enumerate(doc.get("edges", [])):
        name = spec.get("name", f"e{i + 1}")
        src = spec["src"]
        if src not in by_name:
            raise UnknownNodeError(f"edge {name}: unknown source node {src!r}")
        src_node = by_name[src]
        domain = _single_domain(spec["domain"], src_node.dims, params, f"edge {name}")
        pairs = []
        for j, dep in enumerate(spec.get("deps", [])):
            dst = dep["dst"]
            if dst not in by_name:
                raise UnknownNodeError(f"edge {name}, dep {j}: unknown node {dst!r}")
            dst_node = by_name[dst]
            fmap = parse_map(dep["map"], src_node.dims, params)
            if fmap.out_dim != len(dst_node.dims):
                raise PrdgFormatError(
                    f"edge {name}, dep {j}: map has {fmap.out_dim} outputs, "
                    f"node {dst} has {len(dst_node.dims)} dims"
                )
            prov = tuple(dep["provenance"]) if "provenance" in dep else None
            pairs.append(IoPair(src, dst, domain, fmap, prov))
        if not pairs:
            raise PrdgFormatError(f"edge {name}: no deps")
        edges.append(HyperEdge(name, src, domain, tuple(pairs)))

    return Prdg(params, tuple(nodes), tuple(edges), derived)


def parse_prdg_file(path) -> Prdg:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_prdg(fh.read())


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _render_domain(union: PolyUnion, dims, params):
    rendered = [
        [render_constraint(row, dims, params) for row in piece.rows]
        for piece in union.pieces
    ]
    if len(rendered) == 1:
        return rendered[0]
    return rendered


def prdg_to_dict(g: Prdg) -> dict:
    doc = {"params": list(g.params)}
    if g.derived_params:
        doc["derived_params"] = [
            {"name": d.name, "base": d.base, "divisor": d.divisor, "offset": d.offset}
            for d in g.derived_params
        ]
    doc["nodes"] = []
    for n in g.nodes:
        spec = {
            "name": n.name,
            "dims": list(n.dims),
            "domain": _render_domain(n.domain, n.dims, g.params),
        }
        if n.is_input:
            spec["input"] = True
        doc["nodes"].append(spec)
    doc["edges"] = []
    for e in g.edges:
        src_dims = g.node(e.src).dims
        spec = {
            "name": e.name,
            "src": e.src,
            "domain": [render_constraint(r, src_dims, g.params) for r in e.domain.rows],
            "deps": [],
        }
        for p in e.pairs:
            dep = {"dst": p.dst, "map": render_map(p.map, src_dims, g.params)}
            if p.provenance is not None:
                dep["provenance"] = list(p.provenance)
            spec["deps"].append(dep)
        doc["edges"].append(spec)
    return doc


def serialize_prdg(g: Prdg) -> str:
    return json.dumps(prdg_to_dict(g), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    kind: str  # "out_of_domain" | "self_dependence" | "outside_src" | "empty_edge"
    edge: str
    pair_index: Optional[int]
    witness: Optional[tuple]
    detail: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def violations(self) -> list[Finding]:
        return [f for f in self.findings if f.kind != "empty_edge"]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok and not self.findings:
            return "clean"
        lines = [f"{f.kind} on {f.edge}: {f.detail}" for f in self.findings]
        return "\n".join(lines)


def validate_prdg(g: Prdg, param_values: Sequence[int]) -> ValidationReport:
    """Concrete structural validation at the given parameter values.

    Checks that every dependence instance lands inside the producer's domain,
    that edge domains stay inside the consumer's domain, and that no pair maps
    a point to itself on the same node.  Empty edge domains are reported as
    warnings only.
    """
    s = tuple(param_values)
    report = ValidationReport()
    for edge in g.edges:
        src_dom = g.node(edge.src).domain
        instances = 0
        for z in enumerate_points(edge.domain, s):
            instances += 1
            if not src_dom.contains(z, s):
                report.findings.append(Finding(
                    "outside_src", edge.name, None, z,
                    f"edge domain point {z} outside consumer domain of {edge.src}",
                ))
                continue
            for idx, pair in enumerate(edge.pairs):
                target = pair.map.apply(z, s)
                if pair.dst == pair.src and target == z:
                    report.findings.append(Finding(
                        "self_dependence", edge.name, idx, z,
                        f"pair {idx} maps {z} to itself",
                    ))
                    continue
                if not g.node(pair.dst).domain.contains(target, s):
                    report.findings.append(Finding(
                        "out_of_domain", edge.name, idx, z,
                        f"pair {idx} target {target} outside domain of {pair.dst}",
                    ))
        if instances == 0:
            report.findings.append(Finding(
                "empty_edge", edge.name, None, None,
                "edge domain has no points at these sizes",
            ))
    return report
