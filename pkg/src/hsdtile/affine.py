"""Exact integer affine algebra and small-scale polyhedral operations.

Everything works over Python's arbitrary-precision integers; there is no
floating point and no silent wraparound anywhere in this module.  Vectors are
plain tuples of ints, compared lexicographically with the builtin tuple order.

The polyhedra here are deliberately small-scale: constraint rows are kept
verbatim (no canonicalization beyond dropping constant-true rows), emptiness
is decided by rational Fourier-Motzkin elimination plus bounded integer
enumeration, and enumeration is exact and lexicographic.  That is all the rest
of the package needs, and it keeps every answer checkable by brute force.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import gcd
from typing import Iterator, Optional, Sequence

from .errors import DimensionMismatch, NotInvertible, UnboundedDomain

IntVec = tuple[int, ...]

# lex_compare results
LT, EQ, GT = -1, 0, 1


def lex_compare(a: Sequence[int], b: Sequence[int]) -> int:
    """Lexicographic comparison of two equal-dimension integer vectors.

    Returns LT (-1), EQ (0) or GT (1).  Total order for any fixed dimension.
    """
    if len(a) != len(b):
        raise DimensionMismatch(f"lex_compare on dims {len(a)} and {len(b)}")
    ta, tb = tuple(a), tuple(b)
    return (ta > tb) - (ta < tb)


def _dot(u: Sequence[int], v: Sequence[int]) -> int:
    return sum(x * y for x, y in zip(u, v))


def _mat_vec(m: Sequence[Sequence[int]], v: Sequence[int]) -> tuple[int, ...]:
    return tuple(_dot(row, v) for row in m)


def _mat_mul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> tuple[tuple[int, ...], ...]:
    if not b:
        return tuple(() for _ in a)
    cols = len(b[0])
    return tuple(
        tuple(sum(arow[i] * b[i][j] for i in range(len(b))) for j in range(cols))
        for arow in a
    )


@dataclass(frozen=True)
class AffineMap:
    """Total integer affine function F(z, s) = A.z + B.s + c.

    ``linear`` is the out_dim x in_dim matrix A, ``param`` the out_dim x
    n_params matrix B over size parameters, ``const`` the offset c.  ``in_dim``
    and ``n_params`` are stored explicitly so zero-row maps (empty processor
    parts) keep their input arity.
    """

    in_dim: int
    n_params: int
    linear: tuple[tuple[int, ...], ...]
    param: tuple[tuple[int, ...], ...]
    const: tuple[int, ...]

    def __post_init__(self):
        if len(self.linear) != len(self.const) or len(self.param) != len(self.const):
            raise DimensionMismatch("affine map row counts disagree")
        for row in self.linear:
            if len(row) != self.in_dim:
                raise DimensionMismatch("linear row width != in_dim")
        for row in self.param:
            if len(row) != self.n_params:
                raise DimensionMismatch("param row width != n_params")

    @property
    def out_dim(self) -> int:
        return len(self.const)

    @classmethod
    def identity(cls, dim: int, n_params: int = 0) -> "AffineMap":
        return cls(
            in_dim=dim,
            n_params=n_params,
            linear=tuple(tuple(1 if i == j else 0 for j in range(dim)) for i in range(dim)),
            param=tuple((0,) * n_params for _ in range(dim)),
            const=(0,) * dim,
        )

    @classmethod
    def from_rows(cls, rows, in_dim: int, n_params: int = 0) -> "AffineMap":
        """Build from an iterable of (linear coefs, param coefs, const) rows."""
        lin, par, con = [], [], []
        for a, b, c in rows:
            lin.append(tuple(a))
            par.append(tuple(b))
            con.append(int(c))
        return cls(in_dim, n_params, tuple(lin), tuple(par), tuple(con))

    def apply(self, z: Sequence[int], s: Sequence[int] = ()) -> IntVec:
        """Evaluate the map at integer point z with parameter values s."""
        if len(z) != self.in_dim:
            raise DimensionMismatch(f"apply: point dim {len(z)} != in_dim {self.in_dim}")
        if len(s) != self.n_params:
            raise DimensionMismatch(f"apply: param dim {len(s)} != n_params {self.n_params}")
        return tuple(
            _dot(self.linear[i], z) + _dot(self.param[i], s) + self.const[i]
            for i in range(self.out_dim)
        )

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other: (self.compose(other)).apply(z) == self.apply(other.apply(z))."""
        if other.out_dim != self.in_dim:
            raise DimensionMismatch(
                f"compose: inner out_dim {other.out_dim} != outer in_dim {self.in_dim}"
            )
        if other.n_params != self.n_params:
            raise DimensionMismatch("compose: parameter spaces differ")
        linear = _mat_mul(self.linear, other.linear)
        param_from_inner = _mat_mul(self.linear, other.param)
        param = tuple(
            tuple(param_from_inner[i][j] + self.param[i][j] for j in range(self.n_params))
            for i in range(self.out_dim)
        )
        const = tuple(
            _dot(self.linear[i], other.const) + self.const[i] for i in range(self.out_dim)
        )
        return AffineMap(other.in_dim, self.n_params, linear, param, const)

    def invert(self) -> "AffineMap":
        """Exact inverse; requires a square unimodular linear part.

        The inverse maps y to A^-1 (y - B.s - c), which is integral exactly
        when |det A| = 1.
        """
        n = self.out_dim
        if self.in_dim != n:
            raise NotInvertible(
                f"map is {n}x{self.in_dim}, not square", det=None
            )
        # Gauss-Jordan over exact rationals.
        aug = [
            [Fraction(self.linear[i][j]) for j in range(n)]
            + [Fraction(1 if i == j else 0) for j in range(n)]
            for i in range(n)
        ]
        det = Fraction(1)
        for col in range(n):
            pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
            if pivot is None:
                raise NotInvertible("linear part is singular (det = 0)", det=0)
            if pivot != col:
                aug[col], aug[pivot] = aug[pivot], aug[col]
                det = -det
            det *= aug[col][col]
            inv_piv = Fraction(1) / aug[col][col]
            aug[col] = [x * inv_piv for x in aug[col]]
            for r in range(n):
                if r != col and aug[r][col] != 0:
                    f = aug[r][col]
                    aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
        if det not in (1, -1):
            raise NotInvertible(f"linear part is not unimodular (det = {det})", det=det)
        inv = tuple(tuple(int(aug[i][n + j]) for j in range(n)) for i in range(n))
        param = tuple(
            tuple(-_dot(inv[i], [self.param[r][j] for r in range(n)]) for j in range(self.n_params))
            for i in range(n)
        )
        const = tuple(-_dot(inv[i], self.const) for i in range(n))
        return AffineMap(n, self.n_params, inv, param, const)

    def row_slice(self, start: int, stop: int) -> "AffineMap":
        """Sub-map made of output rows [start, stop)."""
        return AffineMap(
            self.in_dim,
            self.n_params,
            self.linear[start:stop],
            self.param[start:stop],
            self.const[start:stop],
        )

    def is_identity(self) -> bool:
        return self == AffineMap.identity(self.in_dim, self.n_params)


class ConstraintKind(Enum):
    GE = ">="  # a.z + b.s + c >= 0
    EQ = "="   # a.z + b.s + c == 0


@dataclass(frozen=True)
class Constraint:
    """One row a.z + b.s + c {>=,=} 0 over dim variables and n_params parameters."""

    coef: tuple[int, ...]
    param: tuple[int, ...]
    const: int
    kind: ConstraintKind = ConstraintKind.GE

    def value(self, z: Sequence[int], s: Sequence[int] = ()) -> int:
        return _dot(self.coef, z) + _dot(self.param, s) + self.const

    def holds(self, z: Sequence[int], s: Sequence[int] = ()) -> bool:
        v = self.value(z, s)
        return v == 0 if self.kind is ConstraintKind.EQ else v >= 0

    def is_trivially_true(self) -> bool:
        if any(self.coef) or any(self.param):
            return False
        return self.const == 0 if self.kind is ConstraintKind.EQ else self.const >= 0

    def is_trivially_false(self) -> bool:
        if any(self.coef) or any(self.param):
            return False
        return self.const != 0 if self.kind is ConstraintKind.EQ else self.const < 0


@dataclass(frozen=True)
class Polyhedron:
    """Integer points {z | all rows hold}, possibly parameterized by s."""

    dim: int
    n_params: int
    rows: tuple[Constraint, ...]

    def __post_init__(self):
        for row in self.rows:
            if len(row.coef) != self.dim or len(row.param) != self.n_params:
                raise DimensionMismatch("constraint width mismatch")

    @classmethod
    def universe(cls, dim: int, n_params: int = 0) -> "Polyhedron":
        return cls(dim, n_params, ())

    @classmethod
    def empty(cls, dim: int, n_params: int = 0) -> "Polyhedron":
        zero = Constraint((0,) * dim, (0,) * n_params, -1, ConstraintKind.GE)
        return cls(dim, n_params, (zero,))

    def contains(self, z: Sequence[int], s: Sequence[int] = ()) -> bool:
        return all(row.holds(z, s) for row in self.rows)

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        if other.dim != self.dim or other.n_params != self.n_params:
            raise DimensionMismatch("intersect: spaces differ")
        return Polyhedron(self.dim, self.n_params, self.rows + other.rows)

    def with_rows(self, extra: Sequence[Constraint]) -> "Polyhedron":
        return Polyhedron(self.dim, self.n_params, self.rows + tuple(extra))

    def normalized(self) -> "Polyhedron":
        """Drop constant-true rows; collapse to canonical empty on a constant-false row."""
        kept = []
        for row in self.rows:
            if row.is_trivially_false():
                return Polyhedron.empty(self.dim, self.n_params)
            if not row.is_trivially_true():
                kept.append(row)
        return Polyhedron(self.dim, self.n_params, tuple(kept))

    def is_trivially_empty(self) -> bool:
        return any(row.is_trivially_false() for row in self.rows)

    def substitute_params(self, s: Sequence[int]) -> "Polyhedron":
        """Fold parameter values into the constant part (result has n_params = 0)."""
        if len(s) != self.n_params:
            raise DimensionMismatch(f"expected {self.n_params} parameter values, got {len(s)}")
        rows = tuple(
            Constraint(r.coef, (), r.const + _dot(r.param, s), r.kind) for r in self.rows
        )
        return Polyhedron(self.dim, 0, rows)

    def composed_with(self, m: AffineMap) -> "Polyhedron":
        """{y | self contains m(y)}: rewrite every row through the map m."""
        if m.out_dim != self.dim or m.n_params != self.n_params:
            raise DimensionMismatch("composed_with: map does not land in this space")
        rows = []
        for r in self.rows:
            coef = tuple(_dot(r.coef, [m.linear[i][j] for i in range(m.out_dim)])
                         for j in range(m.in_dim))
            param = tuple(
                _dot(r.coef, [m.param[i][j] for i in range(m.out_dim)]) + r.param[j]
                for j in range(m.n_params)
            )
            const = _dot(r.coef, m.const) + r.const
            rows.append(Constraint(coef, param, const, r.kind))
        return Polyhedron(m.in_dim, self.n_params, tuple(rows))


@dataclass(frozen=True)
class PolyUnion:
    """Union of same-space polyhedra; pieces may overlap."""

    dim: int
    n_params: int
    pieces: tuple[Polyhedron, ...]

    def __post_init__(self):
        for p in self.pieces:
            if p.dim != self.dim or p.n_params != self.n_params:
                raise DimensionMismatch("union piece in a different space")

    @classmethod
    def of(cls, *pieces: Polyhedron) -> "PolyUnion":
        first = pieces[0]
        return cls(first.dim, first.n_params, tuple(pieces))

    def contains(self, z: Sequence[int], s: Sequence[int] = ()) -> bool:
        return any(p.contains(z, s) for p in self.pieces)

    def substitute_params(self, s: Sequence[int]) -> "PolyUnion":
        return PolyUnion(self.dim, 0, tuple(p.substitute_params(s) for p in self.pieces))

    def composed_with(self, m: AffineMap) -> "PolyUnion":
        return PolyUnion(m.in_dim, self.n_params,
                         tuple(p.composed_with(m) for p in self.pieces))

    def is_syntactically_empty(self) -> bool:
        return all(p.is_trivially_empty() for p in self.pieces)


# ---------------------------------------------------------------------------
# Fourier-Motzkin machinery over plain integer rows (coefs..., const), all >= 0.
# ---------------------------------------------------------------------------

def _ge_rows(poly: Polyhedron) -> list[tuple[tuple[int, ...], int]]:
    """Expand to >=-only rows over dim variables; requires n_params == 0."""
    assert poly.n_params == 0
    rows = []
    for r in poly.rows:
        rows.append((r.coef, r.const))
        if r.kind is ConstraintKind.EQ:
            rows.append((tuple(-c for c in r.coef), -r.const))
    return rows


def _normalize_row(coefs: tuple[int, ...], const: int):
    g = 0
    for c in coefs:
        g = gcd(g, abs(c))
    if g > 1:
        # Flooring the constant keeps exactly the same integer solutions.
        coefs = tuple(c // g for c in coefs)
        const = const // g
    return coefs, const


def _eliminate_var(rows, j: int):
    """One Fourier-Motzkin step removing variable j (rational projection)."""
    pos, neg, rest = [], [], []
    for coefs, const in rows:
        c = coefs[j]
        if c > 0:
            pos.append((coefs, const))
        elif c < 0:
            neg.append((coefs, const))
        else:
            rest.append((coefs, const))
    out = set(rest)
    for pc, pk in pos:
        for nc, nk in neg:
            a, b = pc[j], -nc[j]
            coefs = tuple(b * x + a * y for x, y in zip(pc, nc))
            const = b * pk + a * nk
            out.add(_normalize_row(coefs, const))
    return list(out)


def _rationally_feasible(rows, nvars: int) -> bool:
    cur = rows
    for j in range(nvars):
        cur = _eliminate_var(cur, j)
    return all(const >= 0 for _, const in cur)


def _level_projections(rows, nvars: int):
    """projs[d] = rows over variables 0..d only (vars > d eliminated)."""
    projs = [None] * nvars
    cur = list(rows)
    for d in range(nvars - 1, -1, -1):
        projs[d] = cur
        if d > 0:
            cur = _eliminate_var(cur, d)
    return projs


def _integer_bounds(level_rows, level: int, prefix: tuple[int, ...]):
    """Integer lower/upper bounds for variable `level` given a fixed prefix."""
    lo = None
    hi = None
    ok = True
    for coefs, const in level_rows:
        c = coefs[level]
        if c == 0:
            # Prefix-only row at this level: must already hold.
            if const + sum(coefs[i] * prefix[i] for i in range(level)) < 0:
                ok = False
                break
            continue
        partial = const + sum(coefs[i] * prefix[i] for i in range(level))
        if c > 0:
            # c*x + partial >= 0  =>  x >= ceil(-partial / c)
            cand = -(partial // c)
            if lo is None or cand > lo:
                lo = cand
        else:
            # c*x + partial >= 0  =>  x <= floor(partial / -c)
            cand = partial // (-c)
            if hi is None or cand < hi:
                hi = cand
    return ok, lo, hi


def _enumerate_rows(rows, nvars: int) -> Iterator[IntVec]:
    if nvars == 0:
        if all(const >= 0 for coefs, const in rows):
            yield ()
        return
    for coefs, const in rows:
        if not any(coefs) and const < 0:
            return
    projs = _level_projections(rows, nvars)

    def rec(level: int, prefix: tuple[int, ...]):
        ok, lo, hi = _integer_bounds(projs[level], level, prefix)
        if not ok:
            return
        if lo is None or hi is None:
            side = "below" if lo is None else "above"
            raise UnboundedDomain(
                f"variable {level} unbounded {side} during enumeration", dim_index=level
            )
        if level == nvars - 1:
            for x in range(lo, hi + 1):
                yield prefix + (x,)
        else:
            for x in range(lo, hi + 1):
                yield from rec(level + 1, prefix + (x,))

    yield from rec(0, ())


def enumerate_points(poly: Polyhedron, s: Sequence[int] = ()) -> Iterator[IntVec]:
    """All integer points of poly (with parameters substituted), in lex order.

    Raises UnboundedDomain if some dimension has no finite bound after
    substitution.
    """
    concrete = poly.substitute_params(s) if poly.n_params else poly
    yield from _enumerate_rows(_ge_rows(concrete), concrete.dim)


def enumerate_union(union: PolyUnion, s: Sequence[int] = ()) -> list[IntVec]:
    """Deduplicated, lex-sorted integer points of a union of polyhedra."""
    pts = set()
    for piece in union.pieces:
        pts.update(enumerate_points(piece, s))
    return sorted(pts)


class EmptinessKind(Enum):
    EMPTY = "empty"
    NONEMPTY = "nonempty"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Emptiness:
    kind: EmptinessKind
    witness: Optional[IntVec] = None
    param_witness: Optional[IntVec] = None

    @property
    def is_empty(self) -> bool:
        return self.kind is EmptinessKind.EMPTY

    @property
    def is_nonempty(self) -> bool:
        return self.kind is EmptinessKind.NONEMPTY

    @property
    def is_unknown(self) -> bool:
        return self.kind is EmptinessKind.UNKNOWN

    @property
    def may_be_nonempty(self) -> bool:
        """Safe over-approximation used by consumers: unknown counts as nonempty."""
        return not self.is_empty


def is_empty(poly: Polyhedron, param_bounds: Optional[Sequence[tuple[int, int]]] = None) -> Emptiness:
    """Tri-state integer emptiness test.

    Parameters are existentially quantified: the set is Empty only if no
    integer point exists for any parameter value (within ``param_bounds`` if
    given, unrestricted otherwise).  Rational infeasibility (Fourier-Motzkin)
    proves Empty; a found integer point proves NonEmpty and is returned as a
    witness together with its parameter valuation.  A rationally feasible but
    unbounded system yields Unknown, which callers must treat as possibly
    nonempty.
    """
    nv = poly.dim + poly.n_params
    rows = []
    for r in poly.rows:
        coefs = r.coef + r.param
        rows.append((coefs, r.const))
        if r.kind is ConstraintKind.EQ:
            rows.append((tuple(-c for c in coefs), -r.const))
    if param_bounds is not None:
        if len(param_bounds) != poly.n_params:
            raise DimensionMismatch("param_bounds arity != n_params")
        for j, (lo, hi) in enumerate(param_bounds):
            unit = tuple(1 if i == poly.dim + j else 0 for i in range(nv))
            rows.append((unit, -lo))
            rows.append((tuple(-u for u in unit), hi))
    if not _rationally_feasible(rows, nv):
        return Emptiness(EmptinessKind.EMPTY)
    try:
        for pt in _enumerate_rows(rows, nv):
            return Emptiness(
                EmptinessKind.NONEMPTY,
                witness=pt[: poly.dim],
                param_witness=pt[poly.dim:],
            )
        return Emptiness(EmptinessKind.EMPTY)
    except UnboundedDomain:
        # Unbounded but rationally feasible: search widening windows for a
        # witness.  A point found inside a window is a genuine witness; not
        # finding one proves nothing, so the fallback answer stays Unknown.
        for window in (4, 16, 64):
            boxed = list(rows)
            for i in range(nv):
                unit = tuple(1 if j == i else 0 for j in range(nv))
                boxed.append((unit, window))
                boxed.append((tuple(-u for u in unit), window))
            for pt in _enumerate_rows(boxed, nv):
                return Emptiness(
                    EmptinessKind.NONEMPTY,
                    witness=pt[: poly.dim],
                    param_witness=pt[poly.dim:],
                )
        return Emptiness(EmptinessKind.UNKNOWN)


def neq_set(f: AffineMap, g: AffineMap, domain: Polyhedron) -> PolyUnion:
    """The subset of ``domain`` where f and g differ, as a union of polyhedra.

    Split per output coordinate with the integer gap: f_i - g_i >= 1 or
    g_i - f_i >= 1.  Exact over integer points.
    """
    if f.in_dim != domain.dim or g.in_dim != domain.dim:
        raise DimensionMismatch("neq_set: map input does not match domain")
    if f.out_dim != g.out_dim or f.n_params != g.n_params or f.n_params != domain.n_params:
        raise DimensionMismatch("neq_set: maps not comparable")
    pieces = []
    for i in range(f.out_dim):
        dcoef = tuple(f.linear[i][j] - g.linear[i][j] for j in range(f.in_dim))
        dparam = tuple(f.param[i][j] - g.param[i][j] for j in range(f.n_params))
        dconst = f.const[i] - g.const[i]
        for sign in (1, -1):
            row = Constraint(
                tuple(sign * c for c in dcoef),
                tuple(sign * c for c in dparam),
                sign * dconst - 1,
                ConstraintKind.GE,
            )
            piece = domain.with_rows((row,)).normalized()
            if not piece.is_trivially_empty():
                pieces.append(piece)
    return PolyUnion(domain.dim, domain.n_params, tuple(pieces))


def box(bounds: Sequence[tuple[int, int]], n_params: int = 0) -> Polyhedron:
    """Convenience constructor for {z | lo_i <= z_i <= hi_i}."""
    dim = len(bounds)
    rows = []
    for i, (lo, hi) in enumerate(bounds):
        unit = tuple(1 if j == i else 0 for j in range(dim))
        zero = (0,) * n_params
        rows.append(Constraint(unit, zero, -lo, ConstraintKind.GE))
        rows.append(Constraint(tuple(-u for u in unit), zero, hi, ConstraintKind.GE))
    return Polyhedron(dim, n_params, tuple(rows))
