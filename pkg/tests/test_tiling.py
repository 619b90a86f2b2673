import random

import pytest

from hsdtile.errors import NonRectangularDomain, NonUniformDependence
from hsdtile.prdg import parse_prdg, serialize_prdg, validate_prdg
from hsdtile.tiling import projection_oracle, tile_uniform, tiled_instances

# Point-level rex2d recurrence: H over {1 <= i <= M, 1 <= j <= N}, live-in
# boundary held by the In pseudo-node.
REX_POINTS = """
{"params": ["M", "N"],
 "nodes": [
   {"name": "S", "dims": ["i", "j"],
    "domain": ["i >= 1", "i <= M", "j >= 1", "j <= N"]},
   {"name": "In", "dims": ["i", "j"], "input": true,
    "domain": [["i = 0", "j >= 0", "j <= N"], ["j = 0", "i >= 0", "i <= M"]]}
 ],
 "edges": [
   {"name": "e1", "src": "S", "domain": ["i >= 2", "i <= M", "j >= 2", "j <= N"],
    "deps": [{"dst": "S", "map": ["i - 1", "j"]}, {"dst": "S", "map": ["i", "j - 1"]}]},
   {"name": "e2", "src": "S", "domain": ["i >= 2", "i <= M", "j = 1"],
    "deps": [{"dst": "S", "map": ["i - 1", "j"]}, {"dst": "In", "map": ["i", "0"]}]},
   {"name": "e3", "src": "S", "domain": ["i = 1", "j = 1"],
    "deps": [{"dst": "In", "map": ["0", "j"]}, {"dst": "In", "map": ["i", "0"]}]},
   {"name": "e4", "src": "S", "domain": ["i = 1", "j >= 2", "j <= N"],
    "deps": [{"dst": "In", "map": ["0", "j"]}, {"dst": "S", "map": ["i", "j - 1"]}]}
 ]}
"""


def chain_1d(m_points, offset):
    text = """
    {"params": [], "nodes": [{"name": "S", "dims": ["i"],
       "domain": ["i >= 0", "i <= %d"]}],
     "edges": [{"src": "S", "domain": ["i >= %d", "i <= %d"],
                "deps": [{"dst": "S", "map": ["i - %d"]}]}]}
    """ % (m_points - 1, offset, m_points - 1, offset)
    return parse_prdg(text)


def test_rex_tiling_matches_projection_oracle():
    g = parse_prdg(REX_POINTS)
    tiled = tile_uniform(g, (4, 4))
    vals = tiled.bind_params({"M": 8, "N": 8})
    assert projection_oracle(g, (4, 4), (8, 8)) == tiled_instances(tiled, vals)


def test_rex_tiling_preserves_shape():
    g = parse_prdg(REX_POINTS)
    tiled = tile_uniform(g, (4, 4))
    assert tiled.node_names() == ["S", "In"]
    assert tiled.node("S").dims == ("i_b", "j_b")
    assert {d.name for d in tiled.derived_params} == {"M_b", "N_b"}
    # Tiled node domain: 0..floor(M/4) per dim (Fig-style 0-based bounds).
    vals = tiled.bind_params({"M": 8, "N": 8})
    from hsdtile.affine import enumerate_union
    pts = enumerate_union(tiled.node("S").domain, vals)
    assert pts == [(i, j) for i in range(3) for j in range(3)]
    # Every real dependence stays an S -> S unit offset.
    for _, _, pair in tiled.compute_pairs():
        d = pair.map.const
        assert pair.map.linear == ((1, 0), (0, 1))
        assert d in ((-1, 0), (0, -1))


def test_rex_tiled_validates_clean():
    g = parse_prdg(REX_POINTS)
    tiled = tile_uniform(g, (4, 4))
    vals = tiled.bind_params({"M": 8, "N": 8})
    report = validate_prdg(tiled, vals)
    assert report.ok, report.summary()


def test_rex_tiled_roundtrips():
    tiled = tile_uniform(parse_prdg(REX_POINTS), (4, 4))
    assert parse_prdg(serialize_prdg(tiled)) == tiled


def test_chain_tiling():
    g = chain_1d(16, 1)
    tiled = tile_uniform(g, (4,))
    vals = ()
    got = tiled_instances(tiled, vals)
    assert got == {("S", (t,), "S", (t - 1,)) for t in range(1, 4)}
    assert got == projection_oracle(g, (4,), ())


def test_offset_spanning_full_tile():
    # |d| == b: every instance crosses, no zero-offset pair survives.
    g = chain_1d(16, 4)
    tiled = tile_uniform(g, (4,))
    assert tiled_instances(tiled, ()) == projection_oracle(g, (4,), ())


def test_non_uniform_rejected():
    text = """
    {"params": [], "nodes": [{"name": "S", "dims": ["i"],
       "domain": ["i >= 0", "i <= 7"]}],
     "edges": [{"src": "S", "domain": ["i >= 1", "i <= 7"],
                "deps": [{"dst": "S", "map": ["2*i"]}]}]}
    """
    with pytest.raises(NonUniformDependence):
        tile_uniform(parse_prdg(text), (2,))


def test_offset_larger_than_tile_rejected():
    g = chain_1d(16, 5)
    with pytest.raises(NonUniformDependence):
        tile_uniform(g, (4,))


def test_non_rectangular_rejected():
    text = """
    {"params": [], "nodes": [{"name": "S", "dims": ["i", "j"],
       "domain": ["i >= 0", "j >= 0", "i + j <= 7"]}],
     "edges": [{"src": "S", "domain": ["i >= 1", "j >= 0", "i + j <= 7"],
                "deps": [{"dst": "S", "map": ["i - 1", "j"]}]}]}
    """
    with pytest.raises(NonRectangularDomain):
        tile_uniform(parse_prdg(text), (2, 2))


def random_uniform_prdg(rng, dim, size):
    lines = []
    dims = ["i", "j", "k"][:dim]
    dom = []
    for d in range(dim):
        dom += [f"{dims[d]} >= 0", f"{dims[d]} <= {size - 1}"]
    n_deps = rng.randint(1, 3)
    deps = []
    seen = set()
    for _ in range(n_deps):
        d = tuple(rng.randint(-2, 2) for _ in range(dim))
        if not any(d) or d in seen:
            continue
        seen.add(d)
        # Edge domain: points whose target stays in the box.
        rows = list(dom)
        for i in range(dim):
            if d[i] < 0:
                rows.append(f"{dims[i]} >= {-d[i]}")
            elif d[i] > 0:
                rows.append(f"{dims[i]} <= {size - 1 - d[i]}")
        mp = [f"{dims[i]} + {d[i]}" if d[i] >= 0 else f"{dims[i]} - {-d[i]}"
              for i in range(dim)]
        deps.append((rows, mp))
    if not deps:
        return None
    edges = ",".join(
        '{"src": "S", "domain": %s, "deps": [{"dst": "S", "map": %s}]}'
        % (str(rows).replace("'", '"'), str(mp).replace("'", '"'))
        for rows, mp in deps
    )
    text = (
        '{"params": [], "nodes": [{"name": "S", "dims": %s, "domain": %s}], '
        '"edges": [%s]}'
        % (str(dims).replace("'", '"'), str(dom).replace("'", '"'), edges)
    )
    return parse_prdg(text)


def test_two_node_uniform_graph():
    # Producer and consumer are different signatures; crossing analysis must
    # still be exact.
    text = """
    {"params": [], "nodes": [
       {"name": "A", "dims": ["i", "j"],
        "domain": ["i >= 0", "i <= 11", "j >= 0", "j <= 11"]},
       {"name": "B", "dims": ["i", "j"],
        "domain": ["i >= 0", "i <= 11", "j >= 0", "j <= 11"]}],
     "edges": [
       {"src": "B", "domain": ["i >= 2", "i <= 11", "j >= 0", "j <= 11"],
        "deps": [{"dst": "A", "map": ["i - 2", "j"]}]},
       {"src": "A", "domain": ["i >= 0", "i <= 11", "j >= 1", "j <= 11"],
        "deps": [{"dst": "A", "map": ["i", "j - 1"]}]}
     ]}
    """
    g = parse_prdg(text)
    tiled = tile_uniform(g, (4, 3))
    assert tiled_instances(tiled, ()) == projection_oracle(g, (4, 3), ())
    # Cross-node pairs keep their producer signature.
    assert {(p.src, p.dst) for _, _, p in tiled.compute_pairs()} == {
        ("B", "A"), ("A", "A")}


def test_random_two_node_graphs_match_oracle():
    import json
    rng = random.Random(7)
    checked = 0
    while checked < 40:
        dim = rng.randint(1, 2)
        size = rng.randint(4, 12)
        dims = ["i", "j"][:dim]
        dom = []
        for d in dims:
            dom += [f"{d} >= 0", f"{d} <= {size - 1}"]
        off = tuple(rng.randint(-2, 2) for _ in range(dim))
        rows = list(dom)
        for x, dn in zip(off, dims):
            if x < 0:
                rows.append(f"{dn} >= {-x}")
            elif x > 0:
                rows.append(f"{dn} <= {size - 1 - x}")
        mp = [f"{dn} + {x}" if x >= 0 else f"{dn} - {-x}"
              for dn, x in zip(dims, off)]
        g = parse_prdg(json.dumps({
            "params": [],
            "nodes": [{"name": "A", "dims": dims, "domain": dom},
                      {"name": "B", "dims": dims, "domain": dom}],
            "edges": [{"src": "B", "domain": rows,
                       "deps": [{"dst": "A", "map": mp}]}],
        }))
        b = tuple(rng.randint(2, 4) for _ in range(dim))
        if any(abs(x) > bb for x, bb in zip(off, b)):
            continue
        tiled = tile_uniform(g, b)
        assert tiled_instances(tiled, ()) == projection_oracle(g, b, ()), (
            off, b, size)
        checked += 1


def test_random_chains_match_oracle():
    rng = random.Random(2024)
    checked = 0
    while checked < 60:
        dim = rng.randint(1, 3)
        size = rng.randint(4, 16 if dim < 3 else 9)
        g = random_uniform_prdg(rng, dim, size)
        if g is None:
            continue
        b = tuple(rng.randint(2, 4) for _ in range(dim))
        if any(abs(p.map.const[i]) > b[i]
               for _, _, p in g.compute_pairs() for i in range(dim)):
            continue
        tiled = tile_uniform(g, b)
        assert tiled_instances(tiled, ()) == projection_oracle(g, b, ()), (
            f"mismatch at dim={dim} size={size} b={b}"
        )
        checked += 1
