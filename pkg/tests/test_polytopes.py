import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwas import polytopes as P
from fwas.active_set import ActiveSet
from tests.oracles import brute_vertices


def simplex_hrep(p):
    C = np.vstack([-np.eye(p), np.ones((1, p)), -np.ones((1, p))])
    d = np.concatenate([np.zeros(p), [1.0, -1.0]])
    return C, d


class TestLmo:
    def test_simplex_argmin(self):
        v = P.lmo(P.unit_simplex(3), [3.0, 1.0, 2.0])
        np.testing.assert_array_equal(v.coords, [0, 1, 0])
        assert v.id == 1

    def test_simplex_tie_goes_to_first(self):
        v = P.lmo(P.unit_simplex(3), np.zeros(3))
        np.testing.assert_array_equal(v.coords, [1, 0, 0])

    def test_box_sign_pattern(self):
        v = P.lmo(P.box([0, 0], [1, 1]), [1.0, -1.0])
        np.testing.assert_array_equal(v.coords, [0, 1])

    def test_box_ids_follow_enumeration(self):
        spec = P.box([0, -1, 2], [1, 1, 3])
        for v in spec.vertices():
            c = np.where(v.coords == np.asarray(spec.structure.upper), -1.0, 1.0)
            assert P.lmo(spec, c).id == v.id

    def test_lifted_ball_origin_on_ties(self):
        spec = P.lifted_l1_ball(2.0, 3)
        v = P.lmo(spec, np.zeros(6))
        assert v.id == 0
        np.testing.assert_array_equal(v.coords, np.zeros(6))

    def test_lifted_ball_signed_vertex(self):
        spec = P.lifted_l1_ball(2.0, 2)
        v = P.lmo(spec, [0.0, -3.0, 1.0, 1.0])
        np.testing.assert_array_equal(v.coords, [0, 2, 0, 2])
        assert v.id == 3

    def test_product_concatenates_blocks(self):
        a, b = P.unit_simplex(2), P.box([0], [1])
        spec = P.product([a, b])
        c = np.array([1.0, 0.0, -1.0])
        v = P.lmo(spec, c)
        np.testing.assert_array_equal(v.coords, np.concatenate([a.lmo(c[:2]).coords, b.lmo(c[2:]).coords]))
        assert v.id == a.lmo(c[:2]).id * b.n_vertices + b.lmo(c[2:]).id

    def test_general_hrep_matches_simplex(self):
        C, d = simplex_hrep(3)
        spec = P.from_hrep(C, d)
        rng = np.random.default_rng(0)
        for _ in range(50):
            c = rng.standard_normal(3)
            np.testing.assert_allclose(P.lmo(spec, c).coords, P.lmo(P.unit_simplex(3), c).coords)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            P.lmo(P.unit_simplex(3), [1.0, 2.0])

    def test_non_finite_cost(self):
        with pytest.raises(ValueError):
            P.lmo(P.unit_simplex(2), [np.nan, 0.0])


def test_graph_ball_lmo_matches_vertex_scan():
    spec = P.lifted_graph_l1_ball(3.0, 3, [(0, 1, 1), (1, 2, -1)], [1.0, 2.0, 1.0], [0.5, 1.5], n_groups=2)
    verts = spec.vertices()
    V = np.array([v.coords for v in verts])
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = rng.integers(-2, 3, size=spec.dim).astype(float)
        vals = V @ c
        assert P.lmo(spec, c).id == int(np.flatnonzero(vals == vals.min())[0])


def test_graph_ball_vertices_are_feasible_extreme_points():
    spec = P.lifted_graph_l1_ball(2.0, 2, [(0, 1, 1)], [1.0, 1.0], [1.0])
    C, d = spec.rows, spec.rhs
    ref = brute_vertices(C, d)
    got = [v.coords for v in spec.vertices()]
    assert len(got) == len(ref)
    for x in ref:
        assert any(np.allclose(x, y, atol=1e-9) for y in got)


class TestAwayVertex:
    def test_direct_argmax(self):
        e = np.eye(2)
        a = ActiveSet([(P.Vertex(0, e[0]), 0.4), (P.Vertex(1, e[1]), 0.6)])
        v, mu = P.away_vertex(a, [1.0, 0.0])
        assert v.id == 0 and mu == pytest.approx(0.4)

    def test_singleton(self):
        a = ActiveSet.singleton(P.Vertex(0, np.array([1.0, 0.0])))
        v, mu = P.away_vertex(a, [-5.0, 3.0])
        assert v.id == 0 and mu == 1.0

    def test_tie_goes_to_lowest_id(self):
        e = np.eye(3)
        a = ActiveSet([(P.Vertex(2, e[2]), 0.5), (P.Vertex(0, e[0]), 0.5)])
        v, mu = P.away_vertex(a, [2.0, 5.0, 2.0])
        assert v.id == 0 and mu == 0.5

    def test_empty(self):
        with pytest.raises(Exception):
            P.away_vertex(ActiveSet(), [1.0])


class TestEnumeration:
    def test_simplex(self):
        vs = P.enumerate_vertices(P.unit_simplex(3))
        np.testing.assert_array_equal(np.array([v.coords for v in vs]), np.eye(3))

    def test_box_corners(self):
        vs = P.enumerate_vertices(P.box([0, 0], [1, 1]))
        assert sorted(map(tuple, (v.coords for v in vs))) == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_hrep_two_simplex(self):
        C, d = simplex_hrep(2)
        vs = P.enumerate_vertices(P.from_hrep(C, d))
        got = sorted(map(tuple, (v.coords for v in vs)))
        assert got == [(0.0, 1.0), (1.0, 0.0)]

    def test_active_rank(self):
        C, d = simplex_hrep(3)
        spec = P.from_hrep(C, d)
        for v in spec.vertices():
            act = P.active_indices(spec, v.coords)
            assert np.linalg.matrix_rank(C[act]) == 3

    def test_guard(self):
        C = np.vstack([np.eye(13), -np.eye(13)])
        with pytest.raises(P.PolytopeError):
            P.from_hrep(C, np.ones(26))

    def test_unbounded(self):
        with pytest.raises(P.PolytopeError):
            P.from_hrep([[-1.0, 0.0], [0.0, -1.0], [1.0, -1.0]], [0.0, 0.0, 0.0])

    def test_empty(self):
        with pytest.raises(P.PolytopeError):
            P.from_hrep([[1.0], [-1.0]], [-1.0, -1.0])

    def test_structured_rows_hold_at_vertices(self):
        specs = [P.unit_simplex(4), P.box([-1, 0], [1, 2]), P.lifted_l1_ball(1.5, 3),
                 P.product([P.unit_simplex(2), P.lifted_l1_ball(1.0, 1)])]
        for spec in specs:
            for v in spec.vertices():
                assert np.all(spec.rows @ v.coords <= spec.rhs + 1e-9)


class TestGeometry:
    def test_omega_simplex(self):
        rep = P.compute_omega(P.unit_simplex(3))
        assert (rep.zeta, rep.phi, rep.omega) == (1.0, 1.0, 1.0)

    def test_omega_box(self):
        rep = P.compute_omega(P.box([0, 0], [2, 2]))
        assert (rep.zeta, rep.phi, rep.omega) == (2.0, 1.0, 2.0)

    def test_omega_scales(self):
        C, d = simplex_hrep(3)
        base = P.compute_omega(P.from_hrep(C, d)).omega
        assert P.compute_omega(P.from_hrep(C, 2.5 * d)).omega == pytest.approx(2.5 * base)

    def test_hoffman_identity(self):
        assert P.compute_hoffman(np.eye(2)) == pytest.approx(1.0)

    def test_hoffman_single_row(self):
        assert P.compute_hoffman([[2.0, 0.0]]) == pytest.approx(0.25)

    def test_hoffman_gram_eigenvalue(self):
        assert P.compute_hoffman([[1.0, 0.0], [1.0, 1.0]]) == pytest.approx(2.0 / (3.0 - np.sqrt(5.0)))

    def test_hoffman_duplicate_row(self):
        M = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 3.0]])
        assert P.compute_hoffman(np.vstack([M, M[1]])) == pytest.approx(P.compute_hoffman(M))

    def test_hoffman_guards(self):
        with pytest.raises(P.PolytopeError):
            P.compute_hoffman(np.ones((17, 2)))
        with pytest.raises(P.PolytopeError):
            P.compute_hoffman(np.zeros((2, 2)))


class TestFeasibility:
    def test_vertex(self):
        f = P.check_feasible(P.unit_simplex(3), [1.0, 0.0, 0.0], 1e-9)
        assert f.feasible and f.violation == 0.0

    def test_violation(self):
        f = P.check_feasible(P.unit_simplex(3), [0.6, 0.6, 0.0], 1e-9)
        assert not f.feasible and f.violation == pytest.approx(0.2)

    def test_centroid(self):
        assert P.check_feasible(P.unit_simplex(3), np.full(3, 1 / 3), 1e-9).feasible


class TestSerialization:
    @pytest.mark.parametrize("spec", [
        P.unit_simplex(3),
        P.box([0, -1], [1, 1]),
        P.lifted_l1_ball(2.0, 2),
        P.lifted_graph_l1_ball(1.0, 2, [(0, 1, -1)], [1.0, 1.0], [2.0]),
        P.product([P.unit_simplex(2), P.box([0], [3])]),
        P.from_hrep(*simplex_hrep(2)),
    ])
    def test_roundtrip(self, spec):
        back = P.from_dict(spec.to_dict())
        assert back.kind == spec.kind and back.dim == spec.dim
        np.testing.assert_array_equal(back.rows, spec.rows)
        c = np.linspace(-1, 1, spec.dim)
        assert back.lmo(c).id == spec.lmo(c).id

    def test_inconsistent_rows_rejected(self):
        doc = P.unit_simplex(2).to_dict()
        doc["rhs"] = [0.0, 0.0, 2.0, -1.0]
        with pytest.raises(P.PolytopeError):
            P.from_dict(doc)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.data())
def test_product_lmo_is_blockwise(p1, p2, data):
    spec = P.product([P.unit_simplex(p1), P.lifted_l1_ball(1.0, p2)])
    c = np.array(data.draw(st.lists(st.integers(-3, 3), min_size=spec.dim, max_size=spec.dim)), float)
    v = spec.lmo(c)
    parts = [b.lmo(c[sl]).coords for b, sl in zip(spec.blocks, spec.block_slices)]
    np.testing.assert_array_equal(v.coords, np.concatenate(parts))
    vals = np.array([c @ w.coords for w in spec.vertices()])
    assert c @ v.coords == pytest.approx(vals.min(), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.floats(0.1, 10.0))
def test_omega_positive(p, scale):
    C, d = simplex_hrep(p)
    assert P.compute_omega(P.from_hrep(C, scale * d)).omega > 0
