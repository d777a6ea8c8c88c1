from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_control.assembly import (assemble_divergence, assemble_load,
                                     assemble_operators, assemble_stiffness,
                                     check_symmetric, dump_coo,
                                     element_geometry, scalar_mass,
                                     scalar_stiffness)
from stokes_control.fespace import build_spaces, interpolate_nodal, p1_gradients
from stokes_control.mesh import TriMesh, build_two_level
from stokes_control.quadrature import triangle_quadrature

REF = TriMesh(np.array([[0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]), 1.0,
              (0.0, 0.0))


def one_triangle_spaces(mesh=REF):
    return SimpleNamespace(mesh=SimpleNamespace(fine=mesh),
                           ndof=2 * mesh.num_vertices)


def spaces_for(preset, n):
    return build_spaces(build_two_level(preset, n))


def test_reference_stiffness_block():
    K = scalar_stiffness(REF).toarray()
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]),
                       atol=1e-15)


def test_reference_mass_block():
    M = scalar_mass(REF).toarray()
    assert np.allclose(M, (0.5 / 12) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]),
                       atol=1e-16)


def test_vector_blocks_decouple():
    A = assemble_stiffness(one_triangle_spaces()).toarray()
    assert np.all(A[0::2, 1::2] == 0)
    assert np.allclose(A[0::2, 0::2], scalar_stiffness(REF).toarray())


def test_degenerate_triangle_rejected():
    bad = TriMesh(np.array([[0, 0], [1, 0], [2, 0]]), np.array([[0, 1, 2]]), 1.0,
                  (0.0, 0.0))
    with pytest.raises(ValueError):
        element_geometry(bad)


def test_constants_in_kernel():
    sp_ = spaces_for("lshape", 4)
    A = assemble_stiffness(sp_)
    c = np.tile([0.7, -1.3], sp_.num_vertices)
    assert np.abs(A @ c).max() < 1e-12


def test_translation_invariance():
    m = build_two_level("square", 4)
    moved = TriMesh(m.fine.lattice, m.fine.triangles, m.fine.spacing,
                    (3.7, -1.2))
    a = scalar_stiffness(m.fine)
    b = scalar_stiffness(moved)
    assert abs(a - b).max() < 1e-12


def test_mass_integrates_one_and_is_spd():
    sp_ = spaces_for("lshape", 2)
    M = scalar_mass(sp_.mesh.fine)
    one = np.ones(sp_.num_vertices)
    assert one @ (M @ one) == pytest.approx(0.75, rel=1e-13)
    two = scalar_mass(build_two_level("square", 1).coarse).toarray()
    assert np.linalg.eigvalsh(two).min() > 0


def test_stiffness_spd_on_free_dofs():
    for preset in ("square", "mixed", "lshape"):
        sp_ = spaces_for(preset, 2)
        A = assemble_stiffness(sp_).toarray()
        for free in (sp_.v_free, sp_.q_free):
            ev = np.linalg.eigvalsh(A[np.ix_(free, free)])
            assert ev.min() > 1e-8


def test_divergence_of_identity_and_rotation():
    sp_ = spaces_for("lshape", 2)
    B = assemble_divergence(sp_)
    ident = interpolate_nodal(lambda x: x.copy(), sp_, "full")
    rot = interpolate_nodal(lambda x: np.column_stack([-x[:, 1], x[:, 0]]),
                            sp_, "full")
    assert np.allclose(B @ ident, -2 * sp_.mesh.coarse.areas(), atol=1e-14)
    assert np.abs(B @ rot).max() < 1e-14


def _boundary_flux(z, mesh):
    """Independent route: sum over boundary edges of the trapezoid rule for
    z.n (exact for P1), with the normal pointing away from the triangle."""
    fine = mesh.fine
    v = fine.vertices
    zz = z.reshape(-1, 2)
    edges, tri_edges, counts = fine.edges()
    total = 0.0
    for t, tri in enumerate(fine.triangles):
        for k in range(3):
            e = tri_edges[t, k]
            if counts[e] != 1:
                continue
            a, b = edges[e]
            c = np.setdiff1d(tri, [a, b])[0]
            d = v[b] - v[a]
            n = np.array([d[1], -d[0]])
            if np.dot(n, v[c] - v[a]) > 0:
                n = -n
            total += 0.5 * np.dot(zz[a] + zz[b], n)   # |edge| cancels with |n|
    return total


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), preset=st.sampled_from(["square", "lshape"]))
def test_divergence_theorem_random_field(seed, preset):
    sp_ = spaces_for(preset, 2)
    z = np.random.default_rng(seed).normal(size=sp_.ndof)
    B = assemble_divergence(sp_)
    assert (B @ z).sum() == pytest.approx(-_boundary_flux(z, sp_.mesh), abs=1e-12)


def test_divergence_against_quadrature(rng):
    sp_ = spaces_for("lshape", 2)
    mesh = sp_.mesh
    B = assemble_divergence(sp_)
    q = rng.normal(size=sp_.npressure)
    z = rng.normal(size=sp_.ndof)
    grads = p1_gradients(z, mesh)
    div = grads[:, 0, 0] + grads[:, 1, 1]
    quad = triangle_quadrature(2)
    area = mesh.fine.areas()
    direct = -np.sum(area * q[mesh.parent] * div * quad.weights.sum())
    assert q @ (B @ z) == pytest.approx(direct, abs=1e-12)


def test_single_level_divergence_shape():
    sp_ = spaces_for("square", 2)
    assert assemble_divergence(sp_, "fine").shape == (32, sp_.ndof)
    with pytest.raises(ValueError):
        assemble_divergence(sp_, "middle")


def test_load_vectors():
    sp_ = spaces_for("lshape", 2)
    zero = assemble_load(lambda x: np.zeros_like(x), sp_)
    assert np.all(zero == 0)
    F = assemble_load(lambda x: np.tile([2.0, -1.0], (len(x), 1)), sp_)
    assert F[0::2].sum() == pytest.approx(2.0 * 0.75, rel=1e-13)
    assert F[1::2].sum() == pytest.approx(-0.75, rel=1e-13)


def test_affine_load_on_reference_triangle():
    # f = (x, y): int x*lambda_i over the reference triangle is
    # 1/12 for the vertex at (1,0) and 1/24 for the others
    F = assemble_load(lambda x: x.copy(), one_triangle_spaces(),
                      triangle_quadrature(2))
    assert np.allclose(F[0::2], [1 / 24, 1 / 12, 1 / 24], atol=1e-15)
    assert np.allclose(F[1::2], [1 / 24, 1 / 24, 1 / 12], atol=1e-15)


def test_symmetry_and_determinism(tmp_path):
    sp_ = spaces_for("lshape", 4)
    a = assemble_operators(sp_)
    b = assemble_operators(sp_)
    for x, y in ((a.A, b.A), (a.M, b.M), (a.B, b.B)):
        assert np.array_equal(x.indptr, y.indptr)
        assert np.array_equal(x.indices, y.indices)
        assert np.array_equal(x.data, y.data)
    check_symmetric(a.A)
    check_symmetric(a.M)
    with pytest.raises(ValueError):
        check_symmetric(a.B[:, :a.B.shape[0]])
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    dump_coo(a.A, p1)
    dump_coo(b.A, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert len(p1.read_text().splitlines()) == a.A.nnz
