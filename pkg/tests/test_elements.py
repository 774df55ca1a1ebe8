import math

import numpy as np
import pytest

from porofem import elements as el
from porofem import mesh as pm


def ref_monomial_integral(i, j):
    # exact integral of x^i y^j over the reference triangle
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


def test_quadrature_exact_to_declared_degree():
    rule = el.default_rule()
    x, y = rule.points[:, 1], rule.points[:, 2]
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-16)
    assert np.all(rule.weights > 0)
    for i in range(rule.degree + 1):
        for j in range(rule.degree + 1 - i):
            got = np.sum(rule.weights * x**i * y**j)
            want = ref_monomial_integral(i, j)
            assert abs(got - want) <= 1e-14 * abs(want)


def test_p1_values():
    vals, grads = el.eval_basis("P1", [1 / 3, 1 / 3, 1 / 3])
    assert vals == pytest.approx([1 / 3, 1 / 3, 1 / 3])
    assert grads == pytest.approx(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]))


def test_p2_nodal_property():
    nodes = np.array([
        [1, 0, 0], [0, 1, 0], [0, 0, 1],      # vertices
        [0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0],  # midpoint opposite vertex k
    ])
    for a, lam in enumerate(nodes):
        vals, _ = el.eval_basis("P2", lam)
        assert vals == pytest.approx(np.eye(6)[a], abs=1e-15)


def test_bubble_normalization_and_boundary():
    vals, _ = el.eval_basis("MINI", [1 / 3, 1 / 3, 1 / 3])
    assert vals[3] == pytest.approx(1.0)
    for lam in ([0, 0.3, 0.7], [0.4, 0, 0.6], [0.9, 0.1, 0]):
        vals, _ = el.eval_basis("MINI", lam)
        assert vals[3] == 0.0


@pytest.mark.parametrize("family", ["P1", "P2", "MINI"])
def test_partition_of_unity_and_gradients(family):
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.random(2)
        if x + y > 1:
            x, y = 1 - x, 1 - y
        lam = np.array([1 - x - y, x, y])
        vals, grads = el.eval_basis(family, lam)
        nodal = vals if family != "MINI" else vals[:3]
        nodal_g = grads if family != "MINI" else grads[:3]
        assert nodal.sum() == pytest.approx(1.0, abs=1e-14)
        assert nodal_g.sum(axis=0) == pytest.approx([0, 0], abs=1e-13)
        # gradients match central differences of the values
        h = 1e-6
        for d, e in enumerate(np.eye(2)):
            lp = np.array([1 - x - h * e[0] - y - h * e[1], x + h * e[0], y + h * e[1]])
            lm = np.array([1 - x + h * e[0] - y + h * e[1], x - h * e[0], y - h * e[1]])
            vp, _ = el.eval_basis(family, lp)
            vm, _ = el.eval_basis(family, lm)
            assert grads[:, d] == pytest.approx((vp - vm) / (2 * h), abs=1e-8)


def test_dof_counts_small():
    m = pm.build_unit_square(1)
    assert el.make_space(m, "P1", 1).n_dofs == 4
    assert el.make_space(m, "P2", 1).n_dofs == 9
    assert el.make_space(m, "P2", 2).n_dofs == 18
    assert el.make_space(m, "MINI", 2).n_dofs == 12


def test_system_sizes_N32():
    m = pm.build_unit_square(32)
    th = el.make_space(m, "P2", 2).n_dofs + 2 * el.make_space(m, "P1", 1).n_dofs
    mini = el.make_space(m, "MINI", 2).n_dofs + 2 * el.make_space(m, "P1", 1).n_dofs
    assert th == 10628
    assert mini == 8452


def test_vector_interleaving_and_coords():
    m = pm.build_unit_square(2)
    V = el.make_space(m, "P2", 2)
    assert np.array_equal(V.dof_map[:, 0::2], 2 * V.scalar_dofs)
    assert np.array_equal(V.dof_map[:, 1::2], 2 * V.scalar_dofs + 1)
    # edge dof coordinates are edge midpoints
    Q2 = el.make_space(m, "P2", 1)
    mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
    assert Q2.dof_coords[m.num_vertex:] == pytest.approx(mids)
    assert V.dof_coords[2 * m.num_vertex] == pytest.approx(mids[0])


def test_unsupported_combinations():
    m = pm.build_unit_square(1)
    with pytest.raises(ValueError):
        el.make_space(m, "MINI", 1)
    with pytest.raises(ValueError):
        el.make_space(m, "P3", 1)
    with pytest.raises(ValueError):
        el.eval_basis("Q1", [1 / 3, 1 / 3, 1 / 3])


def test_dirichlet_all_boundary_pressure():
    m = pm.build_unit_square(1)
    Q = el.make_space(m, "P1", 1)
    assert np.array_equal(el.dirichlet_dofs(Q, "pressure"), [0, 1, 2, 3])


def test_dirichlet_counts_all_dirichlet():
    m = pm.build_unit_square(2)
    V = el.make_space(m, "P2", 2)
    dofs = el.dirichlet_dofs(V, "displacement")
    assert dofs.size == 2 * (8 + 8)
    assert np.all(np.diff(dofs) > 0)


def test_dirichlet_left_open_excludes_interior_of_right_edge():
    m = pm.build_unit_square(2, "left_open")
    V = el.make_space(m, "P2", 2)
    dofs = el.dirichlet_dofs(V, "displacement")
    # 7 of 8 boundary vertices (midside vertex of x=1 is free), 6 of 8 edges
    assert dofs.size == 2 * (7 + 6)
    coords = V.dof_coords[dofs]
    on_right_interior = (coords[:, 0] == 1.0) & (coords[:, 1] > 0) & (coords[:, 1] < 1)
    assert not np.any(on_right_interior)
    # pressure keeps the whole boundary
    Q = el.make_space(m, "P1", 1)
    assert el.dirichlet_dofs(Q, "pressure").size == 8


def test_dirichlet_role_mismatch():
    m = pm.build_unit_square(1)
    with pytest.raises(ValueError):
        el.dirichlet_dofs(el.make_space(m, "P1", 1), "displacement")
    with pytest.raises(ValueError):
        el.dirichlet_dofs(el.make_space(m, "P1", 2), "pressure")


def test_bubble_dofs_never_constrained():
    m = pm.build_unit_square(2)
    V = el.make_space(m, "MINI", 2)
    dofs = el.dirichlet_dofs(V, "displacement")
    assert np.all(dofs < 2 * m.num_vertex)
