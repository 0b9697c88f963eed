import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepnurbs.admissible import (
    EDGES,
    AdmissibleScalarField,
    AdmissibleVectorField,
    build_admissible_scalar,
    build_admissible_vector,
    edge_points,
    eval_phi,
    eval_zeta,
    grad_phi_physical,
    grad_zeta_physical,
    validate_admissibility,
)
from deepnurbs.errors import ParametricDomainError, SingularJacobian
from deepnurbs.nurbs import ControlNet, affine_net, eval_basis, eval_geometry, make_open_knot_vector


def wavy_net():
    """Smooth, non-affine, rational geometry used by the gradient oracles."""
    base = affine_net([0, 0], [2, 1], degrees=3, num_basis=6)
    rng = np.random.default_rng(3)
    pts = base.points + 0.04 * rng.standard_normal(base.points.shape)
    return ControlNet(base.knot_vectors, pts, 0.7 + 0.6 * rng.random(base.shape))


def xi1_field(geometry):
    # coefficients at Greville abscissae reproduce phi(xi) = xi1 (weights 1)
    g = geometry.knot_vectors[0].greville()
    return AdmissibleScalarField(geometry, np.repeat(g[:, None], geometry.shape[1], axis=1), ())


def test_constant_coefficients_give_constant_field():
    geom = wavy_net()
    field = AdmissibleScalarField(geom, np.ones(geom.shape), ())
    xi = np.random.default_rng(0).random((200, 2))
    np.testing.assert_allclose(eval_phi(field, xi), 1.0, atol=1e-14)


def test_zeroed_boundary_vanishes_on_edge():
    geom = affine_net([0, 0], [1, 1], 2, 4)
    field = build_admissible_scalar(geom, EDGES)
    t = np.linspace(0, 1, 50)
    np.testing.assert_array_equal(eval_phi(field, edge_points("xi1_0", t)), 0.0)


def test_interior_block_value_at_center():
    geom = affine_net([0, 0], [1, 1], 2, 4)
    field = build_admissible_scalar(geom, EDGES)
    kv = make_open_knot_vector(2, 4)
    n = eval_basis(kv, 0.5)
    # brute-force tensor expansion: four interior terms of 0.5 * 0.5 each
    brute = sum(n[i] * n[j] * field.coefficients[i, j] for i in range(4) for j in range(4))
    assert all(n[i] * n[j] == 0.25 for i in (1, 2) for j in (1, 2))
    assert brute == pytest.approx(1.0)
    assert eval_phi(field, [0.5, 0.5]) == pytest.approx(brute, abs=1e-15)


def test_build_examples():
    geom = affine_net([0, 0], [1, 1], 2, 4)
    full = build_admissible_scalar(geom, EDGES)
    expected = np.zeros((4, 4))
    expected[1:3, 1:3] = 1.0
    np.testing.assert_array_equal(full.coefficients, expected)
    one = build_admissible_scalar(geom, ["xi1_0"])
    assert int(np.sum(one.coefficients == 1.0)) == 12


def test_random_fill_is_reproducible_and_positive():
    geom = affine_net([0, 0], [1, 1], 2, 6)
    a = build_admissible_scalar(geom, EDGES, "random", seed=4)
    b = build_admissible_scalar(geom, EDGES, "random", seed=4)
    c = build_admissible_scalar(geom, EDGES, "random", seed=5)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert not np.array_equal(a.coefficients, c.coefficients)
    inner = a.coefficients[1:-1, 1:-1]
    assert inner.min() > 0.0 and inner.max() <= 1.0


def test_empty_interior_rejected():
    geom = affine_net([0, 0], [1, 1], 1, 2)
    with pytest.raises(ValueError):
        build_admissible_scalar(geom, EDGES)


def test_unknown_edge_rejected():
    with pytest.raises(ValueError):
        build_admissible_scalar(affine_net([0, 0], [1, 1], 2, 4), ["left"])


def test_validate_admissibility_examples():
    geom = affine_net([0, 0], [1, 1], 2, 5)
    good = build_admissible_scalar(geom, EDGES)
    rep = validate_admissibility(good, 1000)
    assert rep.passed and rep.max_boundary_abs < 1e-12
    bad = good.coefficients.copy()
    bad[0, 2] = 1.0
    rep = validate_admissibility(AdmissibleScalarField(geom, bad, EDGES), 1000)
    assert not rep.passed
    zero = AdmissibleScalarField(geom, np.zeros(geom.shape), EDGES)
    assert validate_admissibility(zero).passed
    with pytest.raises(ValueError):
        validate_admissibility(good, 1)


def test_domain_errors():
    field = build_admissible_scalar(affine_net([0, 0], [1, 1], 2, 4), EDGES)
    with pytest.raises(ParametricDomainError):
        eval_phi(field, [1.2, 0.5])


def test_zeta_examples():
    geom = wavy_net()
    xi = np.random.default_rng(1).random((100, 2))
    zero = AdmissibleVectorField(geom, np.zeros(geom.shape + (2,)), ())
    np.testing.assert_array_equal(eval_zeta(zero, xi), 0.0)
    c = np.array([0.3, -2.0])
    const = AdmissibleVectorField(geom, np.broadcast_to(c, geom.shape + (2,)), ())
    np.testing.assert_allclose(eval_zeta(const, xi), np.broadcast_to(c, (100, 2)), atol=1e-14)
    same = AdmissibleVectorField(geom, geom.points, ())
    np.testing.assert_allclose(eval_zeta(same, xi), eval_geometry(geom, xi), atol=1e-12)


def test_vector_lift_reproduces_data_at_corners():
    geom = affine_net([0, 0], [1, 1], 2, 4)

    def data(x):
        return (x[:, 0] + 2 * x[:, 1])[:, None]

    zeta = build_admissible_vector(geom, EDGES, data)
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    np.testing.assert_allclose(eval_zeta(zeta, corners)[:, 0], data(corners)[:, 0], atol=1e-14)
    # a linear function on an affine net is reproduced along whole edges
    t = np.linspace(0, 1, 11)
    pts = edge_points("xi2_1", t)
    np.testing.assert_allclose(eval_zeta(zeta, pts)[:, 0], data(eval_geometry(geom, pts))[:, 0], atol=1e-12)


def test_gradient_examples():
    ident = affine_net([0, 0], [1, 1])
    np.testing.assert_allclose(grad_phi_physical(xi1_field(ident), ident, [0.3, 0.6]), [1.0, 0.0], atol=1e-14)
    doubled = affine_net([0, 0], [2, 2])
    np.testing.assert_allclose(grad_phi_physical(xi1_field(doubled), doubled, [0.3, 0.6]), [0.5, 0.0], atol=1e-14)


def test_gradient_matches_composed_finite_difference():
    # d phi / d x = J^{-T} d phi / d xi; check via FD in xi of both phi and x
    geom = wavy_net()
    coeffs = np.random.default_rng(2).random(geom.shape)
    field = AdmissibleScalarField(geom, coeffs, ())
    rng = np.random.default_rng(7)
    xi = 0.02 + 0.96 * rng.random((200, 2))
    h = 1e-6
    g = grad_phi_physical(field, geom, xi)
    for b in range(2):
        e = np.zeros(2)
        e[b] = h
        dphi = (eval_phi(field, xi + e) - eval_phi(field, xi - e)) / (2 * h)
        dx = (eval_geometry(geom, xi + e) - eval_geometry(geom, xi - e)) / (2 * h)
        # the chain rule in direction b must hold: d phi/d xi_b = grad_x phi . dx/d xi_b
        np.testing.assert_allclose(np.sum(g * dx, axis=1), dphi, rtol=1e-5, atol=1e-5 * np.max(np.abs(dphi)))


def test_vector_gradient_rows_match_scalar_gradients():
    geom = wavy_net()
    coeffs = np.random.default_rng(8).random(geom.shape + (2,))
    zeta = AdmissibleVectorField(geom, coeffs, ())
    xi = np.random.default_rng(9).random((30, 2))
    gz = grad_zeta_physical(zeta, geom, xi)
    for c in range(2):
        gs = grad_phi_physical(AdmissibleScalarField(geom, coeffs[..., c], ()), geom, xi)
        np.testing.assert_allclose(gz[:, c, :], gs, atol=1e-12)


def test_singular_jacobian_raises():
    kv = make_open_knot_vector(1, 2)
    # collapse the xi2 = 0 edge to a point
    pts = np.array([[[0.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 1.0]]])
    geom = ControlNet((kv, kv), pts)
    field = AdmissibleScalarField(geom, np.ones((2, 2)), ())
    with pytest.raises(SingularJacobian):
        grad_phi_physical(field, geom, [0.5, 0.0])


def test_gradient_continuous_across_knot_lines():
    geom = wavy_net()
    field = AdmissibleScalarField(geom, np.random.default_rng(5).random(geom.shape), ())
    knots = np.unique(geom.knot_vectors[0].array)[1:-1]
    for k in knots:
        left = grad_phi_physical(field, geom, [k - 1e-11, 0.4])
        right = grad_phi_physical(field, geom, [k + 1e-11, 0.4])
        np.testing.assert_allclose(left, right, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), edge=st.sampled_from(EDGES))
def test_boundary_annihilation_property(seed, edge):
    rng = np.random.default_rng(seed)
    geom = affine_net([0, 0], [1, 1], int(rng.integers(1, 4)), int(rng.integers(4, 8)))
    field = build_admissible_scalar(geom, [edge], "random", seed=seed)
    t = rng.random(100)
    assert np.max(np.abs(eval_phi(field, edge_points(edge, t)))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_phi_is_linear_in_coefficients(seed):
    rng = np.random.default_rng(seed)
    geom = wavy_net()
    a, b = rng.standard_normal(geom.shape), rng.standard_normal(geom.shape)
    xi = rng.random((20, 2))
    fa = AdmissibleScalarField(geom, a, ())
    fb = AdmissibleScalarField(geom, b, ())
    fab = AdmissibleScalarField(geom, a + b, ())
    np.testing.assert_allclose(eval_phi(fab, xi), eval_phi(fa, xi) + eval_phi(fb, xi), atol=1e-12)


def test_seam_ties_first_and_last_slab():
    geom = affine_net([0, 0], [1, 1], 2, 5)
    field = build_admissible_scalar(geom, ["xi2_0", "xi2_1"], "random", seed=1, seam_axis=0)
    np.testing.assert_array_equal(field.coefficients[0], field.coefficients[-1])


def test_coefficients_are_read_only():
    field = build_admissible_scalar(affine_net([0, 0], [1, 1], 2, 4), EDGES)
    with pytest.raises(ValueError):
        field.coefficients[1, 1] = 5.0
