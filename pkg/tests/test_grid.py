import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platelab.errors import GridMismatchError, InputError, NonIntegrableFieldError
from platelab.grid import (
    Field3D,
    Grid2D,
    ScalarField2D,
    VectorField2D,
    axis_weights,
    curl,
    first_derivative_matrix,
    gradient,
    hessian,
    integrate,
    integrate_potential,
    jacobian,
    second_derivative_matrix,
)


@pytest.mark.parametrize("n", [5, 6, 9, 10, 33])
def test_axis_weights_exact_on_cubics(n):
    x = np.linspace(-0.5, 1.0, n)
    w = axis_weights(n, x[1] - x[0])
    for k in range(4):
        exact = (1.0 ** (k + 1) - (-0.5) ** (k + 1)) / (k + 1)
        assert w @ x**k == pytest.approx(exact, abs=1e-13)


def test_area_and_weights(grid17):
    assert integrate(ScalarField2D(grid17, np.ones(grid17.shape))) == pytest.approx(1.0, abs=1e-14)
    assert grid17.weights.sum() == pytest.approx(grid17.area)


def test_integrate_moments(grid17):
    X1, X2 = grid17.coords
    assert integrate((grid17, X1**2)) == pytest.approx(1 / 12, abs=1e-14)
    assert integrate((grid17, X1**2 * X2**2)) == pytest.approx(1 / 144, abs=1e-14)
    assert integrate((grid17, X1 * X2)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("n", [3, 4, 7, 12])
def test_derivative_matrices_exact_on_quadratics(n):
    x = np.linspace(0.0, 2.0, n)
    h = x[1] - x[0]
    D = first_derivative_matrix(n, h)
    D2 = second_derivative_matrix(n, h)
    f = 3 * x**2 - x + 2
    np.testing.assert_allclose(D @ f, 6 * x - 1, atol=1e-11)
    np.testing.assert_allclose(D2 @ f, 6.0, atol=1e-9)


def test_operators_match_numpy_gradient(grid17, rng):
    v = rng.standard_normal(grid17.shape)
    g = gradient(ScalarField2D(grid17, v)).values
    ops = grid17.operators
    np.testing.assert_allclose((ops["d1"] @ v.ravel()).reshape(grid17.shape), g[..., 0], atol=1e-10)
    np.testing.assert_allclose((ops["d2"] @ v.ravel()).reshape(grid17.shape), g[..., 1], atol=1e-10)


def test_hessian_of_quadratic(grid17):
    X1, X2 = grid17.coords
    H = hessian(ScalarField2D(grid17, X1**2 + 3 * X1 * X2 - X2**2))
    np.testing.assert_allclose(H[..., 0, 0], 2.0, atol=1e-9)
    np.testing.assert_allclose(H[..., 0, 1], 3.0, atol=1e-9)
    np.testing.assert_allclose(H[..., 1, 0], 3.0, atol=1e-9)
    np.testing.assert_allclose(H[..., 1, 1], -2.0, atol=1e-9)


def test_jacobian_layout(grid17):
    X1, X2 = grid17.coords
    J = jacobian(VectorField2D(grid17, np.stack([2 * X1 + X2, 5 * X2], -1)))
    np.testing.assert_allclose(J[..., 0, 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(J[..., 0, 1], 1.0, atol=1e-12)
    np.testing.assert_allclose(J[..., 1, 0], 0.0, atol=1e-12)


def test_potential_recovers_gradient_field(grid33):
    X1, X2 = grid33.coords
    phi = np.sin(X1) * np.cos(2 * X2) + X1 * X2
    g = np.stack([np.cos(X1) * np.cos(2 * X2) + X2, -2 * np.sin(X1) * np.sin(2 * X2) + X1], -1)
    out = integrate_potential(VectorField2D(grid33, g)).values
    phi = phi - integrate((grid33, phi))
    assert np.max(np.abs(out - phi)) < 1e-6


def test_potential_rejects_rotation_field(grid17):
    X1, X2 = grid17.coords
    with pytest.raises(NonIntegrableFieldError) as exc:
        integrate_potential(VectorField2D(grid17, np.stack([-X2, X1], -1)))
    assert exc.value.residual > exc.value.tolerance


def test_curl_of_gradient_is_small(grid33):
    X1, X2 = grid33.coords
    g = gradient(ScalarField2D(grid33, np.exp(X1) * X2**2))
    assert np.max(np.abs(curl(g).values)) < 1e-2


def test_field_validation(grid17):
    with pytest.raises(InputError):
        ScalarField2D(grid17, np.zeros((3, 3)))
    bad = np.zeros(grid17.shape)
    bad[0, 0] = np.nan
    with pytest.raises(InputError):
        ScalarField2D(grid17, bad)
    with pytest.raises(InputError):
        VectorField2D(grid17, np.zeros(grid17.shape + (4,)))
    other = Grid2D.square(9, 0.5)
    with pytest.raises(GridMismatchError):
        ScalarField2D(grid17, np.zeros(grid17.shape)) + ScalarField2D(other, np.zeros(other.shape))


def test_fields_are_read_only(grid17):
    f = ScalarField2D(grid17, np.zeros(grid17.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_field3d_weights(grid17):
    F = Field3D(grid17, 5, np.zeros(grid17.shape + (5, 3)))
    assert F.weights.sum() == pytest.approx(1.0)
    assert F.x3[0] == -0.5 and F.x3[-1] == 0.5


def test_refined_grid_halves_spacing(grid17):
    fine = grid17.refined()
    assert fine.n1 == 33 and fine.spacing[0] == pytest.approx(grid17.spacing[0] / 2)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_is_linear(a, b, c):
    g = Grid2D.square(9, 0.5)
    X1, X2 = g.coords
    lhs = integrate((g, a * X1**2 + b * X2 + c))
    assert lhs == pytest.approx(a / 12 + c, abs=1e-12)
