import numpy as np
import pytest

from platelab.errors import InputError, NonDevelopableError, NonIntegrableFieldError, PreconditionError
from platelab.grid import Grid2D, ScalarField2D, hessian
from platelab.isometries import (
    axis_linearized_isometry,
    check_developable,
    isometric_embedding,
    isometry_residual,
    membrane_residual,
    normal_field,
    sigmoid_ridge,
    sigmoid_ridge_hessian,
    solve_u_linearized,
    sqrt_spd2,
)


def test_sigmoid_ridge_hessian_is_rank_one(grid33):
    v = sigmoid_ridge(grid33, [3.0, -2.0], 0.4, 0.5)
    H = sigmoid_ridge_hessian(grid33, [3.0, -2.0], 0.4, 0.5)
    assert np.max(np.abs(np.linalg.det(H))) < 1e-14
    np.testing.assert_allclose(hessian(v)[4:-4, 4:-4], H[4:-4, 4:-4], atol=5e-3)
    check_developable(v)
    with pytest.raises(InputError):
        sigmoid_ridge(grid33, [1.0, 2.0, 3.0], 0.0)


def test_non_developable_profile_rejected(grid33):
    v = grid33.sample(lambda a, b: 0.3 * (a**2 + b**2))
    with pytest.raises(NonDevelopableError):
        check_developable(v)
    with pytest.raises(NonDevelopableError):
        solve_u_linearized(v)
    with pytest.raises(NonDevelopableError):
        isometric_embedding(v)


def test_linearized_isometry_of_one_variable_profile(grid33):
    v = grid33.sample(lambda a, b: 0.1 * np.sin(np.pi * a))
    sol = solve_u_linearized(v)
    # truncation-level residual against ||grad v||^2 = 0.01 pi^2 / 2
    assert sol.residual <= 1e-3 * 0.01 * np.pi**2 / 2
    assert membrane_residual(sol.u, v) == pytest.approx(sol.residual, rel=1e-6)


def test_linearized_isometry_converges_with_grid():
    res = []
    for n in (17, 33, 65):
        v = Grid2D.square(n).sample(lambda a, b: 0.3 * np.cos(2 * (a + b)))
        res.append(solve_u_linearized(v, tol=np.inf).residual)
    assert res[0] > res[1] > res[2]
    assert res[1] / res[2] > 3.0


def test_zero_profile_gives_zero_displacement(grid17):
    sol = solve_u_linearized(ScalarField2D(grid17, np.zeros(grid17.shape)))
    assert sol.residual == 0.0 and not np.any(sol.u.values)


@pytest.mark.parametrize("axis", [0, 1])
def test_axis_linearized_isometry_is_exact(grid33, axis):
    u, v = axis_linearized_isometry(grid33, lambda s: 0.5 / (1 + np.exp(-8 * s)), axis)
    assert membrane_residual(u, v) < 1e-13
    x = grid33.x1 if axis == 0 else grid33.x2
    line = v.values[:, 0] if axis == 0 else v.values[0, :]
    assert np.max(np.abs(line - 0.5 / (1 + np.exp(-8 * x)))) < 1e-3
    with pytest.raises(InputError):
        axis_linearized_isometry(grid33, np.zeros(5), axis)


def test_sqrt_spd2(rng):
    A = rng.standard_normal((10, 2, 2))
    M = A @ np.swapaxes(A, -1, -2) + 0.1 * np.eye(2)
    S = sqrt_spd2(M)
    np.testing.assert_allclose(S @ S, M, atol=1e-12)
    np.testing.assert_allclose(S, np.swapaxes(S, -1, -2), atol=1e-14)
    with pytest.raises(InputError):
        sqrt_spd2(-np.eye(2)[None])


def test_embedding_sine_profile():
    g = Grid2D.square(129)
    emb = isometric_embedding(g.sample(lambda a, b: 0.2 * np.sin(a)))
    assert emb.residual <= 1e-5
    # exact arclength map for y3 = 0.2 sin x1 is y1' = sqrt(1 - 0.04 cos^2 x1)
    y1 = emb.y.values[:, 64, 0]
    ref = np.sqrt(1 - 0.04 * np.cos(g.x1) ** 2)
    np.testing.assert_allclose(np.gradient(y1, g.x1, edge_order=2), ref, atol=1e-4)
    np.testing.assert_allclose(emb.y.values[..., 2], emb.v.values)
    nu = normal_field(emb.y).values
    np.testing.assert_allclose(np.linalg.norm(nu, axis=-1), 1.0, atol=1e-4)


def test_embedding_oblique_ridge(grid33):
    v = sigmoid_ridge(grid33, [1.5, 1.0], 0.2, 0.2)
    emb = isometric_embedding(v)
    assert emb.residual <= 1e-3
    assert isometry_residual(emb.y) == pytest.approx(emb.residual)


def test_embedding_flat_and_steep(grid17):
    flat = isometric_embedding(ScalarField2D(grid17, np.zeros(grid17.shape)))
    assert flat.residual < 1e-14 and flat.u_sup < 1e-15
    with pytest.raises(PreconditionError):
        isometric_embedding(grid17.sample(lambda a, b: 2.0 * a))


def test_embedding_curved_profile_is_not_integrable(grid33):
    v = grid33.sample(lambda a, b: 0.2 * (a**2 + b**2))
    with pytest.raises(NonIntegrableFieldError):
        isometric_embedding(v, check=False)
