import numpy as np
import pytest

from platelab.catalog import LOADS, buckling_profile, make_load
from platelab.errors import ConfigError, DegenerateLoadError, InputError
from platelab.grid import VectorField2D
from platelab.loads import (
    Coefficients,
    Load,
    MomentMatrix,
    coefficients,
    compatibility_residual,
    evaluate_F,
    load_scale,
    moment_matrix,
    normalize_mean,
)


def test_example_b_moment_matrix(grid33):
    M = moment_matrix(make_load("example_b", grid33)).M
    expect = np.zeros((3, 3))
    expect[2, 0] = 1 / 12
    np.testing.assert_allclose(M, expect, atol=1e-14)


def test_load_requires_zero_mean(grid17):
    f = np.zeros(grid17.shape + (3,))
    f[..., 2] = 1.0 + grid17.coords[0]
    with pytest.raises(InputError):
        Load(VectorField2D(grid17, f))
    centred = normalize_mean(VectorField2D(grid17, f))
    assert np.allclose(centred.f.values[..., 2], grid17.coords[0])


def test_constant_load_is_degenerate(grid17):
    with pytest.raises(DegenerateLoadError):
        normalize_mean(VectorField2D(grid17, np.ones(grid17.shape + (3,))))
    with pytest.raises(DegenerateLoadError):
        Load(VectorField2D(grid17, np.zeros(grid17.shape + (3,))))


def test_moment_matrix_third_column_must_vanish():
    with pytest.raises(InputError):
        MomentMatrix(np.ones((3, 3)))
    assert MomentMatrix.from_array(np.ones((3, 3))).M[:, 2].tolist() == [0, 0, 0]


def test_F_is_linear_and_batched(rng):
    M = MomentMatrix.from_array(rng.standard_normal((3, 3)))
    A = rng.standard_normal((4, 3, 3))
    vals = evaluate_F(M, A)
    assert vals.shape == (4,)
    assert vals[0] + 2 * vals[1] == pytest.approx(evaluate_F(M, A[0] + 2 * A[1]))


def test_F_matches_direct_integral(grid17, rng):
    load = make_load("affine", grid17, matrix=rng.standard_normal((3, 2)).tolist())
    R = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    X = np.concatenate([grid17.points, np.zeros(grid17.shape + (1,))], -1)
    direct = np.sum(grid17.weights * np.sum(load.f.values * (X @ R.T), -1))
    assert evaluate_F(moment_matrix(load), R) == pytest.approx(direct, abs=1e-13)


def test_rotated_load_moves_moment_matrix(grid17, rng):
    load = make_load("twist", grid17)
    Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    np.testing.assert_allclose(moment_matrix(load.rotated(Q)).M, Q @ moment_matrix(load).M, atol=1e-14)


def test_compatibility_residual(grid17):
    load = make_load("example_b", grid17)
    R = np.array([[0.0, 0, -1], [0, 1, 0], [1, 0, 0]])
    assert compatibility_residual(load, R) == 0.0
    assert compatibility_residual(load, np.eye(3)) == pytest.approx(np.sqrt(1 / 12), rel=1e-12)


def test_coefficients_definitions(grid17):
    load = make_load("singleton", grid17)
    c = coefficients(load, np.eye(3))
    assert (c.a, c.b) == pytest.approx((2 / 12, 1 / 12))
    assert c.c == pytest.approx(0.0) and c.c_residual == pytest.approx(0.0)
    assert c.det > 0
    assert Coefficients.from_abc(1, 4, 2).det == 0


def test_load_scale_positive(grid17):
    assert load_scale(make_load("example_b", grid17).f) == pytest.approx(np.sqrt(1 / 12))


def test_catalog(grid17):
    for name in LOADS:
        assert isinstance(make_load(name, grid17), Load)
    with pytest.raises(ConfigError):
        make_load("nope", grid17)
    with pytest.raises(ConfigError):
        make_load("example_b", grid17, bogus=1)
    with pytest.raises(ConfigError):
        make_load("buckling", grid17, beta=0.2)


def test_buckling_profile_shape():
    x = np.linspace(-0.5, 0.5, 2001)
    G, g = buckling_profile(x)
    assert G[0] == pytest.approx(0.0, abs=1e-12) and G[-1] == pytest.approx(0.0, abs=1e-12)
    assert G[1000] > 0
    assert np.trapezoid(G, x) < 0
    np.testing.assert_allclose(np.gradient(G, x)[5:-5], g[5:-5], atol=1e-5)
