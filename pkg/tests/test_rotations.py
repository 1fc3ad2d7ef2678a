import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from oracles import ascent_max_F
from platelab.catalog import make_load
from platelab.errors import BranchAmbiguityError, DomainError, InputError, ProjectionUndefinedError
from platelab.loads import MomentMatrix, coefficients, evaluate_F, moment_matrix
from platelab.rotations import (
    SkewMatrix,
    check_rotation,
    classify_optimal_set,
    distance_to_set,
    exp_skew,
    geodesic_distance,
    log_rotation,
    maximize_F,
    normal_space,
    project_to_set,
    skew,
    skew_coords,
    tangent_space,
)

vec = st.lists(st.floats(-2.5, 2.5), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(vec)
def test_exp_matches_matrix_exponential(w):
    np.testing.assert_allclose(exp_skew(w), expm(skew(w)), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(vec)
def test_log_inverts_exp(w):
    w = np.asarray(w)
    if np.linalg.norm(w) > np.pi - 1e-3:
        return
    np.testing.assert_allclose(log_rotation(exp_skew(w)).w, w, atol=1e-9)


def test_small_angle_series():
    w = np.array([1e-9, -2e-9, 3e-10])
    np.testing.assert_allclose(exp_skew(w), np.eye(3) + skew(w), atol=1e-17)
    np.testing.assert_allclose(log_rotation(exp_skew(w)).w, w, atol=1e-20)


def test_log_at_pi_is_ambiguous():
    with pytest.raises(BranchAmbiguityError):
        log_rotation(exp_skew([np.pi, 0, 0]))


def test_skew_conventions():
    w = np.array([1.0, 2.0, 3.0])
    W = skew(w)
    np.testing.assert_allclose(W, -W.T)
    np.testing.assert_allclose(skew_coords(W), w)
    assert SkewMatrix(w).frobenius == pytest.approx(np.sqrt(2) * np.linalg.norm(w))
    # rotation angle equals the coordinate norm
    assert geodesic_distance(exp_skew(0.3 * w / np.linalg.norm(w)), np.eye(3)) == pytest.approx(0.3 * np.sqrt(2))


def test_check_rotation_rejects_reflections():
    with pytest.raises(InputError):
        check_rotation(np.diag([1.0, 1.0, -1.0]))


def test_maximizer_example_b(grid33):
    load = make_load("example_b", grid33)
    ors = classify_optimal_set(load, moment_matrix(load))
    assert ors.dim == 1
    assert ors.max_value == pytest.approx(1 / 12, abs=1e-12)
    assert ors.representative[2, 0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(np.abs(ors.generator.w) * np.sqrt(2), [0, 0, 1], atol=1e-12)


def test_dimension_classes(grid17):
    dims = {name: classify_optimal_set(l := make_load(name, grid17), moment_matrix(l)).dim
            for name in ("example_b", "singleton", "twist", "zero_moment", "buckling")}
    assert dims == {"example_b": 1, "singleton": 0, "twist": 1, "zero_moment": 3, "buckling": 1}


@pytest.mark.parametrize("seed", range(5))
def test_maximize_F_matches_ascent(seed):
    rng = np.random.default_rng(seed)
    M = MomentMatrix.from_array(rng.standard_normal((3, 3)))
    R = maximize_F(M)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)
    best, _ = ascent_max_F(M.M, starts=10, iters=300, seed=seed)
    assert evaluate_F(M, R) == pytest.approx(best, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_first_and_second_order_conditions(seed):
    rng = np.random.default_rng(seed)
    M = MomentMatrix.from_array(rng.standard_normal((3, 3)))
    R = maximize_F(M)
    for _ in range(3):
        W = skew(rng.standard_normal(3))
        assert abs(evaluate_F(M, R @ W)) <= 1e-10 * max(1, M.norm)
        assert evaluate_F(M, R @ W @ W) <= 1e-10 * max(1, M.norm)


def test_tangent_and_normal_spaces(grid17):
    load = make_load("example_b", grid17)
    ors = classify_optimal_set(load, moment_matrix(load))
    T = tangent_space(ors)
    N = normal_space(ors)
    assert len(T) == 1 and len(N) == 2
    basis = np.array([b.w for b in T + N])
    np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-12)
    R = ors.member(0.7)
    assert ors.contains(R)
    np.testing.assert_allclose(abs(tangent_space(ors, R)[0].w @ T[0].w), 1.0, atol=1e-12)
    with pytest.raises(DomainError):
        tangent_space(ors, np.eye(3))


def test_singleton_spaces(grid17):
    load = make_load("singleton", grid17)
    ors = classify_optimal_set(load, moment_matrix(load))
    assert tangent_space(ors) == [] and len(normal_space(ors)) == 3
    np.testing.assert_allclose(ors.representative, np.eye(3), atol=1e-12)
    c = coefficients(load, ors.representative)
    assert c.a * c.b - c.c**2 > 0


def test_projection_onto_circle(grid17, rng):
    load = make_load("example_b", grid17)
    ors = classify_optimal_set(load, moment_matrix(load))
    for t in (0.0, 1.0, -2.5):
        R0 = ors.member(t)
        Rp = R0 @ exp_skew(0.1 * normal_space(ors)[0].w)
        P = project_to_set(Rp, ors)
        assert ors.contains(P)
        assert geodesic_distance(Rp, P) == pytest.approx(distance_to_set(Rp, ors))
        assert geodesic_distance(Rp, P) == pytest.approx(0.1 * np.sqrt(2), rel=1e-9)
        # brute force over the circle, with the angle taken from the trace
        ts = np.linspace(0, 2 * np.pi, 4001)
        angles = [np.arccos(np.clip((np.trace(Rp.T @ ors.member(s)) - 1) / 2, -1, 1)) for s in ts]
        assert geodesic_distance(Rp, P) <= np.sqrt(2) * min(angles) + 1e-9
    with pytest.raises(ProjectionUndefinedError):
        project_to_set(ors.member(0.0) @ exp_skew([3.0, 0, 0]), ors)
