"""Developable profiles, linearized isometries and isometric embeddings of the plate.

Conventions for matrix fields ``F`` of shape ``(n1, n2, 2, 2)``: the curl acts
row by row, ``curl(F)_i = d1 F_i2 - d2 F_i1``, and the rotation by an angle
``theta`` is ``[[cos, -sin], [sin, cos]]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import InputError, NonDevelopableError, NonIntegrableFieldError, PreconditionError
from .grid import (
    Grid2D,
    first_derivative_matrix,
    ScalarField2D,
    VectorField2D,
    curl,
    gradient,
    hessian,
    integrate,
    integrate_potential,
    jacobian,
)

log = logging.getLogger(__name__)

__all__ = [
    "DevelopableProfile",
    "IsometricEmbedding",
    "LinearizedSolution",
    "developability_residual",
    "developable_profile",
    "check_developable",
    "sigmoid_ridge",
    "solve_u_linearized",
    "axis_linearized_isometry",
    "membrane_residual",
    "isometric_embedding",
    "isometry_residual",
    "normal_field",
    "sqrt_spd2",
    "DEV_RTOL",
]

# relative developability threshold: L1 norm of det(hess v) against the L1
# norm of |hess v|^2; finite-difference Hessians of developable profiles
# carry an O(h^2) determinant, genuinely curved profiles are O(1)
DEV_RTOL = 1e-2
# relative residual threshold of the linearized-isometry least-squares solve
LIN_RTOL = 2e-2


def developability_residual(v: ScalarField2D) -> float:
    """``||det hess(v)||_{L1}``."""
    H = hessian(v)
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] ** 2
    return integrate(ScalarField2D(v.grid, np.abs(det)))


@dataclass(frozen=True)
class DevelopableProfile:
    v: ScalarField2D
    det_residual: float
    grad_sup: float
    hessian_sq: float

    @property
    def relative_residual(self) -> float:
        return self.det_residual / self.hessian_sq if self.hessian_sq > 0 else 0.0


def developable_profile(v: ScalarField2D) -> DevelopableProfile:
    H = hessian(v)
    g = gradient(v).values
    hsq = integrate(ScalarField2D(v.grid, np.sum(H**2, axis=(-1, -2))))
    return DevelopableProfile(v, developability_residual(v), float(np.max(np.linalg.norm(g, axis=-1))), hsq)


def check_developable(v: ScalarField2D, rtol: float = DEV_RTOL) -> DevelopableProfile:
    prof = developable_profile(v)
    if prof.det_residual > rtol * prof.hessian_sq + 1e-14:
        raise NonDevelopableError(
            f"profile is not developable: ||det hess||_L1 = {prof.det_residual:.3e} "
            f"exceeds {rtol:g} * ||hess||^2_L2 = {rtol * prof.hessian_sq:.3e}"
        )
    return prof


def _logistic(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def sigmoid_ridge(grid: Grid2D, direction, offset: float, amplitude: float = 1.0) -> ScalarField2D:
    """Sample ``amplitude * sigma(direction . x + offset)`` with the logistic sigma.

    Its Hessian ``amplitude * sigma'' * direction direction^T`` has rank one.
    """
    y = np.asarray(direction, dtype=float)
    if y.shape != (2,):
        raise InputError("ridge direction must be a 2-vector")
    X1, X2 = grid.coords
    return ScalarField2D(grid, amplitude * _logistic(y[0] * X1 + y[1] * X2 + float(offset)))


def sigmoid_ridge_hessian(grid: Grid2D, direction, offset: float, amplitude: float = 1.0) -> np.ndarray:
    """Exact Hessian of :func:`sigmoid_ridge`, shape ``(n1, n2, 2, 2)``."""
    y = np.asarray(direction, dtype=float)
    X1, X2 = grid.coords
    s = _logistic(y[0] * X1 + y[1] * X2 + float(offset))
    d2 = s * (1 - s) * (1 - 2 * s)
    return amplitude * d2[..., None, None] * np.outer(y, y)


# ---------------------------------------------------------------- linearized isometries


def _strain_operator(grid: Grid2D):
    """Sparse map ``u -> (e11, e22, e12)`` of ``sym grad u`` and its weights."""
    ops = grid.operators
    d1, d2 = ops["d1"], ops["d2"]
    N = grid.size
    Z = sp.csr_matrix((N, N))
    A = sp.bmat([[d1, Z], [Z, d2], [0.5 * d2, 0.5 * d1]], format="csr")
    w = grid.weights.reshape(-1)
    return A, np.concatenate([w, w, 2.0 * w])


def membrane_residual(u: VectorField2D, v: ScalarField2D) -> float:
    """``||sym grad u + grad v (x) grad v / 2||_{L2}`` (Frobenius)."""
    J = jacobian(u)
    p = gradient(v).values
    E = 0.5 * (J + np.swapaxes(J, -1, -2)) + 0.5 * p[..., :, None] * p[..., None, :]
    return float(np.sqrt(integrate(ScalarField2D(u.grid, np.sum(E**2, axis=(-1, -2))))))


def remove_rigid_gauge(u: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Subtract the mean and the mean infinitesimal rotation of ``u`` (n1, n2, 2)."""
    X1, X2 = grid.coords
    J = jacobian(VectorField2D(grid, u))
    omega = integrate((grid, 0.5 * (J[..., 0, 1] - J[..., 1, 0]))) / grid.area
    u = u - omega * np.stack([X2, -X1], axis=-1)
    return u - integrate((grid, u)) / grid.area


@dataclass(frozen=True)
class LinearizedSolution:
    u: VectorField2D
    residual: float
    iterations: int


def solve_u_linearized(v: ScalarField2D, tol: float | None = None, rtol_cg: float = 1e-10,
                       maxiter: int | None = None, check: bool = True) -> LinearizedSolution:
    """In-plane displacement with ``sym grad u = -grad v (x) grad v / 2`` in least squares.

    Conjugate gradients on the normal equations of the weighted discrete
    least-squares problem; the rigid gauge is fixed afterwards (zero mean and
    zero mean skew gradient).  Raises :class:`NonDevelopableError` when the
    residual stalls above ``tol`` (default ``2e-2 * ||grad v||^2_{L2}``: curved
    profiles sit near 0.11 on every grid, developable ones decay like the squared
    spacing from about 1e-2 on a 17x17 grid).
    """
    grid = v.grid
    if check:
        check_developable(v)
    p = gradient(v).values
    p1, p2 = p[..., 0].reshape(-1), p[..., 1].reshape(-1)
    target = -0.5 * np.concatenate([p1 * p1, p2 * p2, p1 * p2])
    gsq = integrate(ScalarField2D(grid, p[..., 0] ** 2 + p[..., 1] ** 2))
    tol = LIN_RTOL * gsq if tol is None else float(tol)
    if not np.any(target):
        return LinearizedSolution(VectorField2D(grid, np.zeros(grid.shape + (2,))), 0.0, 0)
    A, w = _strain_operator(grid)
    normal = (A.T @ sp.diags(w) @ A).tocsr()
    rhs = A.T @ (w * target)
    count = [0]

    def _count(_):
        count[0] += 1

    maxiter = 10 * grid.size if maxiter is None else maxiter
    x, info = cg(normal, rhs, rtol=rtol_cg, maxiter=maxiter, callback=_count)
    u = remove_rigid_gauge(x.reshape(2, *grid.shape).transpose(1, 2, 0), grid)
    r = A @ x - target
    residual = float(np.sqrt(max(r @ (w * r), 0.0)))
    log.debug("linearized solve: %d CG iterations, residual %.3e", count[0], residual)
    if residual > tol:
        raise NonDevelopableError(
            f"linearized isometry residual {residual:.3e} stalls above {tol:.3e} "
            f"(CG status {info}); the profile is not compatible"
        )
    return LinearizedSolution(VectorField2D(grid, u), residual, count[0])


def axis_linearized_isometry(grid: Grid2D, profile, axis: int = 0):
    """Discrete pair ``(u, v)`` with ``v = phi(x_axis)`` and a zero discrete membrane strain.

    The one-dimensional derivative matrix has a one-dimensional cokernel, so
    ``D u = -(D phi)^2 / 2`` is solvable only when the squared slope is
    orthogonal to it.  ``phi`` is corrected at the node of largest slope by
    the smallest root of that scalar quadratic; the correction is
    truncation-sized for resolved profiles.  ``profile`` is a callable of the
    axis coordinate or an array of node values along the axis.
    """
    if axis not in (0, 1):
        raise InputError("axis must be 0 or 1")
    n = grid.shape[axis]
    h = grid.spacing[axis]
    x = grid.x1 if axis == 0 else grid.x2
    phi = np.asarray(profile(x) if callable(profile) else profile, dtype=float).copy()
    if phi.shape != (n,):
        raise InputError(f"profile needs {n} node values")
    D = first_derivative_matrix(n, h)
    D = D.toarray() if sp.issparse(D) else np.asarray(D)
    _, _, vt = np.linalg.svd(D.T)
    ell = vt[-1]
    g = D @ phi
    k = 1 + int(np.argmax(np.abs(g[1:-1])))
    db = D[:, k]
    c0, c1, c2 = ell @ g**2, 2 * ell @ (g * db), ell @ db**2
    if abs(c0) > 0:
        roots = np.roots([c2, c1, c0]) if abs(c2) > 1e-300 else np.array([-c0 / c1])
        roots = roots[np.abs(roots.imag) <= 1e-12 * max(1.0, np.max(np.abs(roots)))].real
        if roots.size == 0:
            raise NonDevelopableError("no real correction makes the one-variable profile compatible")
        phi[k] += roots[np.argmin(np.abs(roots))]
        g = D @ phi
    u1, *_ = np.linalg.lstsq(D, -0.5 * g**2, rcond=None)
    u1 -= np.average(u1, weights=np.ones(n))
    shape = grid.shape
    if axis == 0:
        V = np.broadcast_to(phi[:, None], shape)
        U = np.stack([np.broadcast_to(u1[:, None], shape), np.zeros(shape)], axis=-1)
    else:
        V = np.broadcast_to(phi[None, :], shape)
        U = np.stack([np.zeros(shape), np.broadcast_to(u1[None, :], shape)], axis=-1)
    U = U - integrate((grid, U)) / grid.area
    return VectorField2D(grid, np.array(U)), ScalarField2D(grid, np.array(V))


# ---------------------------------------------------------------- nonlinear embeddings


def sqrt_spd2(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a field of 2x2 SPD matrices (closed form)."""
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if np.any(det <= 0):
        raise InputError("square root needs positive definite matrices")
    tr = M[..., 0, 0] + M[..., 1, 1]
    if np.any(tr <= 0):
        raise InputError("square root needs positive definite matrices")
    s = np.sqrt(det)
    out = M + s[..., None, None] * np.eye(2)
    return out / np.sqrt(tr + 2.0 * s)[..., None, None]


def _matrix_curl(F: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Row-wise curl of a 2x2 matrix field; returns shape (n1, n2, 2)."""
    return np.stack(
        [curl(VectorField2D(grid, F[..., i, :])).values for i in range(2)], axis=-1
    )


def isometry_residual(y: VectorField2D) -> float:
    """``max |grad y^T grad y - Id|`` (entrywise max) with the finite-difference gradient."""
    J = jacobian(y)
    G = np.einsum("...ki,...kj->...ij", J, J)
    return float(np.max(np.abs(G - np.eye(2))))


def default_iso_tolerance(grid: Grid2D) -> float:
    """``3e-5`` at spacing 1/256, growing like the squared spacing on coarser grids.

    The one-sided boundary stencils put the metric error of a unit-curvature
    cylinder at about ``0.67 h^2`` (``1.02e-5`` at spacing 1/256).
    """
    h = max(grid.spacing)
    return 3e-5 * max(1.0, (h * 256.0) ** 2)


@dataclass(frozen=True)
class IsometricEmbedding:
    y: VectorField2D
    u: VectorField2D
    v: ScalarField2D
    residual: float
    theta: ScalarField2D = field(repr=False)
    residual_map: np.ndarray = field(repr=False)
    u_sup: float = 0.0
    estimate: float = 0.0


def _grad_size(g: np.ndarray, grid: Grid2D) -> float:
    h1, h2 = grid.spacing
    sq = sum(np.gradient(g, h, axis=ax, edge_order=2) ** 2 for ax, h in ((0, h1), (1, h2)))
    return float(np.sqrt(integrate(ScalarField2D(grid, np.sum(sq.reshape(grid.shape + (-1,)), axis=-1)))))


def _curl_tolerance(g: np.ndarray, grid: Grid2D, rtol: float, floor: float = 0.0) -> float:
    size = _grad_size(g, grid)
    return max(rtol * size, 1e-6 * float(np.max(np.abs(g), initial=0.0)) * grid.area, floor)


def isometric_embedding(v: ScalarField2D, curl_rtol: float = 0.1, check: bool = True) -> IsometricEmbedding:
    """Isometric embedding ``y = (x' + u, v)`` for a developable profile ``v``.

    With ``p = grad v`` and ``F = sqrt(Id - p p^T)``, the rotation angle
    ``theta`` solves ``grad theta = F^T curl(F) / det F``; the in-plane map
    ``phi`` solves ``grad phi = R(theta) F`` and ``u = phi - x'`` (zero mean).
    The angle step accepts discrete curls up to ``curl_rtol`` times the L2
    norm of ``grad F`` (a curved profile sits near 2, developable ones at
    truncation level); the in-plane step uses the same ratio against the
    gradient of the integrated field.
    """
    grid = v.grid
    p = gradient(v).values
    gsup = float(np.max(np.linalg.norm(p, axis=-1)))
    if gsup > 0.5:
        raise PreconditionError(f"sup |grad v| = {gsup:.4f} exceeds 1/2")
    if check and np.any(p):
        check_developable(v)
    M = np.eye(2) - p[..., :, None] * p[..., None, :]
    F = sqrt_spd2(M)
    detF = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    hF = np.einsum("...ki,...k->...i", F, _matrix_curl(F, grid)) / detF[..., None]
    try:
        # curl(h_F) is the Gauss curvature term, measured against the size of grad F: O(1) on
        # curved profiles, truncation-level (or round-off) on developable ones
        tol = max(curl_rtol * _grad_size(F, grid), 1e-12)
        theta = integrate_potential(VectorField2D(grid, hF), tol)
        c, s = np.cos(theta.values), np.sin(theta.values)
        Rt = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        G = Rt @ F
        phi = np.stack(
            [
                integrate_potential(VectorField2D(grid, G[..., i, :]), _curl_tolerance(G[..., i, :], grid, curl_rtol)).values
                for i in range(2)
            ],
            axis=-1,
        )
    except NonIntegrableFieldError as exc:
        raise NonIntegrableFieldError(
            "embedding construction failed: profile is not developable enough on this grid",
            exc.residual,
            exc.tolerance,
        ) from exc
    X = grid.points
    u = phi - X
    u = u - integrate((grid, u)) / grid.area
    y = VectorField2D(grid, np.concatenate([X + u, v.values[..., None]], axis=-1))
    J = jacobian(y)
    Gm = np.einsum("...ki,...kj->...ij", J, J) - np.eye(2)
    rmap = np.max(np.abs(Gm), axis=(-1, -2))
    H = hessian(v)
    hsup = float(np.max(np.linalg.norm(H, axis=(-1, -2))))
    return IsometricEmbedding(
        y=y,
        u=VectorField2D(grid, u),
        v=v,
        residual=float(np.max(rmap)),
        theta=theta,
        residual_map=rmap,
        u_sup=float(np.max(np.abs(u))),
        estimate=hsup * gsup + gsup**2,
    )


def normal_field(y: VectorField2D) -> VectorField2D:
    """``d1 y x d2 y`` at every node."""
    if y.dim != 3:
        raise InputError("normal field needs a 3-vector field")
    J = jacobian(y)
    return VectorField2D(y.grid, np.cross(J[..., 0], J[..., 1]))
