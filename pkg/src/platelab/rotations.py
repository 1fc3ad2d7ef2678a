"""Rotations, skew matrices and the set of rotations maximizing a load functional.

Skew matrices are parametrized by ``w = (w12, w13, w23)``::

    W = [[   0,  w12,  w13],
         [-w12,    0,  w23],
         [-w13, -w23,    0]]

so that ``|W|_F = sqrt(2) |w|`` and the rotation angle of ``exp(W)`` is ``|w|``.
Tangent and normal bases are returned as unit vectors in these coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BranchAmbiguityError,
    DomainError,
    InconsistencyError,
    InputError,
    ProjectionUndefinedError,
)
from .loads import Load, MomentMatrix, evaluate_F, load_scale

__all__ = [
    "SkewMatrix",
    "OptimalRotationSet",
    "skew",
    "check_rotation",
    "exp_skew",
    "log_rotation",
    "geodesic_distance",
    "maximize_F",
    "q_form",
    "classify_optimal_set",
    "tangent_space",
    "normal_space",
    "project_to_set",
    "distance_to_set",
    "SKEW_BASIS",
]

TAU_RANK = 1e-7
TAU_ANGLE = 1e-6


def skew(w) -> np.ndarray:
    """Assemble the skew matrix of coordinates ``(w12, w13, w23)``."""
    w12, w13, w23 = np.asarray(w, dtype=float)
    return np.array([[0.0, w12, w13], [-w12, 0.0, w23], [-w13, -w23, 0.0]])


def skew_coords(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    A = 0.5 * (W - W.T)
    return np.array([A[0, 1], A[0, 2], A[1, 2]])


SKEW_BASIS = tuple(skew(e) for e in np.eye(3))


@dataclass(frozen=True)
class SkewMatrix:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        if w.shape != (3,) or not np.all(np.isfinite(w)):
            raise InputError("skew coordinates must be three finite reals")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_matrix(cls, W) -> "SkewMatrix":
        W = np.asarray(W, dtype=float)
        if W.shape != (3, 3):
            raise InputError("expected a 3x3 matrix")
        return cls(skew_coords(W))

    @property
    def matrix(self) -> np.ndarray:
        return skew(self.w)

    @property
    def frobenius(self) -> float:
        return float(np.sqrt(2.0) * np.linalg.norm(self.w))

    def __mul__(self, s):
        return SkewMatrix(self.w * float(s))

    __rmul__ = __mul__

    def __add__(self, other):
        return SkewMatrix(self.w + _coords(other))


def _coords(W) -> np.ndarray:
    if isinstance(W, SkewMatrix):
        return W.w
    W = np.asarray(W, dtype=float)
    if W.shape == (3,):
        return W
    if W.shape == (3, 3):
        return skew_coords(W)
    raise InputError(f"cannot read skew matrix from shape {W.shape}")


def _matrix(W) -> np.ndarray:
    return skew(_coords(W))


def check_rotation(R, tol: float = 1e-12) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InputError("a rotation must be a finite 3x3 matrix")
    if np.linalg.norm(R.T @ R - np.eye(3)) > tol or np.linalg.det(R) <= 0:
        raise InputError("matrix is not a rotation")
    return R


def exp_skew(W) -> np.ndarray:
    """Rodrigues formula; ``exp_skew(0)`` is the identity exactly."""
    w = _coords(W)
    K = skew(w)
    theta = float(np.linalg.norm(w))
    if theta == 0.0:
        return np.eye(3)
    if theta < 1e-4:
        # series avoid cancellation in (1 - cos)/theta^2
        s = 1.0 - theta**2 / 6.0 + theta**4 / 120.0
        c = 0.5 - theta**2 / 24.0 + theta**4 / 720.0
    else:
        s = np.sin(theta) / theta
        c = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + s * K + c * (K @ K)


def log_rotation(R, tau_angle: float = TAU_ANGLE) -> SkewMatrix:
    """Principal logarithm; refuses rotations whose angle is within ``tau_angle`` of pi."""
    R = np.asarray(R, dtype=float)
    tr = float(np.trace(R))
    if tr <= -1.0 + tau_angle:
        raise BranchAmbiguityError(f"rotation angle too close to pi (trace {tr:.6g})")
    A = 0.5 * (R - R.T)
    sin_part = np.linalg.norm(skew_coords(A))
    theta = float(np.arctan2(sin_part, 0.5 * (tr - 1.0)))
    if theta < 1e-6:
        factor = 1.0 + theta**2 / 6.0
    else:
        factor = theta / np.sin(theta)
    return SkewMatrix(factor * skew_coords(A))


def geodesic_distance(Q, R, tau_angle: float = TAU_ANGLE) -> float:
    """Frobenius norm of the minimal ``W`` with ``Q = R exp(W)``."""
    return log_rotation(np.asarray(R).T @ np.asarray(Q), tau_angle).frobenius


def maximize_F(M) -> np.ndarray:
    """Rotation maximizing ``F(R) = M : R`` (special orthogonal Procrustes)."""
    M = M.M if isinstance(M, MomentMatrix) else np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise InputError("moment matrix must be finite")
    if not np.any(M):
        return np.eye(3)
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    # re-orthonormalize against round-off
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def q_form(M, R) -> np.ndarray:
    """Matrix of ``w -> F(R W^2)`` in skew coordinates."""
    q = np.empty((3, 3))
    for i, Wi in enumerate(SKEW_BASIS):
        for j, Wj in enumerate(SKEW_BASIS):
            q[i, j] = 0.5 * evaluate_F(M, R @ (Wi @ Wj + Wj @ Wi))
    return q


def _null_basis(q: np.ndarray, tau_rank: float):
    evals, evecs = np.linalg.eigh(q)
    top = float(np.max(np.abs(evals)))
    if top == 0.0:
        return evecs, evals
    mask = np.abs(evals) <= tau_rank * top
    return evecs[:, mask], evals


def _canonical(v: np.ndarray) -> np.ndarray:
    """Fix the sign of a basis vector: first entry of largest magnitude positive."""
    k = int(np.argmax(np.abs(v) > 1e-12)) if np.any(np.abs(v) > 1e-12) else 0
    return -v if v[k] < 0 else v


@dataclass(frozen=True)
class OptimalRotationSet:
    """Maximizers of the load functional over SO(3).

    ``generator`` (unit Frobenius norm, dim 1 only) is fixed in body
    coordinates: the set is ``{representative @ exp_skew(t * generator)}``.
    """

    M: MomentMatrix
    representative: np.ndarray
    dim: int
    max_value: float
    q_form: np.ndarray
    generator: SkewMatrix | None = None
    tol: float = 0.0
    eigenvalues: np.ndarray = field(default=None, repr=False)

    def member(self, t: float) -> np.ndarray:
        """Point of the set at geodesic parameter ``t`` (angle in radians)."""
        if self.dim != 1:
            raise DomainError("members are parametrized only for one-dimensional sets")
        return self.representative @ exp_skew(self.generator.w * t * np.sqrt(2.0))

    def contains(self, R, tol: float | None = None) -> bool:
        tol = self.tol if tol is None else tol
        return abs(evaluate_F(self.M, R) - self.max_value) <= tol

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "max_value": self.max_value,
            "representative": self.representative.tolist(),
            "q_form": self.q_form.tolist(),
            "q_eigenvalues": None if self.eigenvalues is None else self.eigenvalues.tolist(),
            "moment_matrix": self.M.M.tolist(),
        }
        out["generator"] = None if self.generator is None else self.generator.w.tolist()
        return out


def classify_optimal_set(load: Load | None, M: MomentMatrix, tau_rank: float = TAU_RANK,
                         tau_zero: float | None = None) -> OptimalRotationSet:
    """Maximizer, dimension and second-order form of the optimal set.

    The dimension is the nullity of ``q_form`` at relative threshold
    ``tau_rank``; a zero moment matrix (``|M| <= tau_zero``) makes every
    rotation optimal.
    """
    if not isinstance(M, MomentMatrix):
        M = MomentMatrix.from_array(M)
    if tau_zero is None:
        if load is not None:
            X1, X2 = load.grid.coords
            r = np.sqrt(np.sum(load.grid.weights * (X1**2 + X2**2)))
            tau_zero = 1e-10 * load_scale(load.f) / np.sqrt(load.grid.area) * r
        else:
            tau_zero = 1e-14
    tol = 1e-10 * max(M.norm, tau_zero)
    if M.norm <= tau_zero:
        q = np.zeros((3, 3))
        return OptimalRotationSet(M, np.eye(3), 3, 0.0, q, None, tol, np.zeros(3))
    R = maximize_F(M)
    q = q_form(M, R)
    q = 0.5 * (q + q.T)
    null, evals = _null_basis(q, tau_rank)
    dim = null.shape[1]
    if dim == 2:
        raise InconsistencyError("computed a two-dimensional optimal set, which cannot occur")
    if dim == 3:
        raise InconsistencyError("second-order form vanishes although the moment matrix does not")
    gen = None
    if dim == 1:
        gen = SkewMatrix(_canonical(null[:, 0]) / np.sqrt(2.0))
    return OptimalRotationSet(M, R, dim, evaluate_F(M, R), q, gen, tol, evals)


def _check_member(ors: OptimalRotationSet, R, tol):
    R = np.asarray(R, dtype=float)
    tol = ors.tol if tol is None else tol
    if not ors.contains(R, tol):
        gap = ors.max_value - evaluate_F(ors.M, R)
        raise DomainError(f"rotation is not optimal (F gap {gap:.3e} > {tol:.3e})")
    return R


def tangent_space(ors: OptimalRotationSet, R=None, tol: float | None = None) -> list[SkewMatrix]:
    """Unit skew coordinates spanning the tangent space at ``R`` (default: representative)."""
    R = ors.representative if R is None else _check_member(ors, R, tol)
    if ors.dim == 3:
        return [SkewMatrix(e) for e in np.eye(3)]
    if ors.dim == 0:
        return []
    q = q_form(ors.M, R)
    evals, evecs = np.linalg.eigh(0.5 * (q + q.T))
    k = int(np.argmin(np.abs(evals)))
    return [SkewMatrix(_canonical(evecs[:, k]))]


def normal_space(ors: OptimalRotationSet, R=None, tol: float | None = None) -> list[SkewMatrix]:
    """Orthogonal complement of the tangent space (Frobenius pairing)."""
    tangent = tangent_space(ors, R, tol)
    if not tangent:
        return [SkewMatrix(e) for e in np.eye(3)]
    if len(tangent) == 3:
        return []
    t = tangent[0].w
    # complete t to an orthonormal frame; the complement is taken from the QR factor
    frame = np.column_stack([t, np.eye(3)])
    Qm, _ = np.linalg.qr(frame)
    basis = [Qm[:, 1], Qm[:, 2]]
    basis = [b - (b @ t) * t for b in basis]
    return [SkewMatrix(_canonical(b / np.linalg.norm(b))) for b in basis]


def distance_to_set(R, ors: OptimalRotationSet) -> float:
    P = project_to_set(R, ors, guard=np.inf)
    return geodesic_distance(R, P)


def project_to_set(R, ors: OptimalRotationSet, guard: float = np.pi / np.sqrt(2.0)) -> np.ndarray:
    """Closest point of the optimal set in geodesic distance.

    For a one-dimensional set the squared distance along the circle
    ``rep exp(t K)`` (``K`` the unit-angle generator) has the form
    ``const - 2 (beta sin t + gamma cos t)`` in the cosine of the relative
    angle, so the minimizer is ``t = atan2(beta, gamma)``.  ``guard`` bounds
    the accepted distance (Frobenius units).
    """
    R = check_rotation(R, 1e-9)
    if ors.dim == 3:
        return R
    if ors.dim == 0:
        P = ors.representative
    else:
        K = skew(ors.generator.w * np.sqrt(2.0))
        A = ors.representative.T @ R
        beta = -float(np.trace(K @ A))
        gamma = -float(np.trace(K @ K @ A))
        t = float(np.arctan2(beta, gamma))
        P = ors.member(t)
    try:
        d = geodesic_distance(R, P)
    except BranchAmbiguityError as exc:
        raise ProjectionUndefinedError("rotation is antipodal to the optimal set") from exc
    if d > guard:
        raise ProjectionUndefinedError(f"distance {d:.3e} to the optimal set exceeds the guard {guard:.3e}")
    return P
