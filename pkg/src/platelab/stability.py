"""Stability diagnostics for the Von Karman and Kirchhoff total energies.

Everything here is one-sided: a negative energy on a sampled configuration
certifies failure of a stability condition, while positivity on the sampled
configurations only means that no counterexample was found.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.sparse.linalg import splu

from .elasticity import (
    AdmissibleQuadruplet,
    ElasticModel,
    VKDiscretization,
    energy_kl,
    total_kl,
    total_vk,
)
from .errors import InputError, NonDevelopableError, PreconditionError
from .grid import Grid2D, ScalarField2D, VectorField2D, gradient, integrate, jacobian
from .isometries import (
    axis_linearized_isometry,
    check_developable,
    isometric_embedding,
    remove_rigid_gauge,
    sigmoid_ridge,
    solve_u_linearized,
)
from .loads import Coefficients, Load, coefficients, compatibility_residual, evaluate_F, load_scale, moment_matrix
from .rotations import (
    OptimalRotationSet,
    SkewMatrix,
    _coords,
    classify_optimal_set,
    exp_skew,
    normal_space,
    skew,
)

log = logging.getLogger(__name__)

__all__ = [
    "AffineCertificate",
    "affine_certificate",
    "affine_certificate_from_set",
    "closed_form_jmin",
    "S2AffineResult",
    "s2_affine_test",
    "S2ProbeResult",
    "s2_probe",
    "VRTriple",
    "build_vr_ur_xi",
    "invariance_check",
    "gauge_check",
    "VKTotalProblem",
    "ReducedVKProblem",
    "vr_gauge_fix",
    "default_s2_profiles",
    "MinimizeOptions",
    "MinimizeResult",
    "minimize_total_vk",
    "DivergenceProbe",
    "divergence_probe",
    "S1Member",
    "S1Probe",
    "embedded_family",
    "s1_probe",
    "compatibility_check",
    "StabilityReport",
    "analyze_stability",
]


# ---------------------------------------------------------------- compatibility


def compatibility_check(load: Load, ors: OptimalRotationSet, samples: int = 16, rtol: float = 1e-6) -> dict:
    """Largest normal-load residual over the optimal set (sampled along the circle when dim = 1)."""
    tau = rtol * load_scale(load.f)
    if ors.dim == 3:
        # every rotation is optimal: the condition asks for f = 0, excluded for loads
        res = max(compatibility_residual(load, Q) for Q in (np.eye(3), exp_skew([0, np.pi / 2, 0]), exp_skew([0, 0, np.pi / 2])))
        return {"max_residual": float(res), "tolerance": tau, "ok": bool(res <= tau), "worst_t": None}
    if ors.dim == 0:
        res = compatibility_residual(load, ors.representative)
        return {"max_residual": float(res), "tolerance": tau, "ok": bool(res <= tau), "worst_t": None}
    ts = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    vals = [compatibility_residual(load, ors.member(t)) for t in ts]
    k = int(np.argmax(vals))
    return {"max_residual": float(vals[k]), "tolerance": tau, "ok": bool(vals[k] <= tau), "worst_t": float(ts[k])}


# ---------------------------------------------------------------- affine certificate


def closed_form_jmin(coeffs: Coefficients, w, branch: str = "a") -> float:
    """``w12^2 (a+b) + w13^2 (a+b)^2 / (2a)`` (a-branch) or its b-branch mirror."""
    w12, w13, w23 = _coords(w)
    a, b = coeffs.a, coeffs.b
    if branch == "a":
        return w12**2 * (a + b) + w13**2 * (a + b) ** 2 / (2 * a)
    return w12**2 * (a + b) + w23**2 * (a + b) ** 2 / (2 * b)


@dataclass(frozen=True)
class AffineCertificate:
    M: np.ndarray
    B: np.ndarray
    K: float
    lambda_star: np.ndarray
    J_min: float
    psd: bool
    closed_form_value: float | None
    branch: str
    consistent: bool = True
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "M": self.M.tolist(),
            "B": self.B.tolist(),
            "K": self.K,
            "lambda_star": self.lambda_star.tolist(),
            "J_min": self.J_min,
            "psd": self.psd,
            "closed_form_value": self.closed_form_value,
            "branch": self.branch,
            "consistent": self.consistent,
            "degenerate": self.degenerate,
        }


def _solve_affine(M2: np.ndarray, B: np.ndarray, K: float, rtol: float = 1e-10):
    evals = np.linalg.eigvalsh(M2)
    top = max(float(np.max(np.abs(evals))), 1e-300)
    psd = bool(np.min(evals) >= -rtol * top)
    lam, *_ = np.linalg.lstsq(M2, B, rcond=rtol)
    consistent = bool(np.linalg.norm(M2 @ lam - B) <= 1e-8 * max(np.linalg.norm(B), top))
    J = 0.5 * lam @ M2 @ lam - B @ lam - K
    return lam, float(J), psd, consistent


def affine_certificate(coeffs: Coefficients, W, ors: OptimalRotationSet | None = None,
                       R=None, branch: str = "auto") -> AffineCertificate:
    """Minimum over affine profiles of the total energy at a normal ``W``.

    With ``v = Lambda . x'`` and ``u = -(Lambda (x) Lambda) x' / 2`` the energy
    is ``Lambda^T M Lambda / 2 - B . Lambda - K(W)`` with ``M = [[a, c], [c, b]]``.
    Without a set, ``B`` and ``K`` come from their expansions in ``(a, b, c)``
    for ``W`` in the normal space (``w23 = (c/a) w13``); with a set, both are
    evaluated directly from the moment matrix at ``R``.
    """
    w = _coords(W)
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    scale = max(abs(a) + abs(b), 1e-300)
    if branch == "auto":
        branch = "a" if a >= b else "b"
    if a + b <= 1e-12 * max(1.0, abs(c)) or (branch == "a" and a <= 0) or (branch == "b" and b <= 0):
        zero = np.zeros(2)
        return AffineCertificate(coeffs.matrix(), zero, 0.0, zero, 0.0, False, None, branch, False, True)
    M2 = np.array([[a, c], [c, b]])
    w12, w13, w23 = w
    if ors is not None or R is not None:
        R = ors.representative if R is None else np.asarray(R, dtype=float)
        Mm = ors.M
        Wm = skew(w)
        e3 = np.array([0.0, 0.0, 1.0])
        B = np.array([evaluate_F(Mm, R @ np.outer(Wm @ e3, e)) for e in np.eye(3)[:2]])
        K = evaluate_F(Mm, R @ Wm @ Wm)
    elif branch == "a":
        B = w13 * np.array([a + b, c * (1 + b / a)])
        K = -(w12**2 + w13**2) * a - 2 * b * w13**2 - b * w12**2 - b**2 / a * w13**2
    else:
        B = w23 * np.array([c * (1 + a / b), a + b])
        K = -(w12**2 + w23**2) * b - 2 * a * w23**2 - a * w12**2 - a**2 / b * w23**2
    lam, J, psd, consistent = _solve_affine(M2, B, K)
    closed = closed_form_jmin(coeffs, w, branch)
    if abs(J) < 1e-15 * scale * max(1.0, float(w @ w)):
        J = 0.0
    return AffineCertificate(M2, B, float(K), lam, J, psd, float(closed), branch, consistent)


def affine_certificate_from_set(ors: OptimalRotationSet, W, R=None) -> AffineCertificate:
    """Certificate with every ingredient computed from the moment matrix at ``R``.

    ``M`` is the symmetrized in-plane block of ``R^T M_load``; no identity
    between the coefficients is assumed, so the same routine covers the
    singleton case.
    """
    R = ors.representative if R is None else np.asarray(R, dtype=float)
    RM = (R.T @ ors.M.M)[:2, :2]
    M2 = 0.5 * (RM + RM.T)
    w = _coords(W)
    Wm = skew(w)
    e3 = np.array([0.0, 0.0, 1.0])
    B = np.array([evaluate_F(ors.M, R @ np.outer(Wm @ e3, e)) for e in np.eye(3)[:2]])
    K = evaluate_F(ors.M, R @ Wm @ Wm)
    lam, J, psd, consistent = _solve_affine(M2, B, K)
    return AffineCertificate(M2, B, float(K), lam, J, psd, None, "set", consistent)


@dataclass(frozen=True)
class S2AffineResult:
    holds: bool
    min_value: float
    witness: np.ndarray
    eigenvalues: np.ndarray
    sampled_min: float
    normal_basis: list
    tolerance: float
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "min_value": self.min_value,
            "witness_w": self.witness.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "sampled_min": self.sampled_min,
            "normal_basis": [b.tolist() for b in self.normal_basis],
            "tolerance": self.tolerance,
            "note": self.note,
        }


def _sphere_points(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    if dim == 2:
        t = np.linspace(0, np.pi, count, endpoint=False)
        return np.column_stack([np.cos(t), np.sin(t)])
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    r = np.sqrt(1 - z**2)
    phi = np.pi * (1 + 5**0.5) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def s2_affine_test(load: Load, ors: OptimalRotationSet, model: ElasticModel | None = None,
                   samples: int = 181, rtol: float = 1e-9, check_compat: bool = True) -> S2AffineResult:
    """Affine certificate over the unit sphere of the normal space.

    The certificate is a quadratic form in the normal coordinates; its
    smallest eigenvalue (cross-checked by sampling the sphere) must be
    strictly positive for the affine part of the stability condition to hold.
    """
    if ors.dim not in (0, 1):
        raise PreconditionError(f"affine test needs an optimal set of dimension 0 or 1, got {ors.dim}")
    if check_compat:
        comp = compatibility_check(load, ors)
        if not comp["ok"]:
            raise PreconditionError("compatibility condition fails; the affine test does not apply")
    basis = [b.w for b in normal_space(ors)]
    k = len(basis)

    def J(alpha):
        w = sum(a * b for a, b in zip(alpha, basis))
        return affine_certificate_from_set(ors, w).J_min

    G = np.zeros((k, k))
    for i in range(k):
        G[i, i] = J(np.eye(k)[i])
    for i in range(k):
        for j in range(i + 1, k):
            G[i, j] = G[j, i] = 0.5 * (J(np.eye(k)[i] + np.eye(k)[j]) - G[i, i] - G[j, j])
    evals, evecs = np.linalg.eigh(G)
    pts = _sphere_points(k, samples)
    vals = np.array([J(p) for p in pts])
    tol = rtol * max(abs(ors.max_value), 1e-300)
    witness = sum(a * b for a, b in zip(evecs[:, 0], basis))
    note = "singleton optimal set" if ors.dim == 0 else ""
    return S2AffineResult(
        holds=bool(evals[0] > tol),
        min_value=float(evals[0]),
        witness=np.asarray(witness),
        eigenvalues=evals,
        sampled_min=float(np.min(vals)),
        normal_basis=basis,
        tolerance=tol,
        note=note,
    )


# ---------------------------------------------------------------- V_R, U_R and xi


def _vr_direction(coeffs: Coefficients, branch: str = "auto"):
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    if branch == "auto":
        branch = "a" if a >= b else "b"
    if branch == "a":
        if a <= 0:
            raise PreconditionError("a-branch needs a > 0")
        return np.array([-c / a, 1.0]), branch
    if b <= 0:
        raise PreconditionError("b-branch needs b > 0")
    return np.array([1.0, -c / b]), branch


@dataclass(frozen=True)
class VRTriple:
    v: ScalarField2D
    u: VectorField2D
    xi: VectorField2D
    direction: np.ndarray
    branch: str
    mixed_residual: float
    load_u: float | None = None
    load_xi: float | None = None

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.tolist(),
            "branch": self.branch,
            "mixed_residual": self.mixed_residual,
            "load_u": self.load_u,
            "load_xi": self.load_xi,
        }


def build_vr_ur_xi(coeffs: Coefficients, lam: float, vbar: ScalarField2D, load: Load | None = None,
                   R=None, branch: str = "auto") -> VRTriple:
    """Affine profile ``v = lam n . x'``, its in-plane partner and the correction ``xi``.

    ``n = (-c/a, 1)`` on the a-branch and ``(1, -c/b)`` on the b-branch,
    ``u = -(grad v (x) grad v) x' / 2`` and ``xi = -lam vbar n`` which solves
    ``sym grad xi + sym(grad vbar (x) grad v) = 0``.  When ``load`` and ``R``
    are given the load integrals of ``u`` and ``xi`` are reported.
    """
    n, branch = _vr_direction(coeffs, branch)
    grid = vbar.grid
    X = grid.points
    gv = lam * n
    v = ScalarField2D(grid, X @ gv)
    u = VectorField2D(grid, -0.5 * X @ np.outer(gv, gv).T)
    xi = VectorField2D(grid, -lam * vbar.values[..., None] * n)
    J = jacobian(xi)
    p = gradient(vbar).values
    mixed = J + np.swapaxes(J, -1, -2) + p[..., :, None] * gv[None, None, None, :] + gv[None, None, :, None] * p[..., None, :]
    mres = float(np.sqrt(integrate((grid, np.sum(mixed**2, axis=(-1, -2))))))
    lu = lx = None
    if load is not None and R is not None:
        R = np.asarray(R, dtype=float)
        rf = load.f.values @ R
        lu = float(integrate((grid, np.sum(rf[..., :2] * u.values, axis=-1))))
        lx = float(integrate((grid, np.sum(rf[..., :2] * xi.values, axis=-1))))
    return VRTriple(v, u, xi, n, branch, mres, lu, lx)


def invariance_check(quad: AdmissibleQuadruplet, lam: float, load: Load, model: ElasticModel,
                     ors: OptimalRotationSet | None = None, branch: str = "auto") -> float:
    """``|J(u + u_R + xi, v + v_R, R, W) - J(u, v, R, W)|`` for the affine member ``v_R`` of parameter ``lam``.

    ``xi`` is built from the quadruplet's own (generally non-affine) ``v``.
    """
    ors = classify_optimal_set(load, moment_matrix(load)) if ors is None else ors
    if ors.dim != 1:
        raise PreconditionError("the affine invariance needs a one-dimensional optimal set")
    coeffs = coefficients(load, quad.R)
    tri = build_vr_ur_xi(coeffs, lam, quad.v, branch=branch)
    moved = AdmissibleQuadruplet(quad.u + tri.u + tri.xi, quad.v + tri.v, quad.R, quad.W)
    J0 = total_vk(quad, load, model, ors).value
    J1 = total_vk(moved, load, model, ors).value
    return abs(J1 - J0)


def gauge_check(quad: AdmissibleQuadruplet, A_skew: float, eta, delta: float, load: Load,
                model: ElasticModel, ors: OptimalRotationSet | None = None) -> float:
    """``|J(u + A x' + eta, v + delta, R, W) - J(u, v, R, W)|`` with ``A = [[0, s], [-s, 0]]``."""
    ors = classify_optimal_set(load, moment_matrix(load)) if ors is None else ors
    X = quad.grid.points
    A = np.array([[0.0, A_skew], [-A_skew, 0.0]])
    du = X @ A.T + np.asarray(eta, dtype=float)
    moved = AdmissibleQuadruplet(quad.u + VectorField2D(quad.grid, du),
                                 ScalarField2D(quad.grid, quad.v.values + delta), quad.R, quad.W)
    return abs(total_vk(moved, load, model, ors).value - total_vk(quad, load, model, ors).value)


# ---------------------------------------------------------------- (S2) sampling probe


@dataclass(frozen=True)
class S2ProbeResult:
    min_value: float
    witness: dict
    samples: list
    certified_failure: bool
    quadruplet: AdmissibleQuadruplet | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"min_value": self.min_value, "witness": self.witness, "certified_failure": self.certified_failure,
                "samples": self.samples}


def default_s2_profiles(grid: Grid2D, vr_direction=None) -> list:
    """Developable test profiles as ``(label, v, u or None)``.

    Axis-aligned logistic ridges and sinusoids come with an exactly
    compatible in-plane field; oblique ones (and the affine V_R member) get
    theirs from the least-squares solve.
    """
    out = []
    shapes = []
    for steep in (4.0, 10.0, 20.0):
        for off in (-0.25, 0.0, 0.25):
            shapes.append((f"steep={steep:g},offset={off:g}", lambda s, k=steep, o=off: np.tanh(k * (s - o)) / k))
    for freq in (np.pi, 2 * np.pi):
        shapes.append((f"freq={freq:.4f}", lambda s, k=freq: np.sin(k * s) / k))
    for axis in (0, 1):
        for name, fn in shapes:
            try:
                u, v = axis_linearized_isometry(grid, fn, axis)
            except NonDevelopableError:
                continue
            out.append((f"axis{axis + 1}({name})", v, u))
    for ang in np.linspace(0, np.pi, 8, endpoint=False)[1:]:
        if np.isclose(ang, np.pi / 2):
            continue
        d = np.array([np.cos(ang), np.sin(ang)])
        for steep in (4.0, 10.0):
            for off in (-0.25, 0.0, 0.25):
                out.append((f"ridge(angle={ang:.4f},steep={steep:g},offset={off:g})",
                            sigmoid_ridge(grid, steep * d, -steep * off), None))
        out.append((f"sine(angle={ang:.4f},freq={np.pi:.4f})", ScalarField2D(grid, np.sin(np.pi * (grid.points @ d))), None))
    if vr_direction is not None:
        out.append(("affine_VR", ScalarField2D(grid, grid.points @ np.asarray(vr_direction)), None))
    return out


def _best_W(quad_v, load, ors, R, basis):
    """Minimize the total energy over W in span(basis) for fixed (u, v, R); quadratic in W."""
    grid = load.grid
    f = load.f.values
    e3 = np.array([0.0, 0.0, 1.0])
    k = len(basis)
    lin = np.array([integrate((grid, (f @ (R @ skew(b) @ e3)) * quad_v.values)) for b in basis])
    Q = np.array([[0.5 * evaluate_F(ors.M, R @ (skew(bi) @ skew(bj) + skew(bj) @ skew(bi))) for bj in basis] for bi in basis])
    # energy(alpha) = const - lin . alpha - alpha^T Q alpha, with -Q positive definite on the normal space
    try:
        return np.linalg.solve(-2 * Q, lin)
    except np.linalg.LinAlgError:
        return np.zeros(k)


def s2_probe(load: Load, ors: OptimalRotationSet, model: ElasticModel, profiles=None,
             n_rotations: int = 8, tol: float = 1e-8) -> S2ProbeResult:
    """Total energy on sampled linearized isometries, each scaled to unit size.

    Size is bending energy plus the squared L2 norm of ``grad v``.  ``W`` is
    optimized in closed form over the normal space and ``R`` is sampled along
    the optimal set.  On linearized isometries the energy scales
    quadratically under ``(g^2 u, g v, g W)``, so only the sign of the
    minimum matters; a value below ``-tol`` certifies failure.
    """
    grid = load.grid
    if profiles is None:
        vr = None
        if ors.dim == 1:
            try:
                vr, _ = _vr_direction(coefficients(load, ors.representative))
            except PreconditionError:
                vr = None
        profiles = default_s2_profiles(grid, vr)
    basis = [b.w for b in normal_space(ors)]
    if ors.dim == 1:
        rotations = [ors.member(t) for t in np.linspace(0, 2 * np.pi, n_rotations, endpoint=False)]
    else:
        rotations = [ors.representative]
    disc = VKDiscretization(grid, model)
    best = (np.inf, None, None)
    samples = []
    for entry in profiles:
        label, v = entry[0], entry[1]
        u = entry[2] if len(entry) > 2 else None
        try:
            if u is None:
                check_developable(v)
                u = solve_u_linearized(v, check=False, tol=np.inf).u
        except (NonDevelopableError, PreconditionError) as exc:
            samples.append({"profile": label, "skipped": str(exc)})
            continue
        E = disc.energy(u, v)
        # unit size in bending plus Dirichlet norm, so affine profiles (zero bending) stay finite
        size = E.bending + integrate((grid, np.sum(gradient(v).values ** 2, axis=-1)))
        if size <= 0:
            continue
        g = 1.0 / np.sqrt(size)
        us, vs = u * g**2, v * g
        for ri, R in enumerate(rotations):
            alpha = _best_W(vs, load, ors, R, basis)
            w = sum(a * b for a, b in zip(alpha, basis)) if basis else np.zeros(3)
            quad = AdmissibleQuadruplet(us, vs, R, SkewMatrix(np.asarray(w, dtype=float)))
            J = total_vk(quad, load, model, ors, check=False).value
            samples.append({"profile": label, "rotation_index": ri, "J": J, "membrane": E.membrane * g**4})
            if J < best[0]:
                best = (J, {"profile": label, "rotation_index": ri, "W": [float(x) for x in np.ravel(w)], "J": J,
                            "membrane": E.membrane * g**4}, quad)
    return S2ProbeResult(float(best[0]), best[1] or {}, samples, bool(best[0] < -tol), best[2])


# ---------------------------------------------------------------- direct minimization


class VKTotalProblem:
    """Total Von Karman energy as a smooth function of a flat parameter vector.

    Parameters are ``[u1, u2, v, t, alpha]``: node values, the position ``t``
    along the optimal circle (absent for a singleton set) and the normal
    coordinates ``alpha`` of ``W``.  ``weight`` multiplies the load terms.
    """

    def __init__(self, load: Load, ors: OptimalRotationSet, model: ElasticModel, weight: float = 1.0):
        if ors.dim not in (0, 1):
            raise PreconditionError("minimization needs an optimal set of dimension 0 or 1")
        self.load, self.ors, self.model, self.weight = load, ors, model, float(weight)
        self.grid = load.grid
        self.disc = VKDiscretization(self.grid, model)
        self.N = self.grid.size
        self.has_t = ors.dim == 1
        self.basis = [skew(b.w) for b in normal_space(ors)]
        self.K = skew(ors.generator.w * np.sqrt(2.0)) if self.has_t else np.zeros((3, 3))
        self.f = load.f.values.reshape(-1, 3)
        self.w = self.grid.weights.reshape(-1)
        self.Mm = ors.M.M

    @property
    def size(self) -> int:
        return 3 * self.N + int(self.has_t) + len(self.basis)

    def unpack(self, x):
        N = self.N
        shape = self.grid.shape
        u = np.stack([x[:N].reshape(shape), x[N:2 * N].reshape(shape)], axis=-1)
        v = x[2 * N:3 * N].reshape(shape)
        k = 3 * N
        t = 0.0
        if self.has_t:
            t = float(x[k])
            k += 1
        return u, v, t, np.asarray(x[k:], dtype=float)

    def pack(self, u, v, t=0.0, alpha=None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        parts = [u[..., 0].ravel(), u[..., 1].ravel(), np.asarray(v, dtype=float).ravel()]
        if self.has_t:
            parts.append(np.array([t], dtype=float))
        parts.append(np.zeros(len(self.basis)) if alpha is None else np.asarray(alpha, dtype=float))
        return np.concatenate(parts)

    def rotation(self, t: float) -> np.ndarray:
        return self.ors.member(t) if self.has_t else self.ors.representative

    def W(self, alpha) -> np.ndarray:
        out = np.zeros((3, 3))
        for a, B in zip(alpha, self.basis):
            out += a * B
        return out

    def quadruplet(self, x) -> AdmissibleQuadruplet:
        u, v, t, alpha = self.unpack(x)
        return AdmissibleQuadruplet(VectorField2D(self.grid, u), ScalarField2D(self.grid, v),
                                    self.rotation(t), SkewMatrix.from_matrix(self.W(alpha)))

    def in_plane_load(self, R) -> np.ndarray:
        """Node-weighted in-plane load ``w (R^T f)_{1,2}`` stacked as ``[x1 part, x2 part]``."""
        fR = self.f @ R
        return np.concatenate([self.w * fR[:, 0], self.w * fR[:, 1]])

    def _loads(self, R, Wm, u1, u2, v):
        fR = self.f @ R
        e3 = np.array([0.0, 0.0, 1.0])
        Lu = self.w @ (fR[:, 0] * u1 + fR[:, 1] * u2)
        fw = self.f @ (R @ Wm @ e3)
        Lv = self.w @ (fw * v)
        LW = float(np.sum(self.Mm * (R @ Wm @ Wm)))
        return Lu, Lv, LW, fR, fw

    def value(self, x) -> float:
        return self.value_and_grad(x, need_grad=False)[0]

    def value_and_grad(self, x, need_grad: bool = True):
        N = self.N
        u, v, t, alpha = self.unpack(x)
        R = self.rotation(t)
        Wm = self.W(alpha)
        E = self.disc.energy(u, v)
        u1, u2, vf = x[:N], x[N:2 * N], x[2 * N:3 * N]
        Lu, Lv, LW, fR, fw = self._loads(R, Wm, u1, u2, vf)
        s = self.weight
        J = E.total - s * (Lu + Lv + LW)
        if not need_grad:
            return float(J), None
        gu, gv = self.disc.gradient(u, v)
        g = np.empty_like(x, dtype=float)
        g[:N] = gu[..., 0].ravel() - s * self.w * fR[:, 0]
        g[N:2 * N] = gu[..., 1].ravel() - s * self.w * fR[:, 1]
        g[2 * N:3 * N] = gv.ravel() - s * self.w * fw
        k = 3 * N
        e3 = np.array([0.0, 0.0, 1.0])
        if self.has_t:
            # d/dt R(t) = R K with K the unit generator in body coordinates
            dLu, dLv, dLW, _, _ = self._loads(R @ self.K, Wm, u1, u2, vf)
            g[k] = -s * (dLu + dLv + dLW)
            k += 1
        for i, B in enumerate(self.basis):
            dLv = self.w @ ((self.f @ (R @ B @ e3)) * vf)
            dLW = float(np.sum(self.Mm * (R @ (B @ Wm + Wm @ B))))
            g[k + i] = -s * (dLv + dLW)
        return float(J), g


class ReducedVKProblem:
    """Total energy with ``u`` eliminated by its (linear) optimality condition.

    For fixed ``(v, t, W)`` the energy is quadratic in ``u`` with a constant
    stiffness, factorized once with three rigid degrees of freedom pinned.
    ``v`` is optionally preconditioned by ``v = L^{-T} z`` with ``L L^T`` the
    bending stiffness plus a load-scaled Dirichlet term; the gradient of the
    reduced function is the full gradient at the optimal ``u``.
    """

    def __init__(self, problem: VKTotalProblem, precondition: bool = True, max_dense: int = 2500):
        self.p = problem
        grid = problem.grid
        N = problem.N
        d = problem.disc
        Z = sp.csr_matrix((N, N))
        self.B = sp.bmat([[2 * d.d1, Z], [Z, 2 * d.d2], [d.d2, d.d1]], format="csr")
        self.Wc = sp.kron(sp.csr_matrix(d.C), sp.diags(problem.w), format="csr")
        K = (0.25 * (self.B.T @ self.Wc @ self.B)).tocsr()
        n1, n2 = grid.shape
        pinned = np.array([0, N, N + (n1 - 1) * n2])
        self.free = np.setdiff1d(np.arange(2 * N), pinned)
        self.lu = splu(K[self.free][:, self.free].tocsc())
        self.L = None
        if precondition and N <= max_dense:
            Db = sp.vstack([d.d11, d.d22, d.d12], format="csr")
            Hb = (Db.T @ self.Wc @ Db).toarray() / 12.0
            Wd = sp.diags(problem.w)
            G = (d.d1.T @ Wd @ d.d1 + d.d2.T @ Wd @ d.d2).toarray()
            sigma = abs(problem.ors.max_value) / grid.area
            mass = 1e-8 * np.trace(Hb) / np.sum(problem.w)
            S = Hb + sigma * G + mass * np.diag(problem.w)
            self.L = cholesky(S, lower=True)

    @property
    def size(self) -> int:
        return self.p.size - 2 * self.p.N

    def v_of(self, z):
        return z if self.L is None else solve_triangular(self.L.T, z, lower=False)

    def z_of(self, v):
        v = np.asarray(v, dtype=float).ravel()
        return v if self.L is None else self.L.T @ v

    def optimal_u(self, v, R) -> np.ndarray:
        d = self.p.disc
        p1, p2 = d.d1 @ v, d.d2 @ v
        c = np.concatenate([p1 * p1, p2 * p2, p1 * p2])
        rhs = self.p.weight * self.p.in_plane_load(R) - 0.25 * (self.B.T @ (self.Wc @ c))
        u = np.zeros(2 * self.p.N)
        u[self.free] = self.lu.solve(rhs[self.free])
        return u

    def full(self, y) -> np.ndarray:
        N = self.p.N
        v = self.v_of(y[:N])
        rest = y[N:]
        t = float(rest[0]) if self.p.has_t else 0.0
        u = self.optimal_u(v, self.p.rotation(t))
        return np.concatenate([u, v, rest])

    def reduced(self, x) -> np.ndarray:
        N = self.p.N
        return np.concatenate([self.z_of(x[2 * N:3 * N]), x[3 * N:]])

    def value_and_grad(self, y):
        N = self.p.N
        x = self.full(y)
        J, g = self.p.value_and_grad(x)
        gv = g[2 * N:3 * N]
        gz = gv if self.L is None else solve_triangular(self.L, gv, lower=True)
        return J, np.concatenate([gz, g[3 * N:]])


@dataclass(frozen=True)
class MinimizeOptions:
    n_starts: int = 8
    seed: int = 0
    maxiter: int = 2000
    init_scale: float = 1e-2
    tau_grad: float = 1e-8
    divergence_factor: float = 1e12
    weight: float = 1.0
    ray_gammas: tuple = (10.0, 100.0, 1000.0)
    modes: int = 3
    precondition: bool = True
    probe: bool = True

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ray_gammas"] = [float(g) for g in self.ray_gammas]
        return d


@dataclass(frozen=True)
class MinimizeResult:
    quadruplet: AdmissibleQuadruplet | None
    value: float
    verdict: str
    runs: list
    history: list
    scale: float
    ray: dict | None = None
    probe_witness: dict | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "verdict": self.verdict, "runs": self.runs, "history": self.history,
                "scale": self.scale, "ray": self.ray, "probe_witness": self.probe_witness}


def _random_field(grid: Grid2D, rng, modes: int, amplitude: float) -> np.ndarray:
    x1a, x1b, x2a, x2b = grid.bounds
    X1, X2 = grid.coords
    s1 = (X1 - x1a) / (x1b - x1a)
    s2 = (X2 - x2a) / (x2b - x2a)
    out = np.zeros(grid.shape)
    for k in range(modes + 1):
        for l in range(modes + 1):
            out += rng.standard_normal() * np.cos(np.pi * k * s1) * np.cos(np.pi * l * s2) / (1 + k * k + l * l)
    return amplitude * out


def vr_gauge_fix(quad: AdmissibleQuadruplet, load: Load) -> AdmissibleQuadruplet:
    """Remove rigid and constant modes, then the V_R component of the mean slope of ``v``."""
    grid = quad.grid
    u = quad.u
    v = quad.v
    try:
        coeffs = coefficients(load, quad.R)
        n, _ = _vr_direction(coeffs)
    except PreconditionError:
        n = None
    if n is not None:
        g = integrate((grid, gradient(v).values)) / grid.area
        lam = -float(g @ n) / float(n @ n)
        tri = build_vr_ur_xi(coeffs, lam, v)
        u = u + tri.u + tri.xi
        v = v + tri.v
    uu = remove_rigid_gauge(u.values, grid)
    vv = v.values - integrate((grid, v.values)) / grid.area
    return AdmissibleQuadruplet(VectorField2D(grid, uu), ScalarField2D(grid, vv), quad.R, quad.W)


def _run_start(problem: VKTotalProblem, red: ReducedVKProblem, options: MinimizeOptions, i: int, threshold: float):
    rng = np.random.default_rng([options.seed, i])
    u = np.stack([_random_field(problem.grid, rng, options.modes, options.init_scale) for _ in range(2)], -1)
    v = _random_field(problem.grid, rng, options.modes, options.init_scale)
    t = float(rng.uniform(0, 2 * np.pi)) if problem.has_t else 0.0
    alpha = options.init_scale * rng.standard_normal(len(problem.basis))
    y0 = red.reduced(problem.pack(u, v, t, alpha))
    hist = []

    def cb(intermediate_result):
        hist.append(float(intermediate_result.fun))
        if intermediate_result.fun < threshold:
            raise StopIteration

    res = minimize(red.value_and_grad, y0, jac=True, method="L-BFGS-B", callback=cb,
                   options={"maxiter": options.maxiter, "gtol": options.tau_grad * problem_scale(problem),
                            "ftol": 1e-15, "maxcor": 30})
    x = red.full(res.x)
    J, g = problem.value_and_grad(x)
    return {
        "start": i,
        "value": float(J),
        "iterations": int(res.nit),
        "grad_norm": float(np.linalg.norm(g)),
        "converged": bool(res.status == 0),
        "diverged": bool(J < threshold),
        "message": str(res.message),
    }, x, hist


def problem_scale(problem: VKTotalProblem) -> float:
    """``max F``, or the load scale when the maximum vanishes."""
    return max(abs(problem.ors.max_value), load_scale(problem.load.f) * 1e-12, 1e-300)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PLATELAB_THREADS", "1")))
    except ValueError:
        return 1


def minimize_total_vk(load: Load, ors: OptimalRotationSet, model: ElasticModel,
                      options: MinimizeOptions | None = None) -> MinimizeResult:
    """Multistart L-BFGS minimization of the total Von Karman energy.

    Each start draws smooth random fields; ``u`` is eliminated exactly and
    ``v`` is preconditioned by the bending stiffness.  Rigid and constant
    modes, and on a one-dimensional set the V_R invariance, are removed from
    every final iterate.  The verdict is ``unbounded`` when a run drops below
    ``-divergence_factor * max F`` or when a ray from the best iterate or
    from the sampling-probe witness certifies a negative quadratic limit;
    otherwise ``attained`` if the best run converged and ``inconclusive`` if
    not.
    """
    options = options or MinimizeOptions()
    comp = compatibility_check(load, ors)
    if not comp["ok"]:
        raise PreconditionError("compatibility condition fails; the Von Karman total energy is not the relevant limit")
    problem = VKTotalProblem(load, ors, model, options.weight)
    red = ReducedVKProblem(problem, options.precondition)
    scale = problem_scale(problem)
    threshold = -options.divergence_factor * scale
    starts = range(options.n_starts)
    workers = min(_threads(), options.n_starts)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(lambda i: _run_start(problem, red, options, i, threshold), starts))
    else:
        outs = [_run_start(problem, red, options, i, threshold) for i in starts]
    runs, best = [], None
    for run, x, hist in outs:
        quad = problem.quadruplet(x)
        if not run["diverged"]:
            quad = vr_gauge_fix(quad, load)
            run["value_gauge_fixed"] = total_vk(quad, load, model, ors, weight=options.weight, check=False).value
        log.info("start %d: J = %.6e after %d iterations (|grad| %.2e)", run["start"], run["value"],
                 run["iterations"], run["grad_norm"])
        runs.append(run)
        if best is None or run["value"] < best[0]["value"]:
            best = (run, quad, hist)
    run, quad, hist = best
    ray = _ray_from_iterate(problem, quad, options.ray_gammas)
    witness = None
    if not ray["certified"] and options.probe:
        probe = s2_probe(load, ors, model)
        if probe.quadruplet is not None and probe.min_value < 0:
            pr = divergence_probe(probe.quadruplet, load, model, options.weight - 1.0, options.ray_gammas, ors=ors)
            witness = dict(probe.witness)
            witness["ray"] = pr.to_dict()
            if pr.certified:
                ray = {"source": "probe_witness", **pr.to_dict()}
    if ray["certified"] or run["diverged"]:
        verdict = "unbounded"
    else:
        verdict = "attained" if run["converged"] else "inconclusive"
    return MinimizeResult(quad, run["value"], verdict, runs, hist, scale, ray, witness)


def _ray_from_iterate(problem: VKTotalProblem, quad: AdmissibleQuadruplet, gammas) -> dict:
    """Ray test from a candidate, with ``u`` re-solved on the linearized constraint."""
    sol = solve_u_linearized(quad.v, check=False, tol=np.inf)
    base = AdmissibleQuadruplet(sol.u, quad.v, quad.R, quad.W)
    probe = divergence_probe(base, problem.load, problem.model, problem.weight - 1.0, gammas, ors=problem.ors)
    return {"source": "best_iterate", "membrane_residual": float(sol.residual), **probe.to_dict()}


# ---------------------------------------------------------------- divergence probe


@dataclass(frozen=True)
class DivergenceProbe:
    gammas: list
    ratios: list
    certified: bool
    spread: float

    def to_dict(self) -> dict:
        return {"gammas": self.gammas, "ratios": self.ratios, "certified": self.certified, "spread": self.spread}


def divergence_probe(quad: AdmissibleQuadruplet, load: Load, model: ElasticModel, eps: float,
                     gammas, ors: OptimalRotationSet | None = None, tol: float = 1e-9) -> DivergenceProbe:
    """``J_eps(g^2 u, g v, R, g W) / g^2`` over ``gammas`` with load weight ``1 + eps``.

    Divergence is certified when every ratio is below ``-tol`` and the ratios
    agree to within ``tol`` relative to their size (all terms scale as g^2 on
    linearized isometries).
    """
    ratios = []
    for gam in gammas:
        q = AdmissibleQuadruplet(quad.u * gam**2, quad.v * gam, quad.R, quad.W * gam)
        ratios.append(total_vk(q, load, model, ors, weight=1.0 + eps, check=False).value / gam**2)
    r = np.array(ratios)
    spread = float(np.max(r) - np.min(r)) if r.size else 0.0
    certified = bool(r.size and np.all(r < -tol) and spread <= tol * max(1.0, float(np.max(np.abs(r)))))
    return DivergenceProbe(list(map(float, gammas)), [float(x) for x in r], certified, spread)


# ---------------------------------------------------------------- (S1) probe


@dataclass(frozen=True)
class S1Member:
    y: VectorField2D
    label: str
    flat: bool = False


@dataclass(frozen=True)
class S1Probe:
    min_value: float
    floor: float
    gap: float
    witness: str
    certified_failure: bool
    values: list

    def to_dict(self) -> dict:
        return {"min_value": self.min_value, "flat_floor": self.floor, "gap_to_floor": self.gap,
                "witness": self.witness, "certified_failure": self.certified_failure, "values": self.values}


def embedded_family(load: Load, ors: OptimalRotationSet, profiles=None, amplitudes=(0.01, 0.05, 0.2),
                    n_rotations: int = 4, normal_angles=(0.0, 0.05)) -> list:
    """Rotated isometric embeddings ``R exp(t N) y`` of developable profiles (plus flat members)."""
    grid = load.grid
    X = grid.points
    if profiles is None:
        profiles = [
            ("sin(x1)", lambda a, b: np.sin(a)),
            ("sin(x2)", lambda a, b: np.sin(b)),
            ("(x1+x2)^2/2", lambda a, b: 0.5 * (a + b) ** 2),
            ("(x1-x2)^2/2", lambda a, b: 0.5 * (a - b) ** 2),
            ("x1^2/2", lambda a, b: 0.5 * a**2),
            ("x2^2/2", lambda a, b: 0.5 * b**2),
        ]
    if ors.dim == 1:
        rots = [(f"t={t:.4f}", ors.member(t)) for t in np.linspace(0, 2 * np.pi, n_rotations, endpoint=False)]
    else:
        rots = [("rep", ors.representative)]
    normals = [b.w for b in normal_space(ors)] if ors.dim != 3 else []
    tilts = [("", np.eye(3))]
    for ang in normal_angles:
        if ang == 0.0:
            continue
        for j, nb in enumerate(normals):
            for sgn in (1, -1):
                tilts.append((f",N{j}*{sgn * ang:g}", exp_skew(sgn * ang * nb)))
    flat = np.concatenate([X, np.zeros(grid.shape + (1,))], axis=-1)
    members = []
    embeddings = []
    for name, fn in profiles:
        base = grid.sample(fn).values
        sup = float(np.max(np.linalg.norm(gradient(ScalarField2D(grid, base)).values, axis=-1))) or 1.0
        for amp in amplitudes:
            for sgn in (1.0, -1.0):
                a = sgn * amp / sup * 0.5
                emb = isometric_embedding(ScalarField2D(grid, a * base))
                embeddings.append((f"{name}*{a:.4g}", emb.y.values))
    for rname, R in rots:
        for tname, T in tilts:
            Q = R @ T
            members.append(S1Member(VectorField2D(grid, flat @ Q.T), f"flat[{rname}{tname}]", True))
            for ename, y in embeddings:
                members.append(S1Member(VectorField2D(grid, y @ Q.T), f"{ename}[{rname}{tname}]"))
    return members


def s1_probe(load: Load, model: ElasticModel, family, ors: OptimalRotationSet | None = None,
             rtol: float = 1e-9) -> S1Probe:
    """Minimum of the Kirchhoff total energy over an embedded family.

    Flat members at optimal rotations sit at ``-max F``, so the probe
    measures values relative to that floor: a member strictly below the
    floor, or a non-flat member at the floor, certifies failure.
    """
    if not family:
        raise InputError("the (S1) probe needs a non-empty family")
    ors = classify_optimal_set(load, moment_matrix(load)) if ors is None else ors
    floor = -ors.max_value
    vals = []
    for m in family:
        vals.append((total_kl(m.y, load, model), m))
    J, witness = min(vals, key=lambda p: p[0])
    tol = rtol * max(abs(floor), load_scale(load.f))
    gap = J - floor
    nonflat_zero = any((not m.flat) and abs(val - floor) <= tol and energy_kl(m.y, model) > tol for val, m in vals)
    return S1Probe(float(J), float(floor), float(gap), witness.label, bool(gap < -tol or nonflat_zero),
                   [{"member": m.label, "J": float(val)} for val, m in vals])


# ---------------------------------------------------------------- combined report


@dataclass
class StabilityReport:
    regime: str
    compatibility: dict
    compatibility_ok: bool
    s2_affine_holds: bool | None = None
    s2_affine: dict | None = None
    s2_probe_min: float | None = None
    s2_probe: dict | None = None
    s1_probe_min: float | None = None
    s1_probe: dict | None = None
    verdict: str = ""
    s2_samples: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "s2_samples"}


def analyze_stability(load: Load, model: ElasticModel, ors: OptimalRotationSet | None = None,
                      run_s2_probe: bool = True, run_s1_probe: bool = True, s2_profiles=None,
                      compat_rtol: float = 1e-6, probe_tol: float = 1e-8) -> StabilityReport:
    """Route a load to the applicable regime and run the matching probes."""
    ors = classify_optimal_set(load, moment_matrix(load)) if ors is None else ors
    comp = compatibility_check(load, ors, rtol=compat_rtol)
    if ors.dim == 3:
        return StabilityReport("every rotation optimal", comp, comp["ok"],
                               verdict="load functional vanishes identically; stability reduces to elastic positivity")
    rep = StabilityReport("von_karman" if comp["ok"] else "kirchhoff", comp, comp["ok"])
    if not comp["ok"]:
        if run_s1_probe:
            probe = s1_probe(load, model, embedded_family(load, ors), ors)
            rep.s1_probe_min = probe.min_value
            rep.s1_probe = {k: v for k, v in probe.to_dict().items() if k != "values"}
        rep.verdict = ("compatibility condition fails: (S1) fails and quasi-minimizers converge to a bent "
                       "minimizer of the Kirchhoff total energy")
        return rep
    aff = s2_affine_test(load, ors, model, check_compat=False)
    rep.s2_affine_holds = aff.holds
    rep.s2_affine = aff.to_dict()
    failed = not aff.holds
    if run_s2_probe:
        p = s2_probe(load, ors, model, s2_profiles, tol=probe_tol)
        rep.s2_samples = p.samples
        rep.s2_probe_min = p.min_value
        rep.s2_probe = {"min_value": p.min_value, "witness": p.witness, "certified_failure": p.certified_failure,
                        "n_samples": len(p.samples)}
        failed = failed or p.certified_failure
    if run_s1_probe:
        probe = s1_probe(load, model, embedded_family(load, ors), ors)
        rep.s1_probe_min = probe.min_value
        rep.s1_probe = {k: v for k, v in probe.to_dict().items() if k != "values"}
    if failed:
        rep.verdict = "(S2) fails on a sampled configuration; the total energy is unbounded for any load increase"
    else:
        rep.verdict = "no counterexample to (S2) found over the sampled configurations"
    return rep
