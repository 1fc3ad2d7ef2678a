"""Dead loads on the plate and the linear functional they induce on 3x3 matrices.

A load is a force density ``f: S -> R^3`` per unit area, constant through the
thickness and with zero mean.  It acts on a rotation (or any 3x3 matrix) ``A``
through

    F(A) = int_S f . A (x1, x2, 0)^T dx',

which is represented by the moment matrix ``M`` with ``M[i, j] = int f_i x_j``
for ``j = 0, 1`` and a zero third column, so that ``F(A) = sum(M * A)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLoadError, InputError
from .grid import Grid2D, ScalarField2D, VectorField2D, integrate

__all__ = [
    "Load",
    "MomentMatrix",
    "Coefficients",
    "normalize_mean",
    "moment_matrix",
    "evaluate_F",
    "compatibility_residual",
    "coefficients",
    "load_scale",
]


def load_scale(f: VectorField2D) -> float:
    """``||f||_{L2} * |S|^(1/2)``, the reference size for load tolerances."""
    sq = np.sum(f.values**2, axis=-1)
    return float(np.sqrt(max(integrate((f.grid, sq)), 0.0)) * np.sqrt(f.grid.area))


@dataclass(frozen=True)
class Load:
    """Mean-zero force density with three components.

    Construction checks the mean condition at relative tolerance ``rtol``;
    use :func:`normalize_mean` to centre arbitrary data first.
    """

    f: VectorField2D
    rtol: float = 1e-6

    def __post_init__(self):
        if not isinstance(self.f, VectorField2D) or self.f.dim != 3:
            raise InputError("a load needs a 3-component vector field")
        scale = load_scale(self.f)
        if scale == 0.0:
            raise DegenerateLoadError("load vanishes identically")
        means = integrate((self.f.grid, self.f.values))
        if np.max(np.abs(means)) > self.tol_mean:
            raise InputError(f"load is not mean-zero: integrals {means} exceed {self.tol_mean:.3e}")

    @property
    def grid(self) -> Grid2D:
        return self.f.grid

    @property
    def scale(self) -> float:
        return load_scale(self.f)

    @property
    def tol_mean(self) -> float:
        return self.rtol * load_scale(self.f)

    def scaled(self, t: float) -> "Load":
        if t == 0:
            raise DegenerateLoadError("scaling a load by zero")
        return Load(self.f * t, self.rtol)

    def rotated(self, Q) -> "Load":
        """Load with every force vector rotated by ``Q``."""
        Q = np.asarray(Q, dtype=float)
        return Load(VectorField2D(self.grid, self.f.values @ Q.T), self.rtol)


def normalize_mean(f: VectorField2D, rtol: float = 1e-6) -> Load:
    """Subtract the quadrature mean of each component."""
    if not isinstance(f, VectorField2D) or f.dim != 3:
        raise InputError("a load needs a 3-component vector field")
    means = integrate((f.grid, f.values)) / f.grid.area
    centred = f.values - means
    if not np.any(np.abs(centred) > 1e-14 * max(1.0, float(np.max(np.abs(f.values))))):
        raise DegenerateLoadError("load is constant, nothing is left after removing its mean")
    return Load(VectorField2D(f.grid, centred), rtol)


@dataclass(frozen=True)
class MomentMatrix:
    """3x3 representation of the load functional; the third column is zero."""

    M: np.ndarray = field(repr=True)

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.shape != (3, 3) or not np.all(np.isfinite(M)):
            raise InputError("moment matrix must be a finite 3x3 array")
        if np.any(M[:, 2] != 0.0):
            raise InputError("moment matrix must have a zero third column")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @classmethod
    def from_array(cls, M) -> "MomentMatrix":
        M = np.array(M, dtype=float)
        M[:, 2] = 0.0
        return cls(M)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.M))

    def __call__(self, A) -> float:
        return evaluate_F(self, A)


def moment_matrix(load: Load) -> MomentMatrix:
    g = load.grid
    X1, X2 = g.coords
    M = np.zeros((3, 3))
    for j, X in enumerate((X1, X2)):
        M[:, j] = integrate((g, load.f.values * X[..., None]))
    return MomentMatrix(M)


def evaluate_F(M, A) -> float:
    """``F(A) = M : A``; ``A`` may carry leading batch axes."""
    M = M.M if isinstance(M, MomentMatrix) else np.asarray(M, dtype=float)
    A = np.asarray(A, dtype=float)
    out = np.einsum("ij,...ij->...", M, A)
    return float(out) if out.ndim == 0 else out


def compatibility_residual(load: Load, R) -> float:
    """``||(R^T f) . e3||_{L2(S)}``; zero iff the load has no normal component in frame R."""
    R = np.asarray(R, dtype=float)
    normal = load.f.values @ R[:, 2]
    return float(np.sqrt(max(integrate(ScalarField2D(load.grid, normal**2)), 0.0)))


@dataclass(frozen=True)
class Coefficients:
    """First moments of the rotated load.

    ``c`` is the average of its two defining integrals ``c_12`` (x1 against the
    second column) and ``c_21`` (x2 against the first column); the two agree
    at optimal rotations and ``c_residual`` records their gap.
    """

    a: float
    b: float
    c: float
    c_12: float = 0.0
    c_21: float = 0.0

    @property
    def c_residual(self) -> float:
        return abs(self.c_12 - self.c_21)

    @property
    def det(self) -> float:
        return self.a * self.b - self.c**2

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.c], [self.c, self.b]])

    @classmethod
    def from_abc(cls, a: float, b: float, c: float) -> "Coefficients":
        return cls(float(a), float(b), float(c), float(c), float(c))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "c_12": self.c_12, "c_21": self.c_21,
                "c_residual": self.c_residual}


def coefficients(load, R) -> Coefficients:
    """Coefficients at ``R``; ``load`` may be a :class:`Load` or its moment matrix."""
    M = load if isinstance(load, MomentMatrix) else moment_matrix(load)
    R = np.asarray(R, dtype=float)
    a = float(M.M[:, 0] @ R[:, 0])
    b = float(M.M[:, 1] @ R[:, 1])
    c12 = float(M.M[:, 0] @ R[:, 1])
    c21 = float(M.M[:, 1] @ R[:, 0])
    return Coefficients(a, b, 0.5 * (c12 + c21), c12, c21)
