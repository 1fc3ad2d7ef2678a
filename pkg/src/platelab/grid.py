"""Uniform vertex-centred grids on a rectangle S and on the plate S x (-1/2, 1/2).

Fields are stored node-wise with the x1 index first (``indexing="ij"``), so a
scalar field on an ``n1 x n2`` grid has shape ``(n1, n2)`` and a d-vector field
has shape ``(n1, n2, d)``.  Differential operators are exposed both as array
functions and as sparse matrices acting on row-major flattened node vectors;
the two forms agree to round-off, which is what the adjoint gradients of the
energy functionals rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_simpson

from .errors import GridMismatchError, InputError, NonIntegrableFieldError

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "VectorField2D",
    "Field3D",
    "axis_weights",
    "integrate",
    "gradient",
    "hessian",
    "jacobian",
    "curl",
    "integrate_potential",
    "first_derivative_matrix",
    "second_derivative_matrix",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def axis_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``n`` equispaced nodes.

    With an odd number of intervals the last three are handled by the 3/8
    rule.  All weights are positive, the rule is exact for cubics and reduces
    to trapezoidal exactness for (bi)linear integrands.
    """
    if n < 3:
        raise InputError("quadrature needs at least 3 nodes per axis")
    w = np.zeros(n)
    intervals = n - 1
    m = intervals if intervals % 2 == 0 else intervals - 3
    if m > 0:
        w[0 : m + 1 : 2] += 2.0
        w[1:m:2] += 2.0
        w[0] -= 1.0
        w[m] -= 1.0
        w[1:m:2] *= 2.0
        w[: m + 1] *= h / 3.0
    if intervals % 2 == 1:
        w[m : m + 4] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def first_derivative_matrix(n: int, h: float) -> sp.csr_matrix:
    """Central differences inside, second-order one-sided stencils at both ends."""
    d = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        d[i, i - 1] = -0.5
        d[i, i + 1] = 0.5
    d[0, 0:3] = [-1.5, 2.0, -0.5]
    d[n - 1, n - 3 : n] = [0.5, -2.0, 1.5]
    return (d / h).tocsr()


def second_derivative_matrix(n: int, h: float) -> sp.csr_matrix:
    """Three-point Laplacian stencil inside, four-point one-sided at the ends."""
    if n < 4:
        # the one-sided second-order closure needs four nodes; fall back to the
        # first-order three-node closure on tiny grids
        d = sp.lil_matrix((n, n))
        for i in range(n):
            j = min(max(i, 1), n - 2)
            d[i, j - 1 : j + 2] = [1.0, -2.0, 1.0]
        return (d / h**2).tocsr()
    d = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        d[i, i - 1 : i + 2] = [1.0, -2.0, 1.0]
    d[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
    d[n - 1, n - 4 : n] = [-1.0, 4.0, -5.0, 2.0]
    return (d / h**2).tocsr()


@dataclass(frozen=True)
class Grid2D:
    """Vertex-centred tensor grid on ``(x1min, x1max) x (x2min, x2max)``."""

    bounds: tuple[float, float, float, float] = (-0.5, 0.5, -0.5, 0.5)
    n1: int = 65
    n2: int = 65

    def __post_init__(self):
        b = tuple(float(x) for x in self.bounds)
        if len(b) != 4 or not all(np.isfinite(b)):
            raise InputError(f"grid bounds must be four finite reals, got {self.bounds!r}")
        if not (b[1] > b[0] and b[3] > b[2]):
            raise InputError(f"grid bounds must be increasing, got {b}")
        if int(self.n1) < 3 or int(self.n2) < 3:
            raise InputError("grid needs at least 3 nodes per axis")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))

    @classmethod
    def square(cls, n: int, half_width: float = 0.5) -> "Grid2D":
        return cls((-half_width, half_width, -half_width, half_width), n, n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def spacing(self) -> tuple[float, float]:
        x1a, x1b, x2a, x2b = self.bounds
        return ((x1b - x1a) / (self.n1 - 1), (x2b - x2a) / (self.n2 - 1))

    @property
    def area(self) -> float:
        x1a, x1b, x2a, x2b = self.bounds
        return (x1b - x1a) * (x2b - x2a)

    @cached_property
    def x1(self) -> np.ndarray:
        return _frozen(np.linspace(self.bounds[0], self.bounds[1], self.n1))

    @cached_property
    def x2(self) -> np.ndarray:
        return _frozen(np.linspace(self.bounds[2], self.bounds[3], self.n2))

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return _frozen(X1), _frozen(X2)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n1, n2, 2)``."""
        return _frozen(np.stack(self.coords, axis=-1))

    @cached_property
    def weights(self) -> np.ndarray:
        """Tensor-product quadrature weights, shape ``(n1, n2)``."""
        h1, h2 = self.spacing
        return _frozen(np.outer(axis_weights(self.n1, h1), axis_weights(self.n2, h2)))

    @cached_property
    def operators(self) -> dict[str, sp.csr_matrix]:
        """Sparse difference operators on row-major flattened nodes.

        Keys: ``d1``, ``d2`` (first derivatives), ``d11``, ``d22``, ``d12``
        (Hessian entries).  ``d12`` is the product ``d1 @ d2`` so the discrete
        Hessian is symmetric by construction.
        """
        h1, h2 = self.spacing
        i1 = sp.identity(self.n1, format="csr")
        i2 = sp.identity(self.n2, format="csr")
        d1 = sp.kron(first_derivative_matrix(self.n1, h1), i2, format="csr")
        d2 = sp.kron(i1, first_derivative_matrix(self.n2, h2), format="csr")
        d11 = sp.kron(second_derivative_matrix(self.n1, h1), i2, format="csr")
        d22 = sp.kron(i1, second_derivative_matrix(self.n2, h2), format="csr")
        return {"d1": d1, "d2": d2, "d11": d11, "d22": d22, "d12": (d1 @ d2).tocsr()}

    def refined(self) -> "Grid2D":
        """Grid with every interval halved."""
        return Grid2D(self.bounds, 2 * self.n1 - 1, 2 * self.n2 - 1)

    def scalar(self, values) -> "ScalarField2D":
        return ScalarField2D(self, values)

    def vector(self, values) -> "VectorField2D":
        return VectorField2D(self, values)

    def sample(self, fn) -> "ScalarField2D":
        """Sample ``fn(x1, x2)`` at the nodes."""
        X1, X2 = self.coords
        return ScalarField2D(self, np.broadcast_to(fn(X1, X2), self.shape))

    def to_dict(self) -> dict:
        return {"bounds": list(self.bounds), "n1": self.n1, "n2": self.n2}


def _check_values(values, shape, what):
    a = np.array(values, dtype=float)
    if a.shape != shape:
        raise InputError(f"{what}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{what}: values must be finite")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScalarField2D:
    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.values, self.grid.shape, "scalar field"))

    def __add__(self, other):
        _same_grid(self, other)
        return ScalarField2D(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return ScalarField2D(self.grid, self.values - other.values)

    def __mul__(self, s):
        return ScalarField2D(self.grid, self.values * float(s))

    __rmul__ = __mul__

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class VectorField2D:
    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim != 3 or a.shape[-1] not in (2, 3):
            raise InputError(f"vector field: expected shape (n1, n2, 2|3), got {a.shape}")
        object.__setattr__(self, "values", _check_values(a, self.grid.shape + (a.shape[-1],), "vector field"))

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    def component(self, i: int) -> ScalarField2D:
        return ScalarField2D(self.grid, self.values[..., i])

    def __add__(self, other):
        _same_grid(self, other)
        return VectorField2D(self.grid, self.values + other.values)

    def __sub__(self, other):
        _same_grid(self, other)
        return VectorField2D(self.grid, self.values - other.values)

    def __mul__(self, s):
        return VectorField2D(self.grid, self.values * float(s))

    __rmul__ = __mul__


@dataclass(frozen=True)
class Field3D:
    """3-vector field on the plate grid ``S x (-1/2, 1/2)``, shape ``(n1, n2, n3, 3)``."""

    grid: Grid2D
    n3: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if int(self.n3) < 3:
            raise InputError("transverse node count n3 must be at least 3")
        object.__setattr__(self, "n3", int(self.n3))
        shape = self.grid.shape + (self.n3, 3)
        object.__setattr__(self, "values", _check_values(self.values, shape, "3D field"))

    @property
    def x3(self) -> np.ndarray:
        return np.linspace(-0.5, 0.5, self.n3)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights on the plate nodes, shape ``(n1, n2, n3)``."""
        w3 = axis_weights(self.n3, 1.0 / (self.n3 - 1))
        return self.grid.weights[..., None] * w3


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def integrate(field) -> float:
    """Quadrature of a scalar field over S.

    Accepts a :class:`ScalarField2D` or a ``(grid, array)`` pair where the
    array has the grid shape in its two leading axes (trailing axes are
    integrated component-wise).
    """
    if isinstance(field, ScalarField2D):
        grid, values = field.grid, field.values
    else:
        grid, values = field
        values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InputError("cannot integrate non-finite values")
    w = grid.weights
    if values.ndim == 2:
        return float(np.sum(w * values))
    return np.tensordot(w, values, axes=([0, 1], [0, 1]))


def gradient(field: ScalarField2D) -> VectorField2D:
    """Second-order finite-difference gradient, shape ``(n1, n2, 2)``."""
    h1, h2 = field.grid.spacing
    g1 = np.gradient(field.values, h1, axis=0, edge_order=2)
    g2 = np.gradient(field.values, h2, axis=1, edge_order=2)
    return VectorField2D(field.grid, np.stack([g1, g2], axis=-1))


def jacobian(field: VectorField2D) -> np.ndarray:
    """Node-wise Jacobian ``J[..., i, j] = d_j field_i``, shape ``(n1, n2, d, 2)``."""
    h1, h2 = field.grid.spacing
    d1 = np.gradient(field.values, h1, axis=0, edge_order=2)
    d2 = np.gradient(field.values, h2, axis=1, edge_order=2)
    return np.stack([d1, d2], axis=-1)


def hessian(field: ScalarField2D) -> np.ndarray:
    """Symmetric discrete Hessian, shape ``(n1, n2, 2, 2)``.

    Pure second derivatives use the compact three-point stencil; the mixed
    derivative is the product of the two first-derivative operators.
    """
    ops = field.grid.operators
    f = field.flat
    shape = field.grid.shape
    h11 = (ops["d11"] @ f).reshape(shape)
    h22 = (ops["d22"] @ f).reshape(shape)
    h12 = (ops["d12"] @ f).reshape(shape)
    out = np.empty(shape + (2, 2))
    out[..., 0, 0] = h11
    out[..., 1, 1] = h22
    out[..., 0, 1] = h12
    out[..., 1, 0] = h12
    return out


def curl(g: VectorField2D) -> ScalarField2D:
    """Scalar curl ``d1 g2 - d2 g1`` of a planar field."""
    if g.dim != 2:
        raise InputError("curl needs a 2-vector field")
    h1, h2 = g.grid.spacing
    c = np.gradient(g.values[..., 1], h1, axis=0, edge_order=2) - np.gradient(
        g.values[..., 0], h2, axis=1, edge_order=2
    )
    return ScalarField2D(g.grid, c)


def _l2(grid, values) -> float:
    return float(np.sqrt(max(np.sum(grid.weights * values**2), 0.0)))


def curl_residual(g: VectorField2D) -> float:
    """L2 norm of the discrete curl."""
    return _l2(g.grid, curl(g).values)


def default_curl_tolerance(g: VectorField2D, rtol: float = 0.1) -> float:
    """``rtol`` times the L2 norm of the field's first derivatives (plus a round-off floor).

    The discrete curl of a sampled exact gradient is a truncation error, small
    against the derivatives themselves; for a rotational field the ratio is O(1).
    """
    h1, h2 = g.grid.spacing
    sq = sum(np.gradient(g.values, h, axis=ax, edge_order=2) ** 2 for ax, h in ((0, h1), (1, h2)))
    size = _l2(g.grid, np.sum(sq, axis=-1))
    return max(rtol * size, 1e-12 * float(np.max(np.abs(g.values), initial=0.0)) * g.grid.area)


def _cumulative(values, h, axis):
    return cumulative_simpson(values, dx=h, axis=axis, initial=0.0)


def integrate_potential(g: VectorField2D, tol: float | None = None) -> ScalarField2D:
    """Recover a zero-mean potential ``theta`` with ``gradient(theta) ~ g``.

    The field is integrated along grid lines from the lower-left corner in
    both staircase orders (x1 first, x2 first) and the two results are
    averaged.  Raises :class:`NonIntegrableFieldError` when the discrete curl
    exceeds ``tol`` (default :func:`default_curl_tolerance`).
    """
    if g.dim != 2:
        raise InputError("potential integration needs a 2-vector field")
    tol = default_curl_tolerance(g) if tol is None else float(tol)
    res = curl_residual(g)
    if res > tol:
        raise NonIntegrableFieldError("field is not a gradient", res, tol)
    h1, h2 = g.grid.spacing
    g1, g2 = g.values[..., 0], g.values[..., 1]
    # x1 along the bottom edge, then x2 up every column
    along_bottom = _cumulative(g1[:, 0], h1, axis=0)
    a = along_bottom[:, None] + _cumulative(g2, h2, axis=1)
    # x2 along the left edge, then x1 across every row
    along_left = _cumulative(g2[0, :], h2, axis=0)
    b = along_left[None, :] + _cumulative(g1, h1, axis=0)
    theta = 0.5 * (a + b)
    theta = theta - np.sum(g.grid.weights * theta) / g.grid.area
    return ScalarField2D(g.grid, theta)
