"""Named loads used by the CLI, the tests and the examples.

Every entry takes a grid plus keyword parameters and returns a mean-zero
:class:`~platelab.loads.Load`.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .grid import Grid2D, VectorField2D
from .loads import Load, normalize_mean

__all__ = ["LOADS", "make_load", "buckling_profile"]


def _field(grid: Grid2D, f1=0.0, f2=0.0, f3=0.0) -> VectorField2D:
    vals = np.zeros(grid.shape + (3,))
    for i, comp in enumerate((f1, f2, f3)):
        vals[..., i] = comp
    return VectorField2D(grid, vals)


def affine(grid: Grid2D, matrix=((0.0, 0.0), (0.0, 0.0), (1.0, 0.0)), scale: float = 1.0) -> Load:
    """``f = scale * A x'`` with a 3x2 matrix ``A``; the default is ``f = x1 e3``."""
    A = np.asarray(matrix, dtype=float)
    if A.shape != (3, 2):
        raise ConfigError("affine load needs a 3x2 matrix")
    vals = scale * grid.points @ A.T
    return normalize_mean(VectorField2D(grid, vals))


def example_b(grid: Grid2D, scale: float = 1.0) -> Load:
    """``f = scale * x1 e3``: a one-dimensional set of optimal rotations."""
    X1, _ = grid.coords
    return normalize_mean(_field(grid, f3=scale * X1))


def buckling_profile(x1, beta: float = 0.15):
    """Resultant ``G(x1) = -(1/8 - x1^2/2) + beta cos^2(pi x1)`` and its derivative ``g = G'``.

    ``G`` vanishes at ``x1 = +-1/2``, has negative mean for ``beta < 1/6`` and
    is positive at the centre for ``beta > 1/8``, so a compressive core sits
    inside a net tensile load.
    """
    G = -(0.125 - 0.5 * x1**2) + beta * np.cos(np.pi * x1) ** 2
    g = x1 - beta * np.pi * np.sin(2 * np.pi * x1)
    return G, g


def buckling(grid: Grid2D, scale: float = 5000.0, beta: float = 0.15) -> Load:
    """``f = scale * g(x1) e3`` with a compressive core; fails the linearized stability test for large scale."""
    if not 0.125 < beta < 1.0 / 6.0:
        raise ConfigError("beta must lie in (1/8, 1/6)")
    X1, _ = grid.coords
    _, g = buckling_profile(X1, beta)
    return normalize_mean(_field(grid, f3=scale * g))


def twist(grid: Grid2D, scale: float = 1.0, beta: float = 1.0) -> Load:
    """``f = scale (x1 e1 + beta x1 x2 e3)``; optimal rotations fix e1 and most of them see a normal load."""
    X1, X2 = grid.coords
    return normalize_mean(_field(grid, f1=scale * X1, f3=scale * beta * X1 * X2))


def singleton(grid: Grid2D, scale: float = 1.0, ratio: float = 2.0) -> Load:
    """``f = scale (ratio x1, x2, 0)``: a unique optimal rotation (the identity) when ratio != 0."""
    X1, X2 = grid.coords
    return normalize_mean(_field(grid, f1=scale * ratio * X1, f2=scale * X2))


def zero_moment(grid: Grid2D, scale: float = 1.0) -> Load:
    """``f = scale (x1^2 - mean) e1``: a non-zero load whose moment matrix vanishes."""
    X1, _ = grid.coords
    return normalize_mean(_field(grid, f1=scale * X1**2))


LOADS = {
    "affine": affine,
    "example_b": example_b,
    "buckling": buckling,
    "twist": twist,
    "singleton": singleton,
    "zero_moment": zero_moment,
}


def make_load(name: str, grid: Grid2D, **params) -> Load:
    try:
        fn = LOADS[name]
    except KeyError:
        raise ConfigError(f"unknown load {name!r}; known: {sorted(LOADS)}") from None
    try:
        return fn(grid, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for load {name!r}: {exc}") from None
