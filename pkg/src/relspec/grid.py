"""Uniform 1-D Dirichlet grids, difference operators and quadrature.

Interior node values ``v[0..n-1]`` live at ``x_j = (j + 1) * h``; the two
boundary values are implicitly zero.  Cell quantities (gradients, midpoint
averages) live on the ``n + 1`` cells between consecutive nodes, boundary
cells included.

The array-level helpers act along the last axis so that batches of fields
can be evaluated at once.  With ``D`` the forward difference and ``M`` the
midpoint average, the adjoints satisfy ``M^T = A`` (cell-to-node average)
and ``S = -D^T D``, which is what keeps summation by parts exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

__all__ = [
    "Grid1D",
    "Field",
    "GridMismatchError",
    "forward_diff",
    "second_diff",
    "lp_norm",
    "pairing",
    "sample",
    "first_mode",
]


class GridMismatchError(ValueError):
    """Two fields defined on different grids were combined."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform partition of ``(0, length)`` with ``n`` interior nodes."""

    length: float
    n: int

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"grid length must be positive and finite, got {self.length}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs n >= 3 interior nodes, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.spacing

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n + 1) + 0.5) * self.spacing


@dataclass(frozen=True, eq=False)
class Field:
    """Interior values of a grid function with zero Dirichlet data."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"field needs {self.grid.n} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __mul__(self, scale: float) -> "Field":
        return Field(self.grid, scale * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def l2(self) -> float:
        return lp_norm(self.values, 2.0, self.grid.spacing)


def _same_grid(u: Field, w: Field) -> None:
    if u.grid != w.grid:
        raise GridMismatchError(f"fields live on different grids: {u.grid} vs {w.grid}")


# -- array-level stencils (last axis) ---------------------------------------

def _pad(v: np.ndarray) -> np.ndarray:
    pad = [(0, 0)] * (v.ndim - 1) + [(1, 1)]
    return np.pad(v, pad)


def cell_grad(v: np.ndarray, h: float) -> np.ndarray:
    """Forward differences on the n+1 cells, ``D v``."""
    return np.diff(_pad(v), axis=-1) / h


def cell_grad_t(g: np.ndarray, h: float) -> np.ndarray:
    """Adjoint ``D^T g``: node j receives ``(g_j - g_{j+1}) / h``."""
    return -np.diff(g, axis=-1) / h


def cell_mid(v: np.ndarray) -> np.ndarray:
    """Cell-midpoint averages ``M v``."""
    w = _pad(v)
    return 0.5 * (w[..., 1:] + w[..., :-1])


def cell_mid_t(c: np.ndarray) -> np.ndarray:
    """Adjoint ``M^T c``: averages each node's two neighbouring cells."""
    return 0.5 * (c[..., 1:] + c[..., :-1])


def node_lap(v: np.ndarray, h: float) -> np.ndarray:
    """Second differences at nodes, ``S v = -D^T D v`` (symmetric)."""
    w = _pad(v)
    return (w[..., 2:] - 2.0 * w[..., 1:-1] + w[..., :-2]) / (h * h)


def node_central(v: np.ndarray, h: float) -> np.ndarray:
    """Cell gradients averaged back to nodes, ``C v = M^T D v``."""
    return cell_mid_t(cell_grad(v, h))


def node_central_t(y: np.ndarray, h: float) -> np.ndarray:
    return cell_grad_t(cell_mid(y), h)


# -- public operations ------------------------------------------------------

def forward_diff(u: Field) -> np.ndarray:
    """Discrete gradient on cells, ``(u_i - u_{i-1}) / h`` with zero ends."""
    return cell_grad(u.values, u.grid.spacing)


def second_diff(u: Field) -> np.ndarray:
    return node_lap(u.values, u.grid.spacing)


def lp_norm(vals, p: float, spacing: float) -> float | np.ndarray:
    """Rectangle-rule ``(h * sum |v|^p)^(1/p)`` along the last axis."""
    if not p >= 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    vals = np.asarray(vals, dtype=float)
    total = spacing * np.sum(np.abs(vals) ** p, axis=-1)
    return total ** (1.0 / p)


def pairing(u: Field, w: Field) -> float:
    """Discrete L2 pairing ``h * sum u_i w_i``."""
    _same_grid(u, w)
    return float(u.grid.spacing * np.dot(u.values, w.values))


def sample(grid: Grid1D, func: Callable[[np.ndarray], np.ndarray]) -> Field:
    return Field(grid, func(grid.nodes))


def first_mode(grid: Grid1D) -> Field:
    """``sin(pi x / L)`` sampled at the interior nodes."""
    return sample(grid, lambda x: np.sin(np.pi * x / grid.length))


# -- banded SPD metrics used as preconditioners -----------------------------

class BandedSPD:
    """Cholesky-factored symmetric banded matrix in upper LAPACK storage."""

    def __init__(self, upper_bands: np.ndarray):
        self._factor = cholesky_banded(upper_bands)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self._factor, False), rhs)


def stiffness(grid: Grid1D, order: int, weights: np.ndarray | None = None) -> BandedSPD:
    """Quadrature-weighted metric ``h D^T W D`` (order 1) or ``h S W S`` (order 2).

    ``weights`` live on cells for order 1 and on nodes for order 2; the
    default is all ones.
    """
    n, h = grid.n, grid.spacing
    if order == 1:
        w = np.ones(n + 1) if weights is None else np.asarray(weights, dtype=float)
        ab = np.zeros((2, n))
        ab[0, 1:] = -w[1:-1] / h
        ab[1, :] = (w[:-1] + w[1:]) / h
    elif order == 2:
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        c = 1.0 / h**3
        ab = np.zeros((3, n))
        ab[0, 2:] = c * w[1:-1]
        ab[1, 1:] = -2.0 * c * (w[:-1] + w[1:])
        diag = 4.0 * w
        diag[1:] += w[:-1]
        diag[:-1] += w[1:]
        ab[2, :] = c * diag
    else:
        raise ValueError(f"unsupported metric order {order}")
    return BandedSPD(ab)
