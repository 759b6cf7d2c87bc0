"""Independent baselines: tridiagonal eigensolver, closed forms, brute scan, dense Newton.

Nothing here calls the descent minimizer or the banded Newton solver, so
each routine can serve as a reference for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import operators as ops
from .grid import Field, Grid1D, first_mode, lp_norm
from .operators import OperatorSpec
from .quotient import QuotientSpec, evaluate_values

__all__ = [
    "EigenPair",
    "NewtonOptions",
    "OracleConvergenceError",
    "NewtonDivergenceError",
    "tridiag_lap_eig",
    "discrete_lap_eigenvalue",
    "pi_p",
    "plap_first_eigenvalue",
    "brute_min",
    "dense_newton",
]


class OracleConvergenceError(RuntimeError):
    """An iterative oracle hit its iteration cap."""


class NewtonDivergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterate: np.ndarray):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


@dataclass
class EigenPair:
    value: float
    vector: Field
    residual: float
    iterations: int


def discrete_lap_eigenvalue(grid: Grid1D) -> float:
    """Closed form ``(2/h^2)(1 - cos(pi h / L))`` of the smallest eigenvalue."""
    h = grid.spacing
    # 1 - cos(x) = 2 sin^2(x/2) avoids cancellation
    return 4.0 / h**2 * math.sin(math.pi * h / (2.0 * grid.length)) ** 2


def tridiag_lap_eig(grid: Grid1D, tol: float = 1e-10, max_iter: int = 10_000) -> EigenPair:
    """Smallest eigenpair of ``-S`` by unshifted inverse power iteration."""
    n, h = grid.n, grid.spacing
    ab = np.empty((3, n))
    ab[0] = ab[2] = -1.0 / h**2
    ab[1] = 2.0 / h**2

    def matvec(x):
        y = 2.0 * x
        y[1:] -= x[:-1]
        y[:-1] -= x[1:]
        return y / h**2

    # seeded, deliberately not the known eigenvector
    x = np.random.default_rng(0).uniform(0.5, 1.5, n)
    x /= lp_norm(x, 2.0, h)
    lam, res = np.nan, np.inf
    for it in range(1, max_iter + 1):
        y = solve_banded((1, 1), ab, x)
        x = y / lp_norm(y, 2.0, h)
        ax = matvec(x)
        lam = h * float(x @ ax)
        res = lp_norm(ax - lam * x, 2.0, h)
        if res <= tol:
            break
    else:
        raise OracleConvergenceError(f"inverse iteration did not converge in {max_iter} steps (residual {res:.3g})")
    if x.sum() < 0:
        x = -x
    return EigenPair(lam, Field(grid, x), float(res), it)


def pi_p(p: float) -> float:
    """``2 pi (p-1)^(1/p) / (p sin(pi/p))``; equals ``pi`` at ``p = 2``."""
    if not p >= 2:
        raise ValueError(f"pi_p needs p >= 2, got {p}")
    if p == 2:
        return math.pi
    return 2.0 * math.pi * (p - 1.0) ** (1.0 / p) / (p * math.sin(math.pi / p))


def plap_first_eigenvalue(p: float, length: float = 1.0) -> float:
    """``min ||u'||_p^p / ||u||_p^p`` on ``(0, length)``, i.e. ``(pi_p / length)^p``.

    With the ``(p-1)^(1/p)`` factor folded into :func:`pi_p` no further
    ``(p-1)`` multiplier appears.
    """
    return (pi_p(p) / length) ** p


def brute_min(q: QuotientSpec, grid: Grid1D, samples: int, seed: int, chunk: int = 20_000) -> float:
    """Smallest quotient value over random directions, +/- basis vectors and the first mode."""
    if grid.n > 12:
        raise ValueError(f"brute_min is limited to n <= 12, got n={grid.n}")
    n, h = grid.n, grid.spacing
    eye = np.eye(n)
    best = float(np.nanmin(evaluate_values(q, np.vstack([eye, -eye, first_mode(grid).values]), h)))
    rng = np.random.default_rng(seed)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        batch = rng.standard_normal((m, n))
        batch /= np.linalg.norm(batch, axis=1, keepdims=True)
        vals = evaluate_values(q, batch, h)
        if np.any(np.isfinite(vals)):
            best = min(best, float(np.nanmin(vals)))
        done += m
    return best


@dataclass(frozen=True)
class NewtonOptions:
    max_steps: int = 100
    tol: float = 1e-8
    min_damping: float = 2.0**-40
    eps_reg: float = 1e-12

    def __post_init__(self):
        if self.max_steps < 1 or not self.tol > 0 or not 0 < self.min_damping < 1:
            raise ValueError("need max_steps >= 1, tol > 0 and 0 < min_damping < 1")


def _residual(F: OperatorSpec, G: OperatorSpec, lam: float, rhs: np.ndarray, v: np.ndarray, h: float, eps: float):
    return ops.apply_values(F, v, h, eps) - lam * ops.apply_values(G, v, h, eps) - rhs


def dense_newton(pair: tuple[OperatorSpec, OperatorSpec], lam: float, rhs: Field,
                 opts: NewtonOptions | None = None) -> Field:
    """Damped Newton for ``F(u) - lam G(u) = rhs`` with a dense difference Jacobian."""
    opts = opts or NewtonOptions()
    F, G = pair
    grid = rhs.grid
    if grid.n > 200:
        raise ValueError(f"dense_newton is limited to n <= 200, got n={grid.n}")
    n, h, eps = grid.n, grid.spacing, opts.eps_reg
    b = np.array(rhs.values)

    def res(v):
        return _residual(F, G, lam, b, v, h, eps)

    u = np.zeros(n)
    r = res(u)
    rn = lp_norm(r, 2.0, h)
    for _ in range(opts.max_steps):
        if rn <= opts.tol:
            return Field(grid, u)
        steps = 1e-7 * (1.0 + np.abs(u))
        J = np.empty((n, n))
        for i in range(n):
            e = u.copy()
            e[i] += steps[i]
            J[:, i] = (res(e) - r) / steps[i]
        try:
            du = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            du = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while t >= opts.min_damping:
            trial = u + t * du
            try:
                rt = res(trial)
            except ops.OperatorEvaluationError:
                rt = None
            if rt is not None and lp_norm(rt, 2.0, h) < rn:
                break
            t *= 0.5
        else:
            raise NewtonDivergenceError(f"line search failed at residual {rn:.3g}", rn, u)
        u, r = trial, rt
        rn = lp_norm(r, 2.0, h)
    if rn <= opts.tol:
        return Field(grid, u)
    raise NewtonDivergenceError(f"no convergence in {opts.max_steps} Newton steps (residual {rn:.3g})", rn, u)
