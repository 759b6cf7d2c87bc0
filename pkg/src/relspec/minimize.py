"""Multi-start descent on the unit L2 sphere for 0-homogeneous quotients.

Each start takes Armijo-backtracked steps along a preconditioned gradient and
renormalizes.  The preconditioner is a Sobolev metric (``h D^T W D`` for
first-order quotients, ``h S W S`` for second-order ones) whose weights
follow the curvature ``|k|^(a-2)`` of the numerator kernel ``|k|^a``; for
quadratic kernels it is the plain ``h D^T D`` or ``h S S``.  The quotients are
scale invariant, so renormalizing keeps the value and every accepted step
is a decrease.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Field, Grid1D, cell_grad, cell_mid, first_mode, lp_norm, node_lap, stiffness
from .quotient import (
    DegenerateQuotientError,
    QuotientSpec,
    evaluate_values,
    value_and_gradient,
)

__all__ = [
    "MinimizeOptions",
    "MinimizationResult",
    "StartTrace",
    "minimize",
    "refine_study",
    "start_fields",
]


@dataclass(frozen=True)
class MinimizeOptions:
    max_iter: int = 5000
    tol_rel: float = 1e-10
    tol_grad: float = 1e-8
    starts: int = 8
    seed: int = 0
    step_init: float = 1.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    eps_reg: float = 1e-12
    window: int = 5
    perturbation: float = 0.3
    start_amplitude: float = 1.0
    workers: int = 1
    metric_floor: float = 1e-2

    def __post_init__(self):
        for name in ("tol_rel", "tol_grad", "step_init", "armijo_c", "eps_reg", "start_amplitude", "metric_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.starts < 1:
            raise ValueError(f"starts must be >= 1, got {self.starts}")
        if self.max_iter < 1 or self.window < 1 or self.workers < 1:
            raise ValueError("max_iter, window and workers must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError(f"backtrack must lie in (0, 1), got {self.backtrack}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class StartTrace:
    lambda_est: float
    values: np.ndarray
    iterations: int
    converged: bool
    grad_norm: float
    history: np.ndarray = field(repr=False)
    error: str | None = None


@dataclass
class MinimizationResult:
    lambda_est: float
    minimizer: Field
    iterations: int
    converged: bool
    per_start_lambdas: np.ndarray
    grad_norm_final: float
    best_start: int = 0
    traces: list[StartTrace] = field(default_factory=list, repr=False)


# polishing steps may raise the value by this relative amount (evaluation noise
# of second-difference functionals reaches ~1e-14)
ROUNDING_REL = 1e-13


def start_fields(grid: Grid1D, opts: MinimizeOptions) -> list[np.ndarray]:
    """First Dirichlet mode, then seeded uniform perturbations of it."""
    base = first_mode(grid).values
    out = [opts.start_amplitude * base]
    for k in range(1, opts.starts):
        rng = np.random.default_rng([opts.seed, k])
        noise = rng.uniform(-1.0, 1.0, size=grid.n)
        out.append(opts.start_amplitude * (base + opts.perturbation * np.max(np.abs(base)) * noise))
    return out


def _tangential_norm(g: np.ndarray, v: np.ndarray) -> float:
    return float(np.linalg.norm(g - (g @ v) / (v @ v) * v))


def _kernel(q: QuotientSpec) -> tuple[int, str, float]:
    """Metric order, the field the numerator curvature depends on, and its power."""
    t = q.tag
    if t in ("q33a", "q34", "qpl"):
        return 1, "grad", q.p
    if t == "q32":
        # |(|u|^(p/2-1) u)'|^2 has curvature ~ |u|^(p-2) |u'|^0
        return 1, "mid", q.p
    if t in ("q44", "q45", "q4ex1"):
        return 2, "lap", q.p
    if t == "qr3":
        return 2, "lap", q.p - 1
    if t == "q25" and q.F.kind == "plap":
        return 1, "grad", q.F.p
    if t == "q25" and q.F.kind == "bipower":
        return 2, "lap", q.F.p
    return q.order, "grad", 2.0


class _Metric:
    """Descent metric, reweighted by the numerator curvature when the kernel is not quadratic."""

    def __init__(self, q: QuotientSpec, grid: Grid1D, floor: float):
        self.grid = grid
        self.order, self.source, self.power = _kernel(q)
        self.floor = floor
        self.fixed = stiffness(grid, self.order) if self.power <= 2 else None

    def at(self, v: np.ndarray):
        if self.fixed is not None:
            return self.fixed
        h = self.grid.spacing
        if self.source == "grad":
            k = cell_grad(v, h)
        elif self.source == "mid":
            k = cell_mid(v)
        else:
            k = node_lap(v, h)
        w = np.abs(k) ** (self.power - 2)
        w = w / np.mean(w) + self.floor
        return stiffness(self.grid, self.order, w)


def _unit(v: np.ndarray, h: float) -> np.ndarray:
    return v / lp_norm(v, 2.0, h)


def _descend(q: QuotientSpec, grid: Grid1D, v0: np.ndarray, opts: MinimizeOptions, metric: _Metric) -> StartTrace:
    h, eps = grid.spacing, opts.eps_reg
    v = _unit(v0, h)
    try:
        val, g = value_and_gradient(q, v, h, eps)
    except DegenerateQuotientError as exc:
        return StartTrace(np.inf, v, 0, False, np.inf, np.array([]), error=str(exc))
    history = [val]
    alpha = alpha_ref = opts.step_init
    gnorm = _tangential_norm(g, v)
    converged = False
    it = 0
    while it < opts.max_iter:
        if gnorm < opts.tol_grad:
            recent = history[-1 - opts.window:]
            if recent[0] - recent[-1] < opts.tol_rel * abs(recent[-1]):
                converged = True
                break
        d = metric.at(v).solve(g)
        slope = float(g @ d)
        if not slope > 0:
            break
        step = _armijo(q, v, val, d, slope, alpha, h, eps, opts)
        limit = val
        if step is None:
            # values are flat to rounding: polish the gradient instead
            step = _flat_step(q, v, val, d, alpha_ref, gnorm, h, eps, opts)
            limit = val + ROUNDING_REL * abs(val)
            if step is None:
                # no resolvable decrease remains, so the window test is met
                converged = gnorm < opts.tol_grad
                break
        alpha, w = step
        if limit == val:
            alpha_ref = max(alpha_ref, alpha)
        try:
            new_val, new_g = value_and_gradient(q, w, h, eps)
        except DegenerateQuotientError:
            break
        if not new_val <= limit:
            break
        it += 1
        v, val, g = w, new_val, new_g
        history.append(val)
        gnorm = _tangential_norm(g, v)
        alpha /= opts.backtrack
    return StartTrace(float(val), v, it, converged, gnorm, np.array(history))


def _armijo(q, v, val, d, slope, alpha, h, eps, opts):
    """Backtrack to an Armijo point on the sphere; trial points are renormalized."""
    floor = 1e-16 * np.max(np.abs(v))
    while alpha * np.max(np.abs(d)) > floor:
        w = _unit(v - alpha * d, h)
        tval = evaluate_values(q, w, h, eps)
        if np.isfinite(tval) and tval < val and tval <= val - opts.armijo_c * alpha * slope:
            # one quadratic-interpolation refinement; a fixed step can reflect stiff modes
            curv = tval - val + alpha * slope
            if curv > 0:
                a2 = slope * alpha**2 / (2.0 * curv)
                w2 = _unit(v - a2 * d, h)
                tval2 = evaluate_values(q, w2, h, eps)
                if np.isfinite(tval2) and tval2 < tval:
                    return a2, w2
            return alpha, w
        alpha *= opts.backtrack
    return None


def _flat_step(q, v, val, d, alpha, gnorm, h, eps, opts, spread: int = 12):
    """Among steps ``alpha * 2^k`` keep the one with the smallest gradient.

    Used once values are flat to rounding, so a candidate may sit up to
    ``ROUNDING_REL`` (relative) above the current value.
    """
    best = None
    for k in range(-spread, spread // 2 + 1):
        a = alpha * 2.0**k
        w = _unit(v - a * d, h)
        try:
            wval, wg = value_and_gradient(q, w, h, eps)
        except DegenerateQuotientError:
            continue
        gn = _tangential_norm(wg, w)
        if wval <= val + ROUNDING_REL * abs(val) and gn < 0.9 * gnorm and (best is None or gn < best[0]):
            best = (gn, a, w)
    return None if best is None else best[1:]


def minimize(q: QuotientSpec, grid: Grid1D, opts: MinimizeOptions | None = None) -> MinimizationResult:
    """Estimate ``inf q`` over nonzero fields on ``grid`` (the first eigenvalue)."""
    opts = opts or MinimizeOptions()
    metric = _Metric(q, grid, opts.metric_floor)
    starts = start_fields(grid, opts)

    def run(v0):
        return _descend(q, grid, v0, opts, metric)

    if opts.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            traces = list(pool.map(run, starts))
    else:
        traces = [run(v0) for v0 in starts]

    lambdas = np.array([t.lambda_est for t in traces])
    if not np.any(np.isfinite(lambdas)):
        raise DegenerateQuotientError(f"{q.label()}: every start was degenerate")
    best = int(np.argmin(lambdas))  # first index wins ties
    tr = traces[best]
    vals = tr.values / lp_norm(tr.values, 2.0, grid.spacing)
    if np.mean(vals) < 0:
        vals = -vals
    return MinimizationResult(
        lambda_est=float(lambdas[best]),
        minimizer=Field(grid, vals),
        iterations=tr.iterations,
        converged=tr.converged,
        per_start_lambdas=lambdas,
        grad_norm_final=tr.grad_norm,
        best_start=best,
        traces=traces,
    )


def refine_study(q: QuotientSpec, grids, opts: MinimizeOptions | None = None) -> list[tuple[int, float]]:
    """``(n, lambda_est)`` for a sequence of increasingly fine grids."""
    grids = list(grids)
    if len(grids) < 3:
        raise ValueError("refine_study needs at least 3 grids")
    ns = [g.n for g in grids]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError(f"grid sizes must increase strictly, got {ns}")
    return [(g.n, minimize(q, g, opts).lambda_est) for g in grids]


def with_options(opts: MinimizeOptions | None, **changes) -> MinimizeOptions:
    return replace(opts or MinimizeOptions(), **changes)
