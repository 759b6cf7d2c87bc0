"""Numerical checks of the relative-eigenvalue identities, inequalities and solvability.

Every routine returns a plain dataclass report; none of them raises on a
failed check, they record the margin and a pass flag instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse import diags, identity
from scipy.sparse.linalg import spsolve

from . import operators as ops
from .grid import Field, Grid1D, cell_grad, lp_norm, node_lap
from .minimize import MinimizeOptions, minimize
from .oracles import NewtonOptions, tridiag_lap_eig
from .operators import OperatorSpec, spow
from .quotient import (
    DegenerateQuotientError,
    evaluate_values,
    q4ex1,
    q25,
    q32,
    q34,
    q44,
    q45,
    qpl,
    qr3,
)

__all__ = [
    "ScalingFit",
    "ProbeReport",
    "SolveOutcome",
    "Prop31Report",
    "Ineq33Report",
    "FullyNonlinearReport",
    "ComposedReport",
    "ScanReport",
    "smooth_fields",
    "radius_scaling",
    "verify_prop31_case2",
    "verify_ineq_33",
    "fully_nonlinear_eig",
    "verify_ineq_46",
    "composed_operator_eig",
    "solve_perturbed",
    "solvability_scan",
    "condition_probe",
    "relative_threshold",
]

PROP31_TOL = 3e-2
INEQ33_TOL = 1e-6
INEQ46_SLACK = 1e-10
COERCIVITY_SLACK = 1e-9


def smooth_fields(grid: Grid1D, count: int, seed: int, modes: int = 6) -> np.ndarray:
    """``count`` unit-L2 rows, each a seeded combination of the first ``modes`` sine modes."""
    rng = np.random.default_rng(seed)
    k = np.arange(1, modes + 1)
    basis = np.sin(np.outer(k, grid.nodes) * np.pi / grid.length)
    coef = rng.standard_normal((count, modes)) / k
    rows = coef @ basis
    return rows / lp_norm(rows, 2.0, grid.spacing)[:, None]


# -- scaling law ------------------------------------------------------------

@dataclass
class ScalingFit:
    radii: np.ndarray
    lambdas: np.ndarray
    fitted_exponent: float
    expected_exponent: float
    max_residual: float
    # lambdas carried back to the unit element by the factor r^(p_G - p_F)
    transported: np.ndarray = field(default=None, repr=False)
    lambda_unit: float = math.nan

    @property
    def transport_spread(self) -> float:
        return float(np.max(np.abs(self.transported / self.lambda_unit - 1.0)))


def radius_scaling(F: OperatorSpec, G: OperatorSpec, u0: Field, radii) -> ScalingFit:
    """Fit ``log lambda(r)`` against ``log r`` for ``lambda(r) = <F(r u), r u> / <G(r u), r u>``."""
    if u0.is_zero():
        raise ValueError("radius_scaling needs a nonzero field")
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4 or np.any(radii <= 0) or radii.max() / radii.min() < 10:
        raise ValueError("need at least 4 positive radii spanning a decade")
    h = u0.grid.spacing
    unit = u0.values / u0.l2()
    rows = radii[:, None] * unit
    num = ops.energy(F, rows, h)
    den = ops.energy(G, rows, h)
    if np.any(np.abs(den) <= 1e-300):
        raise DegenerateQuotientError("denominator pairing vanished")
    lambdas = num / den
    x, y = np.log(radii), np.log(lambdas)
    slope, icpt = np.polyfit(x, y, 1)
    expected = G.degree - F.degree
    lam1 = float(ops.energy(F, unit, h) / ops.energy(G, unit, h))
    return ScalingFit(
        radii=radii,
        lambdas=lambdas,
        fitted_exponent=float(slope),
        expected_exponent=float(expected),
        max_residual=float(np.max(np.abs(y - (slope * x + icpt)))),
        transported=lambdas * radii**expected,
        lambda_unit=lam1,
    )


# -- identities and inequalities --------------------------------------------

@dataclass
class Prop31Report:
    p: float
    n: int
    lhs: float
    rhs: float
    rel_err: float
    rhs_continuum: float
    rel_err_continuum: float
    converged: bool

    @property
    def passed(self) -> bool:
        return self.rel_err <= PROP31_TOL


def verify_prop31_case2(p: float, grid: Grid1D, opts: MinimizeOptions | None = None) -> Prop31Report:
    """``inf Q32(p)`` against ``((2/p) sqrt(lambda_1(-Laplacian)))^2``.

    ``rhs`` uses the discrete Laplacian eigenvalue, ``rhs_continuum`` the exact
    ``(pi / L)^2``.
    """
    if not p >= 2:
        raise ValueError(f"need p >= 2, got {p}")
    res = minimize(q32(p), grid, opts)
    lam = tridiag_lap_eig(grid).value
    rhs = ((2.0 / p) * math.sqrt(lam)) ** 2
    rhs_c = ((2.0 / p) * math.pi / grid.length) ** 2
    return Prop31Report(
        p=p, n=grid.n, lhs=res.lambda_est, rhs=rhs,
        rel_err=abs(res.lambda_est - rhs) / rhs,
        rhs_continuum=rhs_c,
        rel_err_continuum=abs(res.lambda_est - rhs_c) / rhs_c,
        converged=res.converged,
    )


@dataclass
class Ineq33Report:
    p0: float
    p1: float
    lambda_p0p1: float
    lambda_plap: float
    margin: float
    # Hoelder gives inf Q34 >= (inf QPL)^(p0/p); reported alongside
    holder_bound: float
    holder_margin: float

    @property
    def passed(self) -> bool:
        return self.margin >= -INEQ33_TOL

    @property
    def holder_passed(self) -> bool:
        return self.holder_margin >= -INEQ33_TOL * self.holder_bound


def verify_ineq_33(p0: float, p1: float, grid: Grid1D, opts: MinimizeOptions | None = None) -> Ineq33Report:
    p = p0 + p1
    lam = minimize(q34(p0, p1), grid, opts).lambda_est
    lam_pl = minimize(qpl(p), grid, opts).lambda_est
    bound = lam_pl ** (p0 / p)
    return Ineq33Report(p0, p1, lam, lam_pl, lam - lam_pl, bound, lam - bound)


@dataclass
class FullyNonlinearReport:
    p: float
    lambda_est: float
    reference: float
    rel_err: float
    c_estimate: float
    c_bound: float
    c_bound_holds: bool
    converged: bool


def fully_nonlinear_eig(p: float, grid: Grid1D, opts: MinimizeOptions | None = None,
                        samples: int = 200, seed: int = 0) -> FullyNonlinearReport:
    """``inf Q44(p)``; at ``p = 2`` compared with ``pi / L``.

    ``c_estimate`` is the largest ``||u'||_p / ||u''||_p`` over smooth probe
    fields and ``c_bound = (p-1) c_estimate``; the comparison with it is
    informational only.
    """
    if not p >= 2:
        raise ValueError(f"need p >= 2, got {p}")
    res = minimize(q44(p), grid, opts)
    ref = math.pi / grid.length if p == 2 else math.nan
    rows = smooth_fields(grid, samples, seed)
    h = grid.spacing
    c = float(np.max(lp_norm(cell_grad(rows, h), p, h) / lp_norm(node_lap(rows, h), p, h)))
    lam = res.lambda_est
    return FullyNonlinearReport(
        p=p, lambda_est=lam, reference=ref,
        rel_err=abs(lam - ref) / ref if p == 2 else math.nan,
        c_estimate=c, c_bound=(p - 1) * c, c_bound_holds=bool(lam <= (p - 1) * c),
        converged=res.converged,
    )


@dataclass
class ProbeReport:
    condition_id: str
    samples_tested: int
    violations: int
    worst_margin: float
    witness: Field | None = field(default=None, repr=False)


def _probe(condition_id: str, grid: Grid1D, margins, slack, rows) -> ProbeReport:
    """Margins are shifted by the rounding allowance ``slack`` before counting."""
    adjusted = np.asarray(margins, dtype=float) + np.asarray(slack, dtype=float)
    bad = adjusted < 0
    worst = int(np.argmin(adjusted))
    witness = Field(grid, rows[worst]) if bad.any() else None
    return ProbeReport(condition_id, int(adjusted.size), int(bad.sum()), float(adjusted[worst]), witness)


def verify_ineq_46(p: float, grid: Grid1D, samples: int = 1000, seed: int = 0) -> ProbeReport:
    """``Q45(p) >= (p-1)^-1 ||u''||_p^p / (||u||_p^(p-2) ||u'||_p^2)`` on smooth fields."""
    if not p >= 2:
        raise ValueError(f"need p >= 2, got {p}")
    h = grid.spacing
    rows = smooth_fields(grid, samples, seed)
    lhs = evaluate_values(q45(p), rows, h)
    rhs = (lp_norm(node_lap(rows, h), p, h) ** p
           / ((p - 1) * lp_norm(rows, p, h) ** (p - 2) * lp_norm(cell_grad(rows, h), p, h) ** 2))
    return _probe(f"ineq46(p={p:g})", grid, lhs - rhs, INEQ46_SLACK, rows)


@dataclass
class ComposedReport:
    p: float
    lambda_f: float
    lower_bound: float
    margin: float
    upper_bound: float
    holder_bound: float
    converged: bool

    @property
    def passed(self) -> bool:
        return self.margin >= -1e-6 * self.lower_bound

    @property
    def upper_passed(self) -> bool:
        return self.lambda_f <= self.upper_bound * (1.0 + 1e-6)


def composed_operator_eig(p: float, grid: Grid1D, opts: MinimizeOptions | None = None) -> ComposedReport:
    """``inf Q4EX1(p)`` against ``lambda_L^(p-1)`` with ``L = -Laplacian``.

    ``upper_bound`` is ``lambda_L^(p-1) ||f(x1)|| / ||g(x1)||`` at the discrete
    eigenvector ``x1``; ``holder_bound`` is ``(inf ||u''||_p / ||u||_p)^(p-1)``,
    which Hoelder's inequality guarantees from below.
    """
    if not p >= 2:
        raise ValueError(f"need p >= 2, got {p}")
    res = minimize(q4ex1(p), grid, opts)
    eig = tridiag_lap_eig(grid)
    lower = eig.value ** (p - 1)
    x1 = eig.vector.values
    h = grid.spacing
    ratio = lp_norm(spow(x1, p - 1), 2.0, h) / lp_norm(spow(x1, p - 1), 2.0, h)
    holder = minimize(qr3(p + 1), grid, opts).lambda_est ** (p - 1)
    return ComposedReport(
        p=p, lambda_f=res.lambda_est, lower_bound=lower, margin=res.lambda_est - lower,
        upper_bound=float(lower * ratio), holder_bound=holder, converged=res.converged,
    )


# -- perturbed equations ----------------------------------------------------

@dataclass
class SolveOutcome:
    lam: float
    rhs_scale: float
    converged: bool
    residual: float
    solution_norm: float
    steps: int = 0
    solution: Field | None = field(default=None, repr=False)


def _residual(F, G, lam, b, v, h, eps):
    return ops.apply_values(F, v, h, eps) - lam * ops.apply_values(G, v, h, eps) - b


def _banded_jacobian(res, v, r0):
    """Tridiagonal forward-difference Jacobian in ``solve_banded`` layout, 3 colors."""
    n = v.size
    steps = math.sqrt(np.finfo(float).eps) * (1.0 + np.abs(v))
    ab = np.zeros((3, n))
    for c in range(3):
        idx = np.arange(c, n, 3)
        e = v.copy()
        e[idx] += steps[idx]
        col = (res(e) - r0)
        for i in idx:
            ab[1, i] = col[i] / steps[i]
            if i > 0:
                ab[2, i - 1] = col[i - 1] / steps[i]
            if i < n - 1:
                ab[0, i + 1] = col[i + 1] / steps[i]
    return ab


def _levenberg_step(ab, r, mu):
    n = r.size
    J = diags([ab[2, :-1], ab[1], ab[0, 1:]], [-1, 0, 1], shape=(n, n), format="csc")
    A = (J.T @ J + mu * identity(n, format="csc")).tocsc()
    return spsolve(A, -(J.T @ r))


def solve_perturbed(F: OperatorSpec, G: OperatorSpec, lam: float, rhs: Field,
                    opts: NewtonOptions | None = None) -> SolveOutcome:
    """Damped Newton for ``F(u) - lam G(u) = rhs`` from ``u = 0``.

    All catalog operators couple only neighbouring nodes, so the Jacobian is
    tridiagonal and is built with three grouped differences.  When the
    Newton direction cannot reduce the residual (e.g. a degenerate Jacobian
    at ``u = 0``) a Levenberg step is tried instead.  If Newton still stalls,
    a fixed-point iteration on ``F`` alone supplies the start for a final
    Newton polish; ``steps`` counts every Newton step taken.
    """
    opts = opts or NewtonOptions()
    grid = rhs.grid
    h = grid.spacing
    b = np.array(rhs.values)
    u, rn, steps = _newton(F, G, lam, b, np.zeros(grid.n), h, opts, opts.max_steps)
    if rn > opts.tol and lam != 0:
        u2, rn2, more = _picard(F, G, lam, b, h, opts)
        steps += more
        if rn2 < rn:
            u, rn = u2, rn2
    return SolveOutcome(lam, float(np.max(np.abs(b))), rn <= opts.tol, rn,
                        float(lp_norm(u, 2.0, h)), steps, Field(grid, u))


def _newton(F, G, lam, b, u, h, opts, budget):
    eps = opts.eps_reg

    def res(v):
        return _residual(F, G, lam, b, v, h, eps)

    def norm(r):
        return float(lp_norm(r, 2.0, h))

    r = res(u)
    rn = norm(r)
    steps = 0
    while rn > opts.tol and steps < budget:
        ab = _banded_jacobian(res, u, r)
        trial = _damped(res, norm, u, rn, _safe_solve(ab, r), opts.min_damping)
        if trial is None:
            mu = 1e-6 * max(1.0, float(np.max(np.abs(ab))) ** 2)
            while trial is None and mu < 1e30:
                trial = _damped(res, norm, u, rn, _levenberg_step(ab, r, mu), 0.5**8)
                mu *= 100.0
        if trial is None:
            break
        u, r, rn = trial
        steps += 1
    return u, rn, steps


def _picard(F, G, lam, b, h, opts, max_outer: int = 500):
    """Fixed point ``u <- F^{-1}(lam G(u) + b)``; each inversion is a monotone Newton solve.

    The map has degree one and contracts in scale while ``lam`` is below the
    threshold, so it converges where Newton on the full residual stalls at
    kinks of a non-variational ``G``.
    """
    u = np.zeros(b.size)
    used = 0
    for _ in range(max_outer):
        y = lam * ops.apply_values(G, u, h, opts.eps_reg) + b
        v, rn, k = _newton(F, G, 0.0, y, u, h, opts, opts.max_steps)
        used += k
        if rn > opts.tol:
            break
        move = lp_norm(v - u, 2.0, h)
        u = v
        if move <= 1e-10 * max(1.0, lp_norm(u, 2.0, h)):
            break
    v, rn, k = _newton(F, G, lam, b, u, h, opts, opts.max_steps)
    return v, rn, used + k


def _safe_solve(ab, r):
    try:
        du = solve_banded((1, 1), ab, -r)
    except (np.linalg.LinAlgError, ValueError):
        return None
    return du if np.all(np.isfinite(du)) else None


def _damped(res, norm, u, rn, du, min_damping):
    if du is None:
        return None
    t = 1.0
    while t >= min_damping:
        trial = u + t * du
        try:
            rt = res(trial)
        except ops.OperatorEvaluationError:
            rt = None
        if rt is not None:
            rtn = norm(rt)
            if rtn < rn:
                return trial, rt, rtn
        t *= 0.5
    return None


def relative_threshold(F: OperatorSpec, G: OperatorSpec, grid: Grid1D,
                       opts: MinimizeOptions | None = None) -> float:
    """``inf <F(u), u> / <G(u), u>``, the spectral threshold of ``F - lam G``."""
    q = q25(F, G)
    if not q.scale_invariant:
        raise ValueError(f"{q.label()} is not scale invariant; its infimum is not a threshold")
    return minimize(q, grid, opts).lambda_est


@dataclass
class ScanReport:
    threshold: float
    outcomes: list[SolveOutcome]

    def unsolved_below(self, fraction: float = 0.9) -> list[float]:
        """Tested lambdas at or below ``fraction * threshold`` that did not converge."""
        return [o.lam for o in self.outcomes if o.lam <= fraction * self.threshold and not o.converged]


def solvability_scan(F: OperatorSpec, G: OperatorSpec, lambdas, rhs: Field,
                     opts: NewtonOptions | None = None, threshold: float | None = None,
                     min_opts: MinimizeOptions | None = None) -> ScanReport:
    lambdas = [float(x) for x in lambdas]
    if len(lambdas) < 5:
        raise ValueError(f"a scan needs at least 5 lambda values, got {len(lambdas)}")
    if threshold is None:
        threshold = relative_threshold(F, G, rhs.grid, min_opts)
    return ScanReport(threshold, [solve_perturbed(F, G, lam, rhs, opts) for lam in lambdas])


def condition_probe(F: OperatorSpec, G: OperatorSpec, lam: float, grid: Grid1D,
                    samples: int = 1000, seed: int = 0, threshold: float | None = None,
                    min_opts: MinimizeOptions | None = None) -> list[ProbeReport]:
    """Coercivity (a) of ``F - lam G`` and monotonicity (b) of ``t -> |t|^(p-2) t`` composed with ``-Laplacian``.

    (a): ``<F(u) - lam G(u), u> - (1 - lam / threshold) <F(u), u> >= 0`` on unit fields.
    (b): ``<f(Lu1) - f(Lu2), Lu1 - Lu2> >= 0`` on pairs, with ``p`` taken from ``F``.
    """
    if samples < 100:
        raise ValueError(f"condition_probe needs at least 100 samples, got {samples}")
    if threshold is None:
        threshold = relative_threshold(F, G, grid, min_opts)
    h = grid.spacing
    rows = smooth_fields(grid, samples, seed)
    eF = ops.energy(F, rows, h)
    eG = ops.energy(G, rows, h)
    margin_a = (eF - lam * eG) - (1.0 - lam / threshold) * eF
    slack_a = COERCIVITY_SLACK * np.maximum(1.0, np.abs(eF))
    rep_a = _probe(f"coercivity(lambda={lam:.17g})", grid, margin_a, slack_a, rows)

    p = F.p if F.p is not None else 2.0
    pairs = smooth_fields(grid, 2 * samples, seed + 1)
    Lu1, Lu2 = -node_lap(pairs[:samples], h), -node_lap(pairs[samples:], h)
    diff_f = spow(Lu1, p - 1) - spow(Lu2, p - 1)
    margin_b = h * np.sum(diff_f * (Lu1 - Lu2), axis=-1)
    slack_b = 1e-12 * h * np.sum(np.abs(diff_f * (Lu1 - Lu2)), axis=-1)
    rep_b = _probe(f"monotonicity(p={p:g})", grid, margin_b, slack_b, pairs[:samples])
    return [rep_a, rep_b]
