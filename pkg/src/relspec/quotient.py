"""Generalized Rayleigh quotients and their analytic gradients.

Every quotient has the form ``prefactor * (N(u) / D(u)) ** e`` where ``N``
and ``D`` are quadrature sums of local kernels.  Tags (case-insensitive in
configs):

=======  ==========================================================
q25      ``<F(u), u> / <G(u), u>`` for catalog operators F, G
q33a     ``||u'||_p^p / int |u|^p0 |u'|^p1``         (p = p0 + p1)
q34      ``q33a ** (1/p)``
qpl      ``||u'||_p / ||u||_p``
q32      ``(4/p^2) ||v'||_2^2 / ||v||_2^2``, ``v = |u|^((p-2)/2) u``
q44      ``(p-1) ||u''||_p / ||u'||_p``
q45      ``(p-1)^-1 ||u''||_p^p / || |u|^((p-2)/2) |u'| ||_2^2``
qr3      ``||u''||_{p-1} / ||u||_{p-1}``
q4ex1    ``<f(-u''), -u''> / <g(u), -u''>``, ``f = g = |t|^(p-2) t``
=======  ==========================================================

Products of ``|u|`` and ``|u'|`` are collocated on cells (``u`` averaged
to the midpoint); pure nodal or pure gradient terms use their own stencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import operators as ops
from .grid import (
    Field,
    cell_grad,
    cell_grad_t,
    cell_mid,
    cell_mid_t,
    node_lap,
)
from .operators import EPS_REG, OperatorSpec, absp, dabsp, dspow, spow

__all__ = [
    "QuotientSpec",
    "GradCheckReport",
    "DegenerateQuotientError",
    "TAGS",
    "evaluate",
    "evaluate_values",
    "gradient",
    "gradient_values",
    "fd_check",
    "q25",
    "q33a",
    "q34",
    "qpl",
    "q32",
    "q44",
    "q45",
    "qr3",
    "q4ex1",
]

DEGENERATE_FLOOR = 1e-300


class DegenerateQuotientError(ValueError):
    """Zero field or a denominator too small to divide by."""


# tag -> (exponent keys, derivative order of the numerator)
TAGS = {
    "q25": ((), None),
    "q33a": (("p0", "p1"), 1),
    "q34": (("p0", "p1"), 1),
    "qpl": (("p",), 1),
    "q32": (("p",), 1),
    "q44": (("p",), 2),
    "q45": (("p",), 2),
    "qr3": (("p",), 2),
    "q4ex1": (("p",), 2),
}


@dataclass(frozen=True)
class QuotientSpec:
    tag: str
    params: Mapping[str, float] = field(default_factory=dict)
    F: OperatorSpec | None = None
    G: OperatorSpec | None = None
    prefactor: float = field(init=False)
    exponent: float = field(init=False)

    def __post_init__(self):
        tag = self.tag.lower()
        if tag not in TAGS:
            raise ValueError(f"unknown quotient tag {self.tag!r}; expected one of {sorted(TAGS)}")
        object.__setattr__(self, "tag", tag)
        keys, _ = TAGS[tag]
        prm = {k: float(v) for k, v in dict(self.params).items()}
        extra = set(prm) - set(keys)
        if extra:
            raise ValueError(f"quotient {tag} takes no exponent {sorted(extra)[0]!r}")
        missing = [k for k in keys if k not in prm]
        if missing:
            raise ValueError(f"quotient {tag} needs exponent {missing[0]!r}")
        object.__setattr__(self, "params", prm)
        if tag == "q25":
            if self.F is None or self.G is None:
                raise ValueError("q25 needs operators F and G")
        elif self.F is not None or self.G is not None:
            raise ValueError(f"quotient {tag} takes no operators")

        if tag in ("q33a", "q34"):
            p0, p1 = prm["p0"], prm["p1"]
            if p0 < 1 or p1 < 0 or p0 + p1 < 2:
                raise ValueError(f"{tag} needs p0 >= 1, p1 >= 0 and p0+p1=p >= 2 (got {p0}, {p1})")
        elif "p" in prm and prm["p"] < 2:
            raise ValueError(f"{tag} needs p >= 2, got p={prm['p']}")

        p = self.p
        pref, expo = 1.0, 1.0
        if tag in ("q34", "qpl"):
            expo = 1.0 / p
        elif tag == "q32":
            pref = 4.0 / p**2
        elif tag == "q44":
            pref, expo = p - 1.0, 1.0 / p
        elif tag == "q45":
            pref = 1.0 / (p - 1.0)
        elif tag == "qr3":
            expo = 1.0 / (p - 1.0)
        object.__setattr__(self, "prefactor", pref)
        object.__setattr__(self, "exponent", expo)

    @property
    def p(self) -> float | None:
        if "p" in self.params:
            return self.params["p"]
        if "p0" in self.params:
            return self.params["p0"] + self.params["p1"]
        return None

    @property
    def order(self) -> int:
        """Derivative order of the numerator; picks the descent metric."""
        order = TAGS[self.tag][1]
        if order is None:
            order = max(self.F.order, self.G.order, 1)
        return order

    @property
    def scale_invariant(self) -> bool:
        if self.tag == "q25":
            return self.F.degree == self.G.degree
        return True

    def label(self) -> str:
        if self.tag == "q25":
            return f"q25({self.F.label()},{self.G.label()})"
        args = ",".join(f"{k}={ops._fmt(v)}" for k, v in self.params.items())
        return f"{self.tag}({args})"

    @classmethod
    def from_mapping(cls, tag: str, data: Mapping) -> "QuotientSpec":
        data = dict(data)
        F = data.pop("F", None)
        G = data.pop("G", None)
        if isinstance(F, Mapping):
            F = OperatorSpec.from_mapping(F)
        if isinstance(G, Mapping):
            G = OperatorSpec.from_mapping(G)
        tag = tag.lower()
        if tag in ("q33a", "q34") and "p" in data:
            p = float(data.pop("p"))
            p0, p1 = data.get("p0"), data.get("p1")
            if p0 is None or p1 is None or not math.isclose(p0 + p1, p, rel_tol=0, abs_tol=1e-12):
                raise ValueError(f"constraint violation: p0+p1=p (got p0={p0}, p1={p1}, p={p})")
        return cls(tag, data, F=F, G=G)


def q25(F: OperatorSpec, G: OperatorSpec) -> QuotientSpec:
    return QuotientSpec("q25", {}, F=F, G=G)


def q33a(p0: float, p1: float) -> QuotientSpec:
    return QuotientSpec("q33a", {"p0": p0, "p1": p1})


def q34(p0: float, p1: float) -> QuotientSpec:
    return QuotientSpec("q34", {"p0": p0, "p1": p1})


def qpl(p: float) -> QuotientSpec:
    return QuotientSpec("qpl", {"p": p})


def q32(p: float) -> QuotientSpec:
    return QuotientSpec("q32", {"p": p})


def q44(p: float) -> QuotientSpec:
    return QuotientSpec("q44", {"p": p})


def q45(p: float) -> QuotientSpec:
    return QuotientSpec("q45", {"p": p})


def qr3(p: float) -> QuotientSpec:
    return QuotientSpec("qr3", {"p": p})


def q4ex1(p: float) -> QuotientSpec:
    return QuotientSpec("q4ex1", {"p": p})


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_index: int


# -- numerator / denominator kernels ---------------------------------------

def _sum(x, h):
    return h * np.sum(x, axis=-1)


def _grad_power(v, h, a, eps, want):
    d = cell_grad(v, h)
    val = _sum(absp(d, a), h)
    return val, (cell_grad_t(h * dabsp(d, a, eps), h) if want else None)


def _node_power(v, h, a, eps, want):
    val = _sum(absp(v, a), h)
    return val, (h * dabsp(v, a, eps) if want else None)


def _lap_power(v, h, a, eps, want):
    s = node_lap(v, h)
    val = _sum(absp(s, a), h)
    return val, (node_lap(h * dabsp(s, a, eps), h) if want else None)


def _mixed(v, h, a0, a1, eps, want):
    """``h * sum_cells |Mv|^a0 |Dv|^a1``."""
    m, d = cell_mid(v), cell_grad(v, h)
    wm, wd = absp(m, a0), absp(d, a1)
    val = _sum(wm * wd, h)
    if not want:
        return val, None
    g = cell_mid_t(h * dabsp(m, a0, eps) * wd) + cell_grad_t(h * wm * dabsp(d, a1, eps), h)
    return val, g


def _parts(q: QuotientSpec, v: np.ndarray, h: float, eps: float, want: bool):
    """Return ``(N, D, dN, dD)``; gradients are None unless ``want``."""
    t, prm = q.tag, q.params
    if t == "q25":
        N = ops.energy(q.F, v, h, eps)
        D = ops.energy(q.G, v, h, eps)
        if not want:
            return N, D, None, None
        return N, D, ops.energy_grad(q.F, v, h, eps), ops.energy_grad(q.G, v, h, eps)
    if t in ("q33a", "q34"):
        p0, p1 = prm["p0"], prm["p1"]
        N, dN = _grad_power(v, h, p0 + p1, eps, want)
        if p1 == 0:
            D, dD = _node_power(v, h, p0, eps, want)
        else:
            D, dD = _mixed(v, h, p0, p1, eps, want)
        return N, D, dN, dD
    p = prm["p"]
    if t == "qpl":
        N, dN = _grad_power(v, h, p, eps, want)
        D, dD = _node_power(v, h, p, eps, want)
        return N, D, dN, dD
    if t == "q32":
        w = spow(v, p / 2)
        N, gN = _grad_power(w, h, 2.0, eps, want)
        D, gD = _node_power(w, h, 2.0, eps, want)
        if not want:
            return N, D, None, None
        jac = dspow(v, p / 2, eps)
        return N, D, jac * gN, jac * gD
    if t == "q44":
        N, dN = _lap_power(v, h, p, eps, want)
        D, dD = _grad_power(v, h, p, eps, want)
        return N, D, dN, dD
    if t == "q45":
        N, dN = _lap_power(v, h, p, eps, want)
        D, dD = _mixed(v, h, p - 2, 2.0, eps, want)
        return N, D, dN, dD
    if t == "qr3":
        N, dN = _lap_power(v, h, p - 1, eps, want)
        D, dD = _node_power(v, h, p - 1, eps, want)
        return N, D, dN, dD
    # q4ex1
    N, dN = _lap_power(v, h, p, eps, want)
    s = node_lap(v, h)
    g = spow(v, p - 1)
    D = _sum(-g * s, h)
    if not want:
        return N, D, None, None
    dD = h * (-dspow(v, p - 1, eps) * s) - node_lap(h * g, h)
    return N, D, dN, dD


def _check_nonzero(v: np.ndarray) -> None:
    if not np.any(v):
        raise DegenerateQuotientError("quotient is undefined at the zero field")


def evaluate_values(q: QuotientSpec, v: np.ndarray, h: float, eps: float = EPS_REG) -> np.ndarray:
    """Vectorized evaluation along the last axis; degenerate rows give NaN."""
    v = np.asarray(v, dtype=float)
    with np.errstate(all="ignore"):
        try:
            N, D, _, _ = _parts(q, v, h, eps, want=False)
        except ops.OperatorEvaluationError:
            if v.ndim == 1:
                return np.float64(np.nan)
            return np.array([evaluate_values(q, row, h, eps) for row in v])
        ok = D > DEGENERATE_FLOOR
        ratio = np.where(ok, N / np.where(ok, D, 1.0), np.nan)
        out = q.prefactor * ratio**q.exponent
    return out


def evaluate(q: QuotientSpec, u: Field, eps: float = EPS_REG) -> float:
    _check_nonzero(u.values)
    N, D, _, _ = _parts(q, u.values, u.grid.spacing, eps, want=False)
    if not D > DEGENERATE_FLOOR:
        raise DegenerateQuotientError(f"{q.label()}: denominator {D!r} is degenerate")
    val = q.prefactor * (N / D) ** q.exponent
    if not math.isfinite(val):
        raise DegenerateQuotientError(f"{q.label()}: non-finite value")
    return float(val)


def value_and_gradient(q: QuotientSpec, v: np.ndarray, h: float, eps: float = EPS_REG):
    """Quotient value and its Euclidean gradient with respect to ``v``."""
    _check_nonzero(v)
    try:
        N, D, dN, dD = _parts(q, v, h, eps, want=True)
    except ops.OperatorEvaluationError as exc:
        raise DegenerateQuotientError(str(exc)) from exc
    if not D > DEGENERATE_FLOOR:
        raise DegenerateQuotientError(f"{q.label()}: denominator {D!r} is degenerate")
    val = q.prefactor * (N / D) ** q.exponent
    # d/dv [c (N/D)^e] = e * val * (dN/N - dD/D)
    if N > 0:
        grad = q.exponent * val * (dN / N - dD / D)
    else:
        grad = q.prefactor * dN / D if q.exponent == 1 else np.zeros_like(v)
    return float(val), grad


def gradient_values(q: QuotientSpec, v: np.ndarray, h: float, eps: float = EPS_REG) -> np.ndarray:
    return value_and_gradient(q, v, h, eps)[1]


def gradient(q: QuotientSpec, u: Field, eps: float = EPS_REG) -> Field:
    return Field(u.grid, gradient_values(q, u.values, u.grid.spacing, eps))


def fd_check(q: QuotientSpec, u: Field, eps: float = EPS_REG) -> GradCheckReport:
    """Compare the analytic gradient with per-coordinate central differences."""
    v = np.array(u.values, dtype=float)
    h = u.grid.spacing
    analytic = gradient_values(q, v, h, eps)
    steps = 1e-6 * (1.0 + np.abs(v))
    # all +/- perturbations at once: row i perturbs coordinate i
    plus = v + np.diag(steps)
    minus = v - np.diag(steps)
    fd = (evaluate_values(q, plus, h, eps) - evaluate_values(q, minus, h, eps)) / (2.0 * steps)
    mask = np.abs(analytic) > 1e-10
    if not np.any(mask):
        return GradCheckReport(0.0, -1)
    rel = np.zeros_like(v)
    rel[mask] = np.abs(fd[mask] - analytic[mask]) / np.abs(analytic[mask])
    worst = int(np.argmax(rel))
    return GradCheckReport(float(rel[worst]), worst)
