"""Catalog of the nonlinear operators used as F and G.

Every kind is positively homogeneous and odd in ``u``.  Divergence-form
kinds compute a flux on cells and take the discrete divergence back to the
nodes, so ``<Op(u), u>`` equals the matching cell energy exactly.  Pointwise
kinds use the central gradient (cell gradients averaged to nodes).

Config names: ``plap``, ``wdiff``, ``pgw``, ``power``, ``gradpower``,
``bipower`` with exponent keys ``p``, ``p0``, ``p1``, ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .grid import (
    Field,
    cell_grad,
    cell_grad_t,
    cell_mid,
    cell_mid_t,
    node_central,
    node_central_t,
    node_lap,
)

__all__ = [
    "OperatorSpec",
    "OperatorEvaluationError",
    "KINDS",
    "plap",
    "wdiff",
    "pgw",
    "power",
    "gradpower",
    "bipower",
    "apply",
    "homogeneity_degree",
    "empirical_degree",
    "energy",
    "energy_grad",
]

EPS_REG = 1e-12


class OperatorEvaluationError(ArithmeticError):
    """The discrete action overflowed or produced a non-finite value."""


# -- scalar kernels ---------------------------------------------------------

def absp(t, a: float):
    """``|t|^a`` for ``a >= 0`` (``0^0 = 1``)."""
    return np.abs(t) ** a


def spow(t, a: float):
    """Odd power ``sign(t) |t|^a``."""
    return np.sign(t) * np.abs(t) ** a


def dabsp(t, a: float, eps: float = EPS_REG):
    """Derivative of ``|t|^a``; regularized by ``|t|_eps`` when ``a < 2``."""
    if a == 0:
        return np.zeros_like(t, dtype=float)
    if a >= 2:
        return a * np.abs(t) ** (a - 2) * t
    return a * t * (t * t + eps * eps) ** ((a - 2) / 2)


def dspow(t, a: float, eps: float = EPS_REG):
    """Derivative of ``sign(t)|t|^a``; regularized when ``a < 1``."""
    if a >= 1:
        return a * np.abs(t) ** (a - 1)
    return a * (t * t + eps * eps) ** ((a - 1) / 2)


def weight_pow(t, a: float, eps: float = EPS_REG):
    """``|t|^a``, switching to ``|t|_eps^a`` when the exponent is negative."""
    if a >= 0:
        return np.abs(t) ** a
    return (t * t + eps * eps) ** (a / 2)


# -- catalog ----------------------------------------------------------------

KINDS = {
    "plap": ("p",),
    "wdiff": ("p",),
    "pgw": ("p0", "p1"),
    "power": ("p0",),
    "gradpower": ("mu",),
    "bipower": ("p",),
}

_DEGREE = {
    "plap": lambda s: s.p - 1,
    "wdiff": lambda s: s.p - 1,
    "pgw": lambda s: s.p0 - 1 + s.p1,
    "power": lambda s: s.p0 - 1,
    "gradpower": lambda s: s.mu - 1,
    "bipower": lambda s: s.p - 1,
}

# highest derivative order appearing in the operator
_ORDER = {"plap": 1, "wdiff": 1, "pgw": 1, "power": 0, "gradpower": 1, "bipower": 2}


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    p: float | None = None
    p0: float | None = None
    p1: float | None = None
    mu: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {sorted(KINDS)}")
        needed = KINDS[self.kind]
        for key in ("p", "p0", "p1", "mu"):
            val = getattr(self, key)
            if key in needed:
                if val is None:
                    raise ValueError(f"operator {self.kind!r} needs exponent {key!r}")
                if not math.isfinite(val):
                    raise ValueError(f"exponent {key}={val} is not finite")
                object.__setattr__(self, key, float(val))
            elif val is not None:
                raise ValueError(f"operator {self.kind!r} takes no exponent {key!r}")
        if self.kind in ("plap", "wdiff", "bipower") and self.p < 2:
            raise ValueError(f"{self.kind} needs p >= 2, got p={self.p}")
        if self.kind == "pgw":
            if self.p0 < 1:
                raise ValueError(f"pgw needs p0 >= 1, got p0={self.p0}")
            if self.p1 < 0:
                raise ValueError(f"pgw needs p1 >= 0, got p1={self.p1}")
            if self.p0 + self.p1 < 2:
                raise ValueError(f"pgw needs p0+p1=p >= 2, got p0+p1={self.p0 + self.p1}")
        if self.kind == "power" and self.p0 < 1:
            raise ValueError(f"power needs p0 >= 1, got p0={self.p0}")
        if self.kind == "gradpower" and self.mu < 1:
            raise ValueError(f"gradpower needs mu >= 1, got mu={self.mu}")

    @property
    def degree(self) -> float:
        return _DEGREE[self.kind](self)

    @property
    def order(self) -> int:
        return _ORDER[self.kind]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in KINDS[self.kind]}

    def label(self) -> str:
        args = ",".join(f"{k}={_fmt(v)}" for k, v in self.params().items())
        return f"{self.kind}({args})"

    @classmethod
    def from_mapping(cls, data: Mapping) -> "OperatorSpec":
        data = dict(data)
        kind = data.pop("kind", None)
        if kind is None:
            raise ValueError("operator entry needs a 'kind'")
        unknown = set(data) - set(KINDS.get(kind, ()))
        if kind in KINDS and unknown:
            raise ValueError(f"unknown key {sorted(unknown)[0]!r} for operator {kind!r}")
        return cls(kind, **data)


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def plap(p: float) -> OperatorSpec:
    return OperatorSpec("plap", p=p)


def wdiff(p: float) -> OperatorSpec:
    return OperatorSpec("wdiff", p=p)


def pgw(p0: float, p1: float) -> OperatorSpec:
    return OperatorSpec("pgw", p0=p0, p1=p1)


def power(p0: float) -> OperatorSpec:
    return OperatorSpec("power", p0=p0)


def gradpower(mu: float) -> OperatorSpec:
    return OperatorSpec("gradpower", mu=mu)


def bipower(p: float) -> OperatorSpec:
    return OperatorSpec("bipower", p=p)


# -- discrete actions -------------------------------------------------------

def apply_values(spec: OperatorSpec, v: np.ndarray, h: float, eps: float = EPS_REG) -> np.ndarray:
    """Nodal action of ``spec`` on raw values (last axis = nodes)."""
    with np.errstate(over="ignore", invalid="ignore"):
        k = spec.kind
        if k == "plap":
            out = cell_grad_t(spow(cell_grad(v, h), spec.p - 1), h)
        elif k == "wdiff":
            out = cell_grad_t(absp(cell_mid(v), spec.p - 2) * cell_grad(v, h), h)
        elif k == "pgw":
            out = spow(v, spec.p0 - 1) * absp(node_central(v, h), spec.p1)
        elif k == "power":
            out = spow(v, spec.p0 - 1)
        elif k == "gradpower":
            out = weight_pow(node_central(v, h), spec.mu - 2, eps) * v
        else:  # bipower
            out = -spow(node_lap(v, h), spec.p - 1)
    if not np.all(np.isfinite(out)):
        raise OperatorEvaluationError(f"{spec.label()} produced non-finite values")
    return out


def apply(spec: OperatorSpec, u: Field, eps: float = EPS_REG) -> Field:
    return Field(u.grid, apply_values(spec, u.values, u.grid.spacing, eps))


def homogeneity_degree(spec: OperatorSpec) -> float:
    return spec.degree


def empirical_degree(spec: OperatorSpec, u: Field, scales) -> float:
    """Least-squares slope of ``log ||Op(tau u)||_2`` against ``log tau``."""
    if u.is_zero():
        raise ValueError("empirical_degree needs a nonzero field")
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0) or len(np.unique(scales)) < 3:
        raise ValueError("need at least 3 distinct positive scales")
    norms = [apply(spec, tau * u).l2() for tau in scales]
    slope, _ = np.polyfit(np.log(scales), np.log(norms), 1)
    return float(slope)


# -- energies <Op(v), v> and their gradients -------------------------------

def energy(spec: OperatorSpec, v: np.ndarray, h: float, eps: float = EPS_REG) -> np.ndarray:
    """``h * sum Op(v) * v`` along the last axis."""
    return h * np.sum(apply_values(spec, v, h, eps) * v, axis=-1)


def energy_grad(spec: OperatorSpec, v: np.ndarray, h: float, eps: float = EPS_REG) -> np.ndarray:
    """Euclidean gradient of :func:`energy` with respect to the node values."""
    k = spec.kind
    if k == "plap":
        return h * spec.p * apply_values(spec, v, h, eps)
    if k == "wdiff":
        m, d = cell_mid(v), cell_grad(v, h)
        return h * (cell_mid_t(dabsp(m, spec.p - 2, eps) * d * d)
                    + cell_grad_t(2.0 * absp(m, spec.p - 2) * d, h))
    if k == "pgw":
        c = node_central(v, h)
        return h * (dabsp(v, spec.p0, eps) * absp(c, spec.p1)
                    + node_central_t(absp(v, spec.p0) * dabsp(c, spec.p1, eps), h))
    if k == "power":
        return h * dabsp(v, spec.p0, eps)
    if k == "gradpower":
        c = node_central(v, h)
        a = spec.mu - 2
        return h * (2.0 * weight_pow(c, a, eps) * v + node_central_t(dabsp(c, a, eps) * v * v, h))
    s = node_lap(v, h)
    return h * (-spow(s, spec.p - 1) + node_lap(-dspow(s, spec.p - 1, eps) * v, h))
