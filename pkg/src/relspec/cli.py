"""Batch front end: a YAML/JSON config in, one CSV/JSON report out.

Config keys (unknown keys are errors)::

    command        baseline | eig | verify | sweep | solve | probe   (required)
    domain_length  1.0
    n              199          (sweep uses ``ns`` instead)
    seed           0            (overridden by --seed)
    output_path    null         (stdout; overridden by --out)
    output_format  csv          (csv | json; overridden by --format)
    minimize       {}           MinimizeOptions fields except ``seed``
    newton         {}           NewtonOptions fields (solve only)

    eig / sweep    quotient (tag), p | p0, p1 | F, G ; sweep also ns (>= 3 sizes)
    verify         target: prop31 | ineq33 | ineq46 | fully_nonlinear | composed | scaling
                   p, p0, p1, samples (1000), radii, F, G as the target needs
    solve          F, G, lambdas | lambda_fractions (of the computed threshold),
                   rhs_scale (0.1)
    probe          F, G, lambda, samples (1000)

Operators are mappings such as ``{kind: pgw, p0: 2, p1: 1}``.

Exit status: 0 when no row is ``violated``, 2 when a checked inequality or
identity fails, 1 on a config error (one line naming the key).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import yaml

from . import experiments as ex
from .grid import Field, Grid1D, sample
from .minimize import MinimizeOptions, minimize, refine_study
from .operators import OperatorSpec
from .oracles import NewtonOptions, discrete_lap_eigenvalue, plap_first_eigenvalue, tridiag_lap_eig
from .quotient import DegenerateQuotientError, QuotientSpec

__all__ = ["COLUMNS", "ConfigError", "RunConfig", "ReportRow", "parse_config", "run", "render", "main"]

COMMANDS = ("baseline", "eig", "verify", "sweep", "solve", "probe")
TARGETS = ("prop31", "ineq33", "ineq46", "fully_nonlinear", "composed", "scaling")
STATUSES = ("ok", "degenerate", "no_converge", "violated")

# fixed CSV column order; JSON rows carry the same keys
COLUMNS = (
    "run_id", "command", "status", "label", "n", "lambda",
    "lambda_est", "reference", "rel_err", "margin", "residual",
    "solution_norm", "iterations", "violations", "params",
)

FULLY_NONLINEAR_TOL = 2e-2
SOLVABLE_FRACTION = 0.9

_COMMON = {
    "command": str, "domain_length": float, "n": int, "seed": int,
    "output_path": (str, type(None)), "output_format": str,
    "minimize": dict, "newton": dict,
}
_EXPONENTS = {"p": float, "p0": float, "p1": float}
_PAIR = {"F": dict, "G": dict}
_EXTRA = {
    "baseline": {},
    "eig": {"quotient": str, **_EXPONENTS, **_PAIR},
    "sweep": {"quotient": str, "ns": list, **_EXPONENTS, **_PAIR},
    "verify": {"target": str, "samples": int, "radii": list, **_EXPONENTS, **_PAIR},
    "solve": {"lambdas": list, "lambda_fractions": list, "rhs_scale": float, **_PAIR},
    "probe": {"lambda": float, "samples": int, **_PAIR},
}
_DEFAULTS = {"domain_length": 1.0, "n": 199, "seed": 0, "output_path": None, "output_format": "csv"}
_OUTPUT_KEYS = ("output_path", "output_format")


class ConfigError(ValueError):
    """Malformed config; the message names the offending key."""


@dataclass
class RunConfig:
    command: str
    domain_length: float
    n: int | None
    seed: int
    output_path: str | None
    output_format: str
    params: dict[str, Any]
    minimize: MinimizeOptions
    newton: NewtonOptions
    raw: dict[str, Any] = field(repr=False, default_factory=dict)

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.domain_length, self.n)

    def echo(self) -> dict[str, Any]:
        """Every computation parameter, defaults filled in; enough to rerun the row."""
        return {k: v for k, v in self.raw.items() if k not in _OUTPUT_KEYS}


@dataclass
class ReportRow:
    run_id: str
    command: str
    status: str
    label: str
    params: str
    metrics: dict[str, float | int | None] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        out = {"run_id": self.run_id, "command": self.command, "status": self.status,
               "label": self.label, "params": self.params}
        for col in COLUMNS:
            if col not in out:
                out[col] = self.metrics.get(col)
        return {col: out[col] for col in COLUMNS}


# -- parsing ------------------------------------------------------------------

def _check_type(key: str, value: Any, expected) -> Any:
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"type mismatch for key {key!r}: expected a number, got {type(value).__name__}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"key {key!r} must be finite, got {value}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"type mismatch for key {key!r}: expected an integer, got {type(value).__name__}")
        return value
    if not isinstance(value, expected):
        names = expected.__name__ if isinstance(expected, type) else "/".join(t.__name__ for t in expected)
        raise ConfigError(f"type mismatch for key {key!r}: expected {names}, got {type(value).__name__}")
    return value


def _numbers(key: str, values: list, kind=float) -> list:
    return [_check_type(f"{key}[{i}]", v, kind) for i, v in enumerate(values)]


def _options(key: str, data: Mapping, cls, forbidden=()):
    names = {f.name: f for f in dataclasses.fields(cls)}
    clean = {}
    for k, v in data.items():
        if k in forbidden:
            raise ConfigError(f"key '{key}.{k}' is not allowed here; set the top-level {k!r}")
        if k not in names:
            raise ConfigError(f"unknown key '{key}.{k}'")
        default = names[k].default
        clean[k] = _check_type(f"{key}.{k}", v, int if isinstance(default, int) else float)
    return clean


def _operator(key: str, data: Mapping) -> OperatorSpec:
    try:
        return OperatorSpec.from_mapping(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key {key!r}: {exc}") from None


def _quotient(doc: Mapping) -> QuotientSpec:
    tag = doc.get("quotient")
    if tag is None:
        raise ConfigError("missing required key 'quotient'")
    data = {k: doc[k] for k in ("p", "p0", "p1") if k in doc}
    for k in ("F", "G"):
        if k in doc:
            data[k] = _operator(k, doc[k])
    try:
        return QuotientSpec.from_mapping(tag, data)
    except ValueError as exc:
        raise ConfigError(f"key 'quotient': {exc}") from None


def _require(doc: Mapping, *keys: str) -> None:
    for k in keys:
        if k not in doc:
            raise ConfigError(f"missing required key {k!r}")


def _forbid(doc: Mapping, keys, why: str) -> None:
    for k in keys:
        if k in doc:
            raise ConfigError(f"unknown key {k!r} {why}")


def _p_constraint(doc: Mapping) -> None:
    p0, p1 = doc["p0"], doc["p1"]
    if "p" in doc and not math.isclose(p0 + p1, doc["p"], rel_tol=0, abs_tol=1e-12):
        raise ConfigError(f"constraint violation: p0+p1=p (got p0={p0:g}, p1={p1:g}, p={doc['p']:g})")


def _validate_target(doc: dict) -> None:
    target = doc.get("target")
    if target not in TARGETS:
        raise ConfigError(f"key 'target' must be one of {list(TARGETS)}, got {target!r}")
    if target == "scaling":
        _require(doc, "F", "G")
        _forbid(doc, ("p", "p0", "p1", "samples"), "for target scaling")
        doc.setdefault("radii", [0.5, 1.0, 2.0, 4.0, 8.0])
        doc["radii"] = _numbers("radii", doc["radii"])
        if len(doc["radii"]) < 4 or min(doc["radii"]) <= 0 or max(doc["radii"]) < 10 * min(doc["radii"]):
            raise ConfigError("key 'radii' needs >= 4 positive values spanning a decade")
        for k in ("F", "G"):
            _operator(k, doc[k])
        return
    _forbid(doc, ("F", "G", "radii"), f"for target {target}")
    if target == "ineq33":
        _require(doc, "p0", "p1")
        _p_constraint(doc)
        if doc["p0"] < 1 or doc["p1"] < 0 or doc["p0"] + doc["p1"] < 2:
            raise ConfigError("constraint violation: p0 >= 1, p1 >= 0, p0+p1=p >= 2")
        _forbid(doc, ("samples",), "for target ineq33")
        return
    _require(doc, "p")
    _forbid(doc, ("p0", "p1"), f"for target {target}")
    if doc["p"] < 2:
        raise ConfigError(f"key 'p' must be >= 2, got {doc['p']:g}")
    if target == "ineq46":
        doc.setdefault("samples", 1000)
        if doc["samples"] < 1:
            raise ConfigError("key 'samples' must be >= 1")
    else:
        _forbid(doc, ("samples",), f"for target {target}")


def parse_config(text: str | Mapping) -> RunConfig:
    """Strictly parse a YAML/JSON document (or an already loaded mapping)."""
    if isinstance(text, Mapping):
        doc = dict(text)
    else:
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML/JSON: {exc}".splitlines()[0]) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of keys to values")
    doc = {str(k): v for k, v in doc.items()}
    command = doc.get("command")
    if command is None:
        raise ConfigError("missing required key 'command'")
    if command not in COMMANDS:
        raise ConfigError(f"key 'command' must be one of {list(COMMANDS)}, got {command!r}")
    allowed = {**_COMMON, **_EXTRA[command]}
    for k in doc:
        if k not in allowed or (command == "sweep" and k == "n"):
            raise ConfigError(f"unknown key {k!r}" + (" for sweep (use 'ns')" if k == "n" else ""))
    for k, v in _DEFAULTS.items():
        if command == "sweep" and k == "n":
            continue
        doc.setdefault(k, v)
    for k, v in list(doc.items()):
        doc[k] = _check_type(k, v, allowed[k])

    if doc["output_format"] not in ("csv", "json"):
        raise ConfigError(f"key 'output_format' must be csv or json, got {doc['output_format']!r}")
    if not 0 <= doc["seed"] < 2**64:
        raise ConfigError(f"key 'seed' must be an unsigned 64-bit integer, got {doc['seed']}")
    if not doc["domain_length"] > 0:
        raise ConfigError(f"key 'domain_length' must be > 0, got {doc['domain_length']}")
    if command != "sweep" and doc["n"] < 3:
        raise ConfigError(f"key 'n' must be >= 3, got {doc['n']}")

    if "newton" in doc and command != "solve":
        raise ConfigError(f"unknown key 'newton' for command {command}")
    mopts = _options("minimize", doc.get("minimize", {}), MinimizeOptions, forbidden=("seed",))
    nopts = _options("newton", doc.get("newton", {}), NewtonOptions)
    doc["minimize"] = mopts
    if command == "solve":
        doc["newton"] = nopts
    try:
        minimize_opts = MinimizeOptions(seed=doc["seed"], **mopts)
        newton_opts = NewtonOptions(**nopts)
    except ValueError as exc:
        raise ConfigError(f"key 'minimize'/'newton': {exc}") from None

    if command in ("eig", "sweep"):
        _quotient(doc)
    if command == "sweep":
        _require(doc, "ns")
        ns = _numbers("ns", doc["ns"], int)
        if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 3:
            raise ConfigError(f"key 'ns' needs >= 3 strictly increasing sizes >= 3, got {ns}")
        doc["ns"] = ns
    if command == "verify":
        _validate_target(doc)
    if command in ("solve", "probe"):
        _require(doc, "F", "G")
        for k in ("F", "G"):
            _operator(k, doc[k])
    if command == "solve":
        given = [k for k in ("lambdas", "lambda_fractions") if k in doc]
        if len(given) != 1:
            raise ConfigError("solve needs exactly one of keys 'lambdas' and 'lambda_fractions'")
        doc[given[0]] = _numbers(given[0], doc[given[0]])
        if not doc[given[0]]:
            raise ConfigError(f"key {given[0]!r} is empty")
        doc.setdefault("rhs_scale", 0.1)
    if command == "probe":
        _require(doc, "lambda")
        doc.setdefault("samples", 1000)
        if doc["samples"] < 100:
            raise ConfigError(f"key 'samples' must be >= 100 for probes, got {doc['samples']}")

    params = {k: v for k, v in doc.items() if k not in _COMMON}
    return RunConfig(
        command=command, domain_length=doc["domain_length"], n=doc.get("n"), seed=doc["seed"],
        output_path=doc["output_path"], output_format=doc["output_format"], params=params,
        minimize=minimize_opts, newton=newton_opts, raw=doc,
    )


def with_overrides(cfg: RunConfig, seed: int | None = None, out: str | None = None,
                   fmt: str | None = None) -> RunConfig:
    doc = dict(cfg.raw)
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["output_path"] = out
    if fmt is not None:
        doc["output_format"] = fmt
    return parse_config(doc)


# -- running ------------------------------------------------------------------

def _canonical(params: Mapping) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


class _Rows:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.params = _canonical(cfg.echo())
        self.rows: list[ReportRow] = []

    def add(self, label: str, status: str, **metrics) -> None:
        digest = hashlib.sha1(f"{self.params}|{label}|{len(self.rows)}".encode()).hexdigest()[:12]
        clean = {}
        for k, v in metrics.items():
            if k not in COLUMNS:
                raise KeyError(k)
            if isinstance(v, (bool, np.bool_)):
                v = int(v)
            elif isinstance(v, (np.floating, np.integer)):
                v = v.item()
            clean[k] = v
        self.rows.append(ReportRow(digest, self.cfg.command, status, label, self.params, clean))


def _eig_status(converged: bool) -> str:
    return "ok" if converged else "no_converge"


def _reference(q: QuotientSpec, length: float) -> float | None:
    if q.tag == "q33a" and q.params["p1"] == 0:
        return plap_first_eigenvalue(q.p, length)
    if q.tag == "qpl":
        return plap_first_eigenvalue(q.p, length) ** (1.0 / q.p)
    return None


def _run_baseline(cfg: RunConfig, out: _Rows) -> None:
    grid = cfg.grid
    eig = tridiag_lap_eig(grid)
    closed = discrete_lap_eigenvalue(grid)
    out.add("tridiag_lap", "ok", n=grid.n, lambda_est=eig.value, reference=closed,
            rel_err=abs(eig.value - closed) / closed, residual=eig.residual, iterations=eig.iterations)


def _run_eig(cfg: RunConfig, out: _Rows) -> None:
    q = _quotient(cfg.params)
    try:
        res = minimize(q, cfg.grid, cfg.minimize)
    except DegenerateQuotientError:
        out.add(q.label(), "degenerate", n=cfg.n)
        return
    ref = _reference(q, cfg.domain_length)
    out.add(q.label(), _eig_status(res.converged), n=cfg.n, lambda_est=res.lambda_est, reference=ref,
            rel_err=None if ref is None else abs(res.lambda_est - ref) / ref,
            residual=res.grad_norm_final, iterations=res.iterations)


def _run_sweep(cfg: RunConfig, out: _Rows) -> None:
    q = _quotient(cfg.params)
    grids = [Grid1D(cfg.domain_length, n) for n in cfg.params["ns"]]
    ref = _reference(q, cfg.domain_length)
    try:
        study = refine_study(q, grids, cfg.minimize)
    except DegenerateQuotientError:
        out.add(q.label(), "degenerate")
        return
    for n, lam in study:
        out.add(q.label(), "ok", n=n, lambda_est=lam, reference=ref,
                rel_err=None if ref is None else abs(lam - ref) / ref)


def _run_verify(cfg: RunConfig, out: _Rows) -> None:
    prm, grid, opts = cfg.params, cfg.grid, cfg.minimize
    target = prm["target"]
    if target == "prop31":
        r = ex.verify_prop31_case2(prm["p"], grid, opts)
        out.add(f"prop31(p={prm['p']:g})", "ok" if r.passed else "violated", n=grid.n,
                lambda_est=r.lhs, reference=r.rhs, rel_err=r.rel_err)
    elif target == "ineq33":
        r = ex.verify_ineq_33(prm["p0"], prm["p1"], grid, opts)
        out.add(f"ineq33(p0={prm['p0']:g},p1={prm['p1']:g})", "ok" if r.passed else "violated", n=grid.n,
                lambda_est=r.lambda_p0p1, reference=r.lambda_plap, margin=r.margin)
        out.add(f"ineq33_holder(p0={prm['p0']:g},p1={prm['p1']:g})", "ok" if r.holder_passed else "violated",
                n=grid.n, lambda_est=r.lambda_p0p1, reference=r.holder_bound, margin=r.holder_margin)
    elif target == "ineq46":
        r = ex.verify_ineq_46(prm["p"], grid, prm["samples"], cfg.seed)
        out.add(r.condition_id, "ok" if r.violations == 0 else "violated", n=grid.n,
                margin=r.worst_margin, violations=r.violations)
    elif target == "fully_nonlinear":
        r = ex.fully_nonlinear_eig(prm["p"], grid, opts, seed=cfg.seed)
        checked = prm["p"] == 2
        status = "violated" if checked and not r.rel_err <= FULLY_NONLINEAR_TOL else _eig_status(r.converged)
        out.add(f"fully_nonlinear(p={prm['p']:g})", status, n=grid.n, lambda_est=r.lambda_est,
                reference=r.reference if checked else None, rel_err=r.rel_err if checked else None)
    elif target == "composed":
        r = ex.composed_operator_eig(prm["p"], grid, opts)
        out.add(f"composed_lower(p={prm['p']:g})", "ok" if r.passed else "violated", n=grid.n,
                lambda_est=r.lambda_f, reference=r.lower_bound, margin=r.margin)
        out.add(f"composed_upper(p={prm['p']:g})", "ok" if r.upper_passed else "violated", n=grid.n,
                lambda_est=r.lambda_f, reference=r.upper_bound, margin=r.upper_bound - r.lambda_f)
    else:
        F, G = _operator("F", prm["F"]), _operator("G", prm["G"])
        u0 = ex.smooth_fields(grid, 1, cfg.seed)[0]
        try:
            fit = ex.radius_scaling(F, G, Field(grid, u0), np.asarray(prm["radii"]))
        except DegenerateQuotientError:
            out.add(f"scaling({F.label()},{G.label()})", "degenerate", n=grid.n)
            return
        tol = 1e-9 if fit.expected_exponent == 0 else 1e-6
        err = abs(fit.fitted_exponent - fit.expected_exponent)
        out.add(f"scaling({F.label()},{G.label()})", "ok" if err <= tol else "violated", n=grid.n,
                lambda_est=fit.fitted_exponent, reference=fit.expected_exponent,
                margin=tol - err, residual=fit.max_residual)


def _run_solve(cfg: RunConfig, out: _Rows) -> None:
    prm, grid = cfg.params, cfg.grid
    F, G = _operator("F", prm["F"]), _operator("G", prm["G"])
    rhs = sample(grid, lambda x: prm["rhs_scale"] * np.sin(np.pi * x / cfg.domain_length))
    try:
        threshold = ex.relative_threshold(F, G, grid, cfg.minimize)
    except (DegenerateQuotientError, ValueError):
        threshold = None
    if "lambdas" in prm:
        lambdas = prm["lambdas"]
    elif threshold is None:
        out.add(f"solve({F.label()},{G.label()})", "degenerate", n=grid.n)
        return
    else:
        lambdas = [f * threshold for f in prm["lambda_fractions"]]
    for lam in lambdas:
        o = ex.solve_perturbed(F, G, lam, rhs, cfg.newton)
        must = threshold is not None and lam <= SOLVABLE_FRACTION * threshold
        status = "ok" if o.converged else ("violated" if must else "no_converge")
        out.add(f"solve({F.label()},{G.label()})", status, n=grid.n, **{"lambda": lam},
                reference=threshold, residual=o.residual, iterations=o.steps,
                solution_norm=o.solution_norm)


def _run_probe(cfg: RunConfig, out: _Rows) -> None:
    prm, grid = cfg.params, cfg.grid
    F, G = _operator("F", prm["F"]), _operator("G", prm["G"])
    reports = ex.condition_probe(F, G, prm["lambda"], grid, prm["samples"], cfg.seed, min_opts=cfg.minimize)
    for r in reports:
        out.add(r.condition_id, "ok" if r.violations == 0 else "violated", n=grid.n,
                **{"lambda": prm["lambda"]}, margin=r.worst_margin, violations=r.violations)


_RUNNERS = {
    "baseline": _run_baseline, "eig": _run_eig, "sweep": _run_sweep,
    "verify": _run_verify, "solve": _run_solve, "probe": _run_probe,
}


def run(cfg: RunConfig) -> tuple[int, list[ReportRow]]:
    """Execute ``cfg``; returns the exit status (0 or 2) and the report rows."""
    out = _Rows(cfg)
    _RUNNERS[cfg.command](cfg, out)
    code = 2 if any(r.status == "violated" for r in out.rows) else 0
    return code, out.rows


# -- output -------------------------------------------------------------------

def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def render(rows: list[ReportRow], fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"rows": [r.as_dict() for r in rows]}, indent=2, allow_nan=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = r.as_dict()
        w.writerow([_cell(d[c]) for c in COLUMNS])
    return buf.getvalue()


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relspec", description="Run a relative-eigenvalue experiment from a config file.")
    ap.add_argument("--config", required=True, help="YAML or JSON config path ('-' for stdin)")
    ap.add_argument("--out", help="report path (default: config output_path, else stdout)")
    ap.add_argument("--format", choices=("csv", "json"), help="report format (default: config output_format)")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed, overrides the config")
    ap.add_argument("--quiet", action="store_true", help="no summary on stderr")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config == "-":
            text = sys.stdin.read()
        else:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        print(f"config error: cannot read {args.config!r}: {exc.strerror}", file=sys.stderr)
        return 1
    try:
        cfg = with_overrides(parse_config(text), args.seed, args.out, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    code, rows = run(cfg)
    report = render(rows, cfg.output_format)
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(report)
    else:
        sys.stdout.write(report)
    if not args.quiet:
        bad = sum(r.status == "violated" for r in rows)
        print(f"{cfg.command}: {len(rows)} row(s), {bad} violated, exit {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
