import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relspec.experiments import smooth_fields
from relspec.grid import Field, Grid1D

settings.register_profile(
    "repo", deadline=None, max_examples=40, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# criterion -> list of (case, passed, detail, companion), filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[str, bool, str, bool]]] = {}


def record(criterion: int, case: str, passed: bool, detail: str, companion: bool = False) -> None:
    """Companion cases are shown under their criterion but do not decide its verdict."""
    ACCEPTANCE.setdefault(criterion, []).append((case, bool(passed), detail, companion))


def acceptance_lines() -> list[str]:
    lines = []
    for crit in sorted(ACCEPTANCE):
        cases = ACCEPTANCE[crit]
        verdict = "PASS" if all(ok for _, ok, _, comp in cases if not comp) else "FAIL"
        lines.append(f"criterion {crit}: {verdict}")
        for case, ok, detail, comp in cases:
            tag = ("companion " if comp else "") + ("pass" if ok else "FAIL")
            lines.append(f"    [{tag}] {case}: {detail}")
    return lines


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines():
        terminalreporter.write_line(line)


@pytest.fixture
def unit_grid():
    return Grid1D(1.0, 50)


@pytest.fixture
def smooth(unit_grid):
    return [Field(unit_grid, r) for r in smooth_fields(unit_grid, 4, seed=7)]


def random_smooth(grid: Grid1D, seed: int) -> np.ndarray:
    return smooth_fields(grid, 1, seed)[0]


def quotient_catalog(p: float):
    """Every quotient tag at exponent ``p``, plus representative generic pairs."""
    from relspec import operators as ops
    from relspec import quotient as Q

    return [
        Q.qpl(p), Q.q32(p), Q.q44(p), Q.q45(p), Q.qr3(p), Q.q4ex1(p),
        Q.q33a(p, 0), Q.q33a(p - 1, 1), Q.q34(p, 0), Q.q34(p - 1, 1),
        Q.q25(ops.plap(p), ops.pgw(p - 1, 1)),
        Q.q25(ops.plap(p), ops.power(p)),
        Q.q25(ops.wdiff(p), ops.power(p)),
        Q.q25(ops.bipower(p), ops.gradpower(p)),
    ]
