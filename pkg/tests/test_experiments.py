import math

import numpy as np
import pytest

from relspec import experiments as ex
from relspec import operators as ops
from relspec.grid import Field, Grid1D, lp_norm, sample
from relspec.oracles import dense_newton, discrete_lap_eigenvalue

GRID = Grid1D(1.0, 99)
RHS = sample(GRID, lambda x: 0.1 * np.sin(np.pi * x))
RADII = [0.25, 0.5, 1.0, 2.0, 4.0]


def test_smooth_fields_are_unit_and_seeded():
    rows = ex.smooth_fields(GRID, 5, seed=3)
    assert rows.shape == (5, GRID.n)
    np.testing.assert_allclose(lp_norm(rows, 2.0, GRID.spacing), 1.0, rtol=1e-14)
    np.testing.assert_array_equal(rows, ex.smooth_fields(GRID, 5, seed=3))
    assert not np.array_equal(rows, ex.smooth_fields(GRID, 5, seed=4))


# -- scaling law ------------------------------------------------------------

@pytest.mark.parametrize(
    "F, G",
    [(ops.plap(4), ops.power(2)), (ops.plap(2), ops.power(3)), (ops.bipower(3), ops.power(2)),
     (ops.plap(3), ops.pgw(2, 1)), (ops.plap(4), ops.pgw(1, 3))],
    ids=lambda s: s.label(),
)
def test_quotient_scales_with_degree_gap(F, G):
    u0 = Field(GRID, ex.smooth_fields(GRID, 1, 0)[0])
    fit = ex.radius_scaling(F, G, u0, RADII)
    # lambda(r) = r^(dF - dG) lambda(1), with dF, dG the operator degrees
    assert fit.fitted_exponent == pytest.approx(F.degree - G.degree, abs=1e-9)
    assert fit.max_residual <= 1e-10
    assert fit.transport_spread <= 1e-12


def test_matched_pair_is_flat():
    u0 = Field(GRID, ex.smooth_fields(GRID, 1, 1)[0])
    fit = ex.radius_scaling(ops.plap(3), ops.pgw(2, 1), u0, RADII)
    assert abs(fit.fitted_exponent) <= 1e-9 and fit.expected_exponent == 0


@pytest.mark.parametrize("radii", [[1, 2, 4], [1, 2, 3, 4], [-1, 1, 10, 20]])
def test_radius_validation(radii):
    u0 = Field(GRID, ex.smooth_fields(GRID, 1, 1)[0])
    with pytest.raises(ValueError):
        ex.radius_scaling(ops.plap(2), ops.power(2), u0, radii)


def test_radius_rejects_zero_field():
    with pytest.raises(ValueError):
        ex.radius_scaling(ops.plap(2), ops.power(2), Field(GRID, np.zeros(GRID.n)), RADII)


# -- identities and inequalities --------------------------------------------

def test_prop31_reduces_to_laplacian_at_two():
    r = ex.verify_prop31_case2(2.0, GRID)
    assert r.passed and r.rel_err <= 1e-8
    assert r.rhs == pytest.approx(discrete_lap_eigenvalue(GRID), rel=1e-12)
    assert r.rel_err_continuum <= 2e-2


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_prop31_identity(p):
    r = ex.verify_prop31_case2(p, GRID)
    assert r.passed
    assert r.rhs_continuum == pytest.approx((2 * math.pi / p) ** 2, rel=1e-14)
    assert r.rel_err_continuum <= 1e-3


def test_prop31_rejects_small_p():
    with pytest.raises(ValueError):
        ex.verify_prop31_case2(1.5, GRID)


def test_ineq33_reduction_case():
    r = ex.verify_ineq_33(2, 0, GRID)
    assert r.passed and r.holder_passed
    assert r.lambda_plap == pytest.approx(math.pi, rel=1e-3)
    assert r.lambda_p0p1 == pytest.approx(math.pi, rel=1e-3)


@pytest.mark.parametrize("p0, p1", [(1, 1), (2, 1), (2, 2), (1, 3)])
def test_ineq33_hoelder_bound(p0, p1):
    r = ex.verify_ineq_33(p0, p1, GRID)
    assert r.holder_passed
    assert r.holder_bound == pytest.approx(r.lambda_plap ** (p0 / (p0 + p1)), rel=1e-14)


def test_fully_nonlinear_linear_case():
    r = ex.fully_nonlinear_eig(2.0, GRID)
    assert r.rel_err <= 2e-2
    assert r.c_estimate > 0 and r.c_bound == r.c_estimate


def test_fully_nonlinear_reference_only_at_two():
    r = ex.fully_nonlinear_eig(3.0, Grid1D(1.0, 49))
    assert math.isnan(r.reference) and math.isnan(r.rel_err) and r.lambda_est > 0


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_ineq46(p):
    rep = ex.verify_ineq_46(p, GRID, samples=300, seed=2)
    assert rep.violations == 0 and rep.worst_margin >= 0 and rep.witness is None
    assert rep.samples_tested == 300


def test_ineq46_is_identity_at_two():
    rep = ex.verify_ineq_46(2.0, GRID, samples=200, seed=0)
    assert rep.worst_margin <= 2 * ex.INEQ46_SLACK


def test_composed_linear_case():
    r = ex.composed_operator_eig(2.0, GRID)
    assert r.passed and r.upper_passed
    assert r.lambda_f == pytest.approx(r.lower_bound, rel=1e-8)


def test_composed_hoelder_bound():
    r = ex.composed_operator_eig(3.0, Grid1D(1.0, 79))
    assert r.lambda_f >= r.holder_bound * (1 - 1e-6)
    assert r.upper_passed


# -- perturbed equations ----------------------------------------------------

@pytest.mark.parametrize("frac", [0.0, 0.25, 0.5, 0.75, 0.9])
def test_linear_solve_agrees_with_dense(frac):
    lam = frac * math.pi**2
    F, G = ops.plap(2), ops.pgw(2, 0)
    out = ex.solve_perturbed(F, G, lam, RHS)
    assert out.converged and out.residual <= 1e-8
    dense = dense_newton((F, G), lam, RHS)
    assert np.max(np.abs(out.solution.values - dense.values)) <= 1e-6
    exact = 0.1 / (discrete_lap_eigenvalue(GRID) - lam) * np.sin(np.pi * GRID.nodes)
    np.testing.assert_allclose(out.solution.values, exact, atol=1e-10)


def test_zero_rhs_gives_zero_solution():
    out = ex.solve_perturbed(ops.plap(3), ops.pgw(2, 1), 5.0, Field(GRID, np.zeros(GRID.n)))
    assert out.converged and out.steps == 0 and out.solution.is_zero()
    assert out.rhs_scale == 0


@pytest.mark.parametrize("F, G", [(ops.plap(3), ops.pgw(2, 1)), (ops.plap(4), ops.pgw(2, 2)),
                                  (ops.plap(3), ops.pgw(3, 0))], ids=lambda s: s.label())
def test_nonlinear_pairs_solve_below_threshold(F, G):
    th = ex.relative_threshold(F, G, GRID)
    for frac in (0.5, 0.9):
        out = ex.solve_perturbed(F, G, frac * th, RHS)
        assert out.converged
        res = ops.apply_values(F, out.solution.values, GRID.spacing) \
            - frac * th * ops.apply_values(G, out.solution.values, GRID.spacing) - RHS.values
        assert lp_norm(res, 2.0, GRID.spacing) <= 1e-8


def test_super_threshold_is_reported_not_raised():
    out = ex.solve_perturbed(ops.plap(2), ops.pgw(2, 0), 1.5 * math.pi**2, RHS)
    assert math.isfinite(out.residual)
    assert out.converged == (out.residual <= 1e-8)


def test_resonance_is_not_solvable():
    lam = discrete_lap_eigenvalue(GRID)
    below = ex.solve_perturbed(ops.plap(2), ops.pgw(2, 0), 0.5 * lam, RHS)
    at = ex.solve_perturbed(ops.plap(2), ops.pgw(2, 0), lam, RHS)
    assert not at.converged or at.solution_norm > 10 * below.solution_norm


def test_solvability_scan_linear():
    F, G = ops.plap(2), ops.pgw(2, 0)
    lams = np.array([0, 0.25, 0.5, 0.75, 0.9, 1.2]) * math.pi**2
    scan = ex.solvability_scan(F, G, lams, RHS)
    assert scan.threshold == pytest.approx(discrete_lap_eigenvalue(GRID), rel=1e-9)
    assert scan.unsolved_below(0.9) == []
    for o in scan.outcomes:
        assert not o.converged or o.residual <= 1e-8


def test_solvability_scan_all_zero():
    scan = ex.solvability_scan(ops.plap(2), ops.pgw(2, 0), [0.0] * 5, RHS, threshold=math.pi**2)
    ref = scan.outcomes[0].solution.values
    for o in scan.outcomes:
        assert o.converged
        np.testing.assert_array_equal(o.solution.values, ref)


def test_solvability_scan_needs_five_values():
    with pytest.raises(ValueError):
        ex.solvability_scan(ops.plap(2), ops.pgw(2, 0), [0, 1, 2, 3], RHS)


def test_relative_threshold_needs_matched_degrees():
    with pytest.raises(ValueError):
        ex.relative_threshold(ops.plap(4), ops.power(2), GRID)


# -- condition probes -------------------------------------------------------

def test_coercivity_probe_linear():
    a, b = ex.condition_probe(ops.plap(2), ops.pgw(2, 0), 0.5 * math.pi**2, GRID, samples=1000, seed=0)
    assert a.violations == 0 and a.worst_margin >= 0 and a.samples_tested == 1000
    assert b.violations == 0


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_probes_nonlinear(p):
    F, G = ops.plap(p), ops.pgw(p - 1, 1)
    a, b = ex.condition_probe(F, G, 0.5, GRID, samples=200, seed=1)
    assert a.violations == 0 and b.violations == 0


def test_probe_reports_witness_on_violation():
    # the margin is lam * (<F u, u> / threshold - <G u, u>); overstating the threshold breaks it
    a, _ = ex.condition_probe(ops.plap(2), ops.pgw(2, 0), 5.0, GRID, samples=100, seed=0, threshold=20.0)
    assert a.violations > 0 and a.worst_margin < 0 and a.witness is not None


def test_probe_sample_floor():
    with pytest.raises(ValueError):
        ex.condition_probe(ops.plap(2), ops.pgw(2, 0), 1.0, GRID, samples=50)
