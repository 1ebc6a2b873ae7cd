import math

import numpy as np
import pytest

from memcost.cost_engine import (
    BoundConstants,
    NoiseLevel,
    Regime,
    RhoSolution,
    anisotropic_cost_lower_bound,
    asymptotic_cost,
    cost_curve,
    cost_linear_bound,
    memorization_threshold,
    ols_gap,
    ols_threshold,
    solve_rho,
    solve_rho_def,
    solve_rho_ols,
    threshold_approx,
    threshold_report,
)
from memcost.deformed import DeformedLaw, PopulationSpectrum, deformed_threshold
from memcost.errors import DomainError, NearDivergenceError, RegimeError
from memcost.spectra import MPLaw, mp_integrate, mp_stieltjes_neg

NOISE = NoiseLevel(0.1)
TWO_ATOM = PopulationSpectrum(atoms=((1.0, 0.5), (0.5, 0.5)))
GRID = [(g, s2) for g in (1.5, 2.0, 4.0, 10.0) for s2 in (1e-3, 1e-2, 1e-1, 1.0)]


def test_noise_level_rejects_nonpositive():
    with pytest.raises(DomainError):
        NoiseLevel(0.0)


def test_threshold_value_gamma2():
    val = memorization_threshold(2.0, NOISE)
    assert abs(val - 0.014833147735478828) < 1e-12
    # quadrature cross-check of the closed form
    quad = 0.01 * mp_integrate(MPLaw(2.0), lambda s: 1.0 / (s + 0.1))
    assert abs(val - quad) <= 1e-10


def test_threshold_approx_direct_substitution():
    val = threshold_approx(2.0, NoiseLevel(0.01))
    assert abs(val - 1e-4 / 0.51) < 1e-18


def test_threshold_approx_large_gamma():
    val = threshold_approx(1e12, NoiseLevel(0.5))
    assert abs(val - 0.25 / 1.5) < 1e-9


def test_threshold_ratio_converges_monotonically():
    ratios = []
    for s2 in (1e-1, 1e-2, 1e-3, 1e-4):
        noise = NoiseLevel(s2)
        ratios.append(memorization_threshold(2.0, noise) / threshold_approx(2.0, noise))
    deviations = [abs(1.0 - r) for r in ratios]
    assert all(a > b for a, b in zip(deviations, deviations[1:]))
    assert deviations[-1] <= 0.05


def test_deformed_path_matches_isotropic_threshold():
    iso = PopulationSpectrum.isotropic()
    for gamma in (1.5, 2.0, 4.0):
        a = memorization_threshold(gamma, NOISE)
        b = deformed_threshold(DeformedLaw(gamma, iso), NOISE.sigma2)
        assert abs(a - b) < 1e-10


def test_solve_rho_at_threshold_is_inactive():
    eps2 = memorization_threshold(2.0, NOISE)
    sol = solve_rho(2.0, NOISE, eps2)
    assert sol.rho == 0.0
    assert sol.regime is Regime.BELOW_THRESHOLD
    assert sol.residual == 0.0


def test_solve_rho_below_threshold():
    eps2 = 0.5 * memorization_threshold(2.0, NOISE)
    sol = solve_rho(2.0, NOISE, eps2)
    assert sol.rho == 0.0 and sol.regime is Regime.BELOW_THRESHOLD
    assert asymptotic_cost(2.0, NOISE, eps2).cost == 0.0


def test_solve_rho_rejects_negative_eps2():
    with pytest.raises(DomainError):
        solve_rho(2.0, NOISE, -1.0)


def test_solve_rho_near_divergence():
    with pytest.raises(NearDivergenceError):
        solve_rho(2.0, NOISE, 1e6)


def test_solve_rho_monotone_in_eps2():
    th = memorization_threshold(2.0, NOISE)
    rhos = [solve_rho(2.0, NOISE, float(e)).rho for e in np.linspace(0.5 * th, 6 * th, 25)]
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))
    above = [r for r in rhos if r > 0]
    assert all(b > a for a, b in zip(above, above[1:]))


def test_rho_solution_invariants():
    with pytest.raises(DomainError):
        RhoSolution(rho=0.0, regime=Regime.ABOVE_THRESHOLD, residual=0.0, target_eps2=1.0)
    with pytest.raises(DomainError):
        RhoSolution(rho=0.5, regime=Regime.BELOW_THRESHOLD, residual=0.0, target_eps2=1.0)


def test_cost_is_monotone_and_zero_below_threshold():
    th = memorization_threshold(2.0, NOISE)
    points = cost_curve(2.0, NOISE, np.linspace(0.2 * th, 5 * th, 15))
    costs = [p.cost for p in points]
    assert all(c == 0.0 for p, c in zip(points, costs) if p.eps2 <= th)
    assert all(b >= a for a, b in zip(costs, costs[1:]))
    assert costs[-1] > 0


def test_costbar_below_threshold_is_minus_gap():
    th = memorization_threshold(2.0, NOISE)
    point = asymptotic_cost(2.0, NOISE, 0.5 * th)
    gap = ols_gap(2.0, NOISE)
    assert point.cost == 0.0
    assert abs(point.costbar + gap) < 1e-15
    assert point.costbar < 0


def test_ols_gap_two_routes_and_small_sigma_law():
    # the closed form and the quadrature route are asserted inside ols_gap
    ratios = []
    for s2 in (1e-1, 1e-2, 1e-3, 1e-4):
        gap = ols_gap(2.0, NoiseLevel(s2))
        ratios.append(gap / s2**2)
    # limit constant 1/(gamma (1-1/gamma)^3) = 4 at gamma = 2
    deviations = [abs(r - 4.0) for r in ratios]
    assert all(a > b for a, b in zip(deviations, deviations[1:]))
    assert deviations[-1] / 4.0 <= 0.05


def test_rho_ols_lower_bound_and_residual():
    for gamma, s2 in GRID:
        sol = solve_rho_ols(gamma, NoiseLevel(s2))
        lp = MPLaw(gamma).lambda_plus
        assert sol.rho >= 1.0 / (2.0 * lp)
        assert sol.rho < 1.0 / lp
        assert sol.residual <= 1e-10


def test_rho_ols_large_sigma2_stays_interior():
    sol = solve_rho_ols(2.0, NoiseLevel(100.0))
    lp = MPLaw(2.0).lambda_plus
    assert 1.0 / (2.0 * lp) < sol.rho < 1.0 / lp


def test_threshold_ordering_on_grid():
    for gamma, s2 in GRID:
        noise = NoiseLevel(s2)
        eps_s2 = memorization_threshold(gamma, noise)
        eps_ols2 = ols_threshold(gamma, noise)
        law = MPLaw(gamma)
        cap = (2.0 * law.lambda_plus / law.lambda_minus) ** 2 * eps_s2
        assert eps_s2 < eps_ols2 <= cap * (1 + 1e-12)


def test_costbar_zero_at_ols_threshold_and_sign_flip():
    for gamma, s2 in [(1.5, 0.1), (2.0, 0.1), (4.0, 1e-2)]:
        noise = NoiseLevel(s2)
        eps_ols2 = ols_threshold(gamma, noise)
        assert abs(asymptotic_cost(gamma, noise, eps_ols2).costbar) <= 1e-8
        assert asymptotic_cost(gamma, noise, 0.95 * eps_ols2).costbar < 0
        assert asymptotic_cost(gamma, noise, 1.05 * eps_ols2).costbar > 0


def test_linear_bound_constants_isotropic():
    law = MPLaw(2.0)
    bc = cost_linear_bound(2.0, NOISE)
    assert abs(bc.c_small - 2.0 / (law.lambda_minus**2 + 0.1)) < 1e-14
    shrink = (1 - 1 / math.sqrt(2)) ** 2
    assert abs(bc.C_growth - shrink * law.lambda_minus / (law.lambda_plus**2 * 2.0)) < 1e-16
    assert bc.kappa == 1.0


def test_linear_bound_families_differ_at_unit_kappa():
    iso = cost_linear_bound(2.0, NOISE, kappa=1.0)
    mitigated = cost_linear_bound(2.0, NOISE, kappa=1.0, anisotropic=True)
    law = MPLaw(2.0)
    assert abs(mitigated.c_small - 2.0 / (law.lambda_minus + 0.1)) < 1e-13
    assert iso.c_small != mitigated.c_small
    assert abs(iso.C_growth - mitigated.C_growth) < 1e-18


def test_linear_bound_vanishes_like_inverse_gamma():
    c1 = cost_linear_bound(1e8, NOISE).C_growth
    c2 = cost_linear_bound(2e8, NOISE).C_growth
    assert abs(c1 / c2 - 2.0) < 1e-3


def test_linear_growth_guarantee_pointwise():
    for gamma in (1.5, 2.0, 4.0):
        for s2 in (0.01, 0.1):
            noise = NoiseLevel(s2)
            bc = cost_linear_bound(gamma, noise)
            floor = bc.c_small * s2**2
            for eps2 in np.linspace(floor, 20 * floor, 6):
                point = asymptotic_cost(gamma, noise, float(eps2))
                assert point.cost >= bc.C_growth * eps2


def test_bound_constants_validation():
    with pytest.raises(DomainError):
        BoundConstants(c_small=0.0, C_growth=1.0)
    with pytest.raises(DomainError):
        cost_linear_bound(2.0, NOISE, kappa=0.5)


def test_solve_rho_def_at_threshold():
    eps2 = deformed_threshold(DeformedLaw(2.0, TWO_ATOM), NOISE.sigma2)
    sol = solve_rho_def(2.0, TWO_ATOM, NOISE, eps2)
    assert sol.rho == 0.0 and sol.regime is Regime.BELOW_THRESHOLD


def test_solve_rho_def_below_threshold_is_regime_error():
    eps2 = 0.5 * deformed_threshold(DeformedLaw(2.0, TWO_ATOM), NOISE.sigma2)
    with pytest.raises(RegimeError):
        solve_rho_def(2.0, TWO_ATOM, NOISE, eps2)


def test_solve_rho_def_plug_back_residual():
    thresh = deformed_threshold(DeformedLaw(2.0, TWO_ATOM), NOISE.sigma2)
    sol = solve_rho_def(2.0, TWO_ATOM, NOISE, 2.0 * thresh)
    assert sol.regime is Regime.ABOVE_THRESHOLD
    assert sol.residual <= 1e-10
    # independent plug-back with the quadrature route
    law = MPLaw(2.0)
    kappa = TWO_ATOM.kappa
    ks2 = kappa * NOISE.sigma2
    lhs = kappa * NOISE.sigma2**2 * (
        mp_integrate(law, lambda s: 1.0 / ((1.0 - sol.rho * s) ** 2 * (s + ks2)))
        - mp_stieltjes_neg(law, ks2)
    )
    assert abs(lhs - (2.0 * thresh - thresh)) <= 1e-9


def test_solve_rho_def_degenerate_matches_isotropic():
    iso = PopulationSpectrum.isotropic()
    th = memorization_threshold(2.0, NOISE)
    for mult in (1.5, 2.0, 4.0):
        a = solve_rho_def(2.0, iso, NOISE, mult * th).rho
        b = solve_rho(2.0, NOISE, mult * th).rho
        assert abs(a - b) < 1e-12


def test_anisotropic_bound_zero_at_threshold():
    eps2 = deformed_threshold(DeformedLaw(2.0, TWO_ATOM), NOISE.sigma2)
    assert anisotropic_cost_lower_bound(2.0, TWO_ATOM, NOISE, eps2) == 0.0


def test_anisotropic_bound_linear_growth():
    kappa = TWO_ATOM.kappa
    for gamma in (1.5, 2.0):
        for s2 in (0.01, 0.1):
            noise = NoiseLevel(s2)
            bc = cost_linear_bound(gamma, noise, kappa=kappa)
            floor = bc.c_small * s2**2
            for eps2 in np.linspace(floor, 10 * floor, 4):
                bound = anisotropic_cost_lower_bound(gamma, TWO_ATOM, noise, float(eps2))
                assert bound >= bc.C_growth * eps2


def test_anisotropic_bound_reduces_to_isotropic_cost():
    iso = PopulationSpectrum.isotropic()
    for s2 in (0.01, 0.1):
        noise = NoiseLevel(s2)
        th = memorization_threshold(2.0, noise)
        for mult in (1.5, 3.0):
            bound = anisotropic_cost_lower_bound(2.0, iso, noise, mult * th)
            exact = asymptotic_cost(2.0, noise, mult * th).cost
            assert abs(bound - exact) <= 1e-9 * max(exact, 1e-12)


def test_threshold_report_assembles_family():
    report = threshold_report(2.0, NOISE, TWO_ATOM)
    assert report.eps_sigma2 < report.eps_ols2
    assert report.eps_def2 is not None
    assert report.eps_def2 > report.eps_sigma2  # larger condition number raises it here
    plain = threshold_report(2.0, NOISE)
    assert plain.eps_def2 is None
