import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from charval.contours import Annulus, Rectangle, SectorRegion
from charval.core import ContourHitError, ContractError, ParameterError, SpectralProfile
from charval.counting import (CountingReport, LawDescriptor, bands_decrease, count_eigs,
                              count_scaled, count_sector, dyadic_sector_counts, eps_schedule,
                              find_ratio_subsequence, fit_law, free_region_scan,
                              verify_sector_asymptotics, verify_small_domain_theorem)
from charval.models import make_synthetic, pencil_charvals, polynomial_family


def constant(eigs):
    return polynomial_family([np.diag(np.asarray(eigs, float))], a0_selfadjoint=True)


def synthetic(**kw):
    spec = {"dim": 40, "eig_law": {"kind": "power", "gamma": 0.5}, "perturbation_scale": 0.3,
            "seed": 5}
    spec.update(kw)
    return make_synthetic(spec)


# -- eigenvalue counts -----------------------------------------------------

def test_count_eigs_examples():
    prof = SpectralProfile(tuple(2.0 ** -np.arange(10)))
    assert count_eigs(prof, (0.1, 1.0)) == 4
    assert count_eigs(SpectralProfile(()), (0.1, 1.0)) == 0
    assert count_eigs(prof, (-1, 1)) == 10


# -- N on scaled domains and sectors ----------------------------------------

def test_count_scaled_constant_family():
    eigs = [0.9, 0.45, 0.3, 0.12, -0.4]
    F = constant(eigs)
    omega = Rectangle(1.0, 2.0, -0.5, 0.5)
    for s in (0.5, 0.25, 0.1):
        assert count_scaled(F, omega, s) == sum(s <= e <= 2 * s for e in eigs)
    with pytest.raises(ContourHitError):
        count_scaled(F, omega, 0.45)


def test_count_scaled_off_axis_is_empty():
    fam = synthetic()
    assert count_scaled(fam, Rectangle(1.0, 2.0, 0.5, 1.5), 1e-3) == 0


def test_count_scaled_quadratic_matches_det_roots():
    fam = synthetic(order=2, seed=11)
    coeffs = (fam(0), fam.derivative(0), 0.5 * (fam.derivative(1.0) - fam.derivative(0)))
    roots = pencil_charvals(coeffs)
    omega = Annulus(1.0, 2.0, phi0=-0.7, span=1.4)
    for s in (0.2, 0.05, 0.01):
        inside = [z for z in roots if s < abs(z) < 2 * s and abs(np.angle(z)) < 0.7]
        assert count_scaled(fam, omega, s) == len(inside)


def test_count_scaled_rejects_origin():
    with pytest.raises(ParameterError):
        count_scaled(constant([0.5]), Rectangle(-1, 1, -1, 1), 0.1)


def test_count_sector_constant_matches_eigs():
    eigs = 3.0 ** -np.arange(8)
    prof = SpectralProfile(tuple(eigs))
    F = constant(eigs)
    for theta in (0.05, 0.5, 2.0):
        assert count_sector(F, theta, 2e-3, 0.9) == prof.count(2e-3, 0.9)


def test_count_sector_matches_brute_force():
    fam = synthetic()
    roots = pencil_charvals((fam(0), fam.derivative(0)))
    theta, r = 0.5, 5e-3
    expected = sum(r <= z.real <= 1 and abs(z.imag) <= theta * z.real for z in roots)
    assert count_sector(fam, theta, r, 1.0) == expected


def test_count_sector_negative_side():
    fam = synthetic(signs="alternating")
    prof = fam.spectral_profile()
    roots = pencil_charvals((fam(0), fam.derivative(0)))
    theta, r = 0.5, 5e-3
    expected = sum(r <= -z.real <= 1 and abs(z.imag) <= -theta * z.real for z in roots)
    got = count_sector(fam, theta, r, 1.0, side=-1)
    assert got == expected
    assert abs(got - prof.count(-1, -r)) <= 2


def test_dyadic_additivity():
    fam = synthetic(seed=2)
    parts = dyadic_sector_counts(fam, 0.4, 1e-3, 1.0)
    assert sum(parts) == count_sector(fam, 0.4, 1e-3, 1.0)
    assert len(parts) >= 9


# -- harnesses ------------------------------------------------------------------

def test_small_domain_constant_family():
    eigs = 2.0 ** -np.arange(12)
    F = constant(eigs)
    rep = verify_small_domain_theorem(F, Rectangle(0.7, 1.9, -0.5, 0.5), 2.0 ** -np.arange(8),
                                      F.spectral_profile())
    assert rep.extra["discrepancy"] == [0] * 8
    assert rep.meta["violations"] == 0


def test_small_domain_off_axis():
    fam = synthetic()
    rep = verify_small_domain_theorem(fam, Rectangle(1.0, 2.0, 0.5, 1.5), [1e-2, 1e-3],
                                      fam.spectral_profile())
    assert rep.charval_counts == [0, 0]
    assert rep.eig_counts == [0, 0]


def test_small_domain_affine_model():
    fam = make_synthetic({"dim": 100, "eig_law": {"kind": "power", "gamma": 0.5},
                          "perturbation_scale": 0.3, "seed": 4})
    s_grid = 2.0 ** -np.arange(2, 12)
    rep = verify_small_domain_theorem(fam, Rectangle(1.0, 2.0, -0.5, 0.5), s_grid,
                                      fam.spectral_profile())
    rel = [abs(d) / n for d, n in zip(rep.extra["discrepancy"], rep.eig_counts) if n]
    assert np.mean(rel[-3:]) <= np.mean(rel[:3]) + 1e-12
    assert np.mean(rel[-3:]) <= 0.2


def test_sector_asymptotics_constant_ratios():
    eigs = 2.0 ** -np.arange(15)
    F = constant(eigs)
    rep = verify_sector_asymptotics(F, F.spectral_profile(), 0.3, np.geomspace(1e-4, 0.5, 12))
    assert all(q == 1.0 for q in rep.ratios)


def test_sector_asymptotics_geometric_law():
    fam = make_synthetic({"dim": 60, "eig_law": {"kind": "geometric", "base": 2},
                          "perturbation_scale": 0.2, "seed": 8})
    rep = verify_sector_asymptotics(fam, fam.spectral_profile(), 0.5, np.geomspace(1e-12, 1e-2, 25))
    assert rep.fitted_law.form == "log-power"
    assert rep.fitted_law.gamma == pytest.approx(1.0, rel=0.1)
    assert "power" in rep.meta["fits"]


def test_sector_asymptotics_power_law():
    fam = make_synthetic({"dim": 300, "eig_law": {"kind": "power", "gamma": 0.5},
                          "perturbation_scale": 0.2, "seed": 8})
    rep = verify_sector_asymptotics(fam, fam.spectral_profile(), 0.5, np.geomspace(2e-5, 1e-2, 15))
    assert rep.fitted_law.form == "power"
    assert rep.fitted_law.gamma == pytest.approx(0.5, rel=0.1)


def test_ratio_undefined_when_no_eigenvalues():
    F = constant([0.5])
    rep = verify_sector_asymptotics(F, F.spectral_profile(), 0.3, [0.9, 0.7, 0.1])
    assert math.isnan(rep.ratios[0])
    assert rep.meta["undefined_ratios"] == [0.9, 0.7]


# -- free regions -----------------------------------------------------------------

def test_free_region_positive_model():
    fam = synthetic(seed=12)
    rep = free_region_scan(fam, np.geomspace(1e-3, 0.8, 5), [0.5], sign=1)
    assert rep.ok and rep.values
    assert all(v.location.real > 0 for v in rep.values)
    assert np.isfinite(rep.resolvent_max["0.5"])


def test_free_region_finite_rank():
    A0 = np.diag([0.8, 0.5, 0.3, 0, 0, 0, 0, 0]).astype(complex)
    rng = np.random.default_rng(3)
    A1 = 0.05 * (rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    fam = polynomial_family((A0, A1), a0_selfadjoint=True)
    rep = free_region_scan(fam, np.geomspace(1e-4, 0.1, 4), [0.3])
    assert rep.values == []


def test_free_region_indefinite():
    fam = synthetic(signs="alternating", seed=6)
    rep = free_region_scan(fam, np.geomspace(1e-3, 0.8, 4), [0.5])
    re = [v.location.real for v in rep.values]
    assert min(re) < 0 < max(re)
    assert rep.ok


def test_sign_rule_over_random_draws():
    violations = 0
    for seed in range(200):
        fam = make_synthetic({"dim": 8, "eig_law": {"kind": "geometric", "base": 3},
                              "perturbation_scale": 0.3, "seed": seed,
                              "signs": "negative" if seed % 2 else "positive"})
        sign = -1 if seed % 2 else 1
        rep = free_region_scan(fam, [1e-3, 0.9], [], sign=sign)
        violations += sum(1 for v in rep.violations if v["rule"] == "sign")
    assert violations == 0


def test_eps_schedule_and_bands():
    assert eps_schedule(1e-8) == 0.2
    assert eps_schedule(1.0, C=2.0) == 2.0
    assert bands_decrease([0.3, 0.2, math.nan, 0.21, 0.1])
    assert not bands_decrease([0.1, 0.3])


# -- laws and reports -------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["power", "log-power", "log-over-loglog"]), st.floats(0.5, 20),
       st.floats(0.3, 2.0))
def test_fit_law_recovers_exact_curves(form, C, gamma):
    law = LawDescriptor(form, C, None if form == "log-over-loglog" else gamma)
    r = np.geomspace(1e-12, 1e-3, 30)
    best, fits = fit_law(r, law(r))
    got = fits[form]
    assert got.residual <= 1e-9
    assert got.C == pytest.approx(C, rel=1e-8)
    if got.gamma is not None:
        assert got.gamma == pytest.approx(gamma, rel=1e-8)
    assert best.residual <= 1e-9


def test_law_descriptor_validation():
    with pytest.raises(ParameterError):
        LawDescriptor("exp", 1.0, 1.0)
    with pytest.raises(ParameterError):
        LawDescriptor("power", -1.0, 1.0)
    with pytest.raises(ParameterError):
        LawDescriptor("power", 1.0, None)
    assert LawDescriptor("log-power", 1 / math.log(2), 1.0)(0.25) == pytest.approx(2.0)


def test_report_contract_and_serialisation(tmp_path):
    with pytest.raises(ContractError):
        CountingReport([0.1], [-1], [0], [math.nan])
    rep = CountingReport([0.5, 0.1], [1, 3], [1, 3], [1.0, 1.0],
                         LawDescriptor("power", 1.0, 0.5), extra={"flag": [False, True]})
    rep.to_csv(tmp_path / "c.csv", {"seed": 1})
    rep.to_json(tmp_path / "c.json", {"seed": 1})
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("# config:")
    assert lines[1] == "scale,N,n,ratio,flag"
    assert lines[3] == "0.10000000000000001,3,3,1,1"


def test_find_ratio_subsequence():
    sub = find_ratio_subsequence([1e-1, 1e-2, 1e-3], [1.5, 1.05, math.nan], 0.1)
    assert sub == [(1e-2, 1.05)]
