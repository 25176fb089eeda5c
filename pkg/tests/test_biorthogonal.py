import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncve import biorthogonal as bio
from ncve import parabolic as par
from ncve.errors import PreconditionViolated, SeriesDiverged
from ncve.moment_gramian import min_energy


@pytest.fixture(scope="module")
def fam8():
    return bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, 2.0))


def test_family_exponents():
    fam = bio.parabolic_family(0.5, 8, 2.0)
    assert fam.exponents == (0.0, 0.5, 3.0, 3.5, 8.0, 8.5, 15.0, 15.5)
    assert fam.next_exponent == 24.0


def test_biorthogonality_by_quadrature(fam8):
    """Residuals checked with tanh-sinh quadrature instead of closed-form moments."""
    lam = fam8.family.exponents
    with mp.workdps(fam8.dps):
        for m in (0, 3, 7):
            psi = fam8.members[m]
            f = lambda t: mp.fsum(c * mp.exp(-l * t) for c, l in zip(psi.coeffs, psi.exponents))
            for k in range(len(lam)):
                val = mp.quad(lambda t: f(t) * mp.exp(-lam[k] * t), [0, 0.5, 2])
                assert abs(val - (1 if m == k else 0)) < mp.mpf(10) ** -20


def test_residual_matrix_small(fam8):
    assert fam8.max_residual < 1e-30
    assert fam8.gram_cond > 1e6


def test_norms_grow_slowly(fam8):
    assert 0 < bio.norm_growth_slope(fam8) < 0.5


def test_norms_nonincreasing_in_horizon():
    prev = None
    for T in (1.0, 2.0, 4.0, 8.0):
        norms = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 6, T)).norms()
        if prev is not None:
            assert np.all(norms <= prev * (1 + 1e-12))
        prev = norms


@given(shifts=st.lists(st.floats(0.05, 0.95), min_size=1, max_size=2, unique=True))
@settings(max_examples=15, deadline=None)
def test_members_biorthogonal_for_generated_rules(shifts):
    shifts = sorted(set([1.0] + shifts))
    if any(b - a < 0.05 for a, b in zip(shifts, shifts[1:])):
        return
    fam = bio.generate_family(bio.interleaved_square_rule(shifts), 5, 3.0)
    bf = bio.min_norm_biorthogonal(fam)
    assert bf.max_residual < 1e-20


def test_summability():
    assert bio.summability_check(bio.interleaved_square_rule())["summable"]
    linear = bio.summability_check(lambda r: [float(r)])
    assert not linear["summable"]
    assert linear["tail_estimate"] == math.inf


def test_bad_family_rejected():
    with pytest.raises(ValueError):
        bio.ExponentialFamily((0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        bio.ExponentialFamily((-1.0, 0.5), 1.0)


def test_periodic_extension_identities():
    unit = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, 1.0))
    psi = unit.members[0]
    for N in (4, 16):
        pe = bio.periodic_extension(psi, N, unit.family)
        assert pe.norm_sq() == pytest.approx(N * psi.norm_sq(), rel=1e-12)
        assert abs(pe.integral() - N) < 1e-20
        for lam in unit.family.exponents[1:]:
            assert abs(pe.moment(lam)) < 1e-20
        # pointwise repetition
        t = np.array([0.25, 1.25, N - 0.75])
        vals = pe(t)
        assert np.allclose(vals, vals[0], rtol=1e-12)


def test_periodic_extension_preconditions():
    wide = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 4, 2.0))
    with pytest.raises(PreconditionViolated):
        bio.periodic_extension(wide.members[0], 4, wide.family)
    shifted = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 4, 1.0).shifted(0.5))
    with pytest.raises(PreconditionViolated):
        bio.periodic_extension(shifted.members[0], 4, shifted.family)


@pytest.fixture(scope="module")
def heat_modes():
    sys, _ = par.to_modal(par.ParabolicSystem([1, 0, 0, 0.5], [1, 1], 4))
    return sys


def test_series_equals_min_norm_without_zero_mode(heat_modes):
    y0 = np.r_[0.0, np.ones(7)]
    T = 3.0
    bf = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, T))
    s = bio.moment_series_solution(heat_modes, y0, T, bf)
    assert not s.info["periodic"]
    assert s.moment_residuals.max() < 1e-30
    assert s.energy == pytest.approx(min_energy(heat_modes, y0, T).energy, rel=1e-9)


def test_periodic_series_energy_scales_like_one_over_N(heat_modes):
    energies = []
    for N in (4, 8, 16):
        bf = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, float(N)))
        s = bio.moment_series_solution(heat_modes, np.ones(8), float(N), bf)
        assert s.info["periodic"] and s.moment_residuals.max() < 1e-30
        energies.append(s.energy)
    slope = np.polyfit(np.log([4, 8, 16]), np.log(energies), 1)[0]
    assert slope == pytest.approx(-1.0, abs=1e-3)


def test_series_cauchy_check(heat_modes):
    bf = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, 3.0))
    with pytest.raises(SeriesDiverged):
        bio.moment_series_solution(heat_modes, np.r_[0.0, np.ones(7)], 3.0, bf, cauchy_tol=1e-40)


def test_series_needs_integer_horizon_for_zero_mode(heat_modes):
    bf = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, 2.5))
    with pytest.raises(PreconditionViolated):
        bio.moment_series_solution(heat_modes, np.ones(8), 2.5, bf)


def test_csv_output(tmp_path, fam8):
    path = tmp_path / "fam.csv"
    fam8.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("index,exponent,norm") and len(lines) == 9
