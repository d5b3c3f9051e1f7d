import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard_neumann.bubbles import (BubbleSpec, beta_tail_integrals, beta_total, bubble_eval,
                                      bubble_integrals, energy_bound, hls_sharp_constant,
                                      quotient_threshold, s_h_constant, sobolev_closed_form,
                                      sobolev_constant)
from choquard_neumann.exponents import ChoquardExponents, DimensionError, critical_exponents
from choquard_neumann.grid import GridFunction, make_domain
from choquard_neumann.quotient import NormCoefficients, sobolev_quotient


def test_bubble_centre_tail_and_dilation():
    b1 = BubbleSpec(4, 1.0, center=(0.5, 0, 0, 0))
    b = BubbleSpec(4, 0.2, center=(0.5, 0, 0, 0))
    x0 = np.array([0.5, 0, 0, 0])
    assert bubble_eval(b, x0) == pytest.approx(0.2 ** -1.0 * bubble_eval(b1, x0), rel=1e-14)
    z = np.array([0.3, -0.1, 0.7, 0.2])
    assert bubble_eval(b, x0 + 0.2 * z) == pytest.approx(0.2 ** -1.0 * bubble_eval(b1, x0 + z), rel=1e-13)
    far = [bubble_eval(b1, x0 + np.array([R, 0, 0, 0])) * R**2 for R in (1e3, 1e4, 1e5)]
    assert far[1] == pytest.approx(far[2], rel=1e-6)


def test_bubble_rejects_bad_input():
    with pytest.raises(DimensionError):
        BubbleSpec(2)
    with pytest.raises(ValueError):
        BubbleSpec(3, epsilon=0.0)


def test_sobolev_constant_values():
    assert sobolev_constant(4) == pytest.approx(10.2604, abs=1e-4)
    for N in (3, 4, 5, 7):
        assert sobolev_constant(N) == pytest.approx(sobolev_closed_form(N), rel=1e-10)


@pytest.mark.parametrize("eps", [1.0, 0.3, 0.1, 0.01])
def test_bubble_identity(eps):
    g, c = bubble_integrals(4, eps)
    S = sobolev_constant(4)
    assert g / c == pytest.approx(1.0, abs=1e-8)
    assert g == pytest.approx(S**2, rel=1e-8)


def test_hls_constant_values_and_limits():
    assert hls_sharp_constant(critical_exponents(4, 2.0)) == pytest.approx(3.8476, abs=1e-4)
    # the kernel degenerates to 1 and C to 1
    assert hls_sharp_constant(critical_exponents(5, 1e-9)) == pytest.approx(1.0, abs=1e-7)


def test_s_h_value_and_threshold():
    e = critical_exponents(4, 2.0)
    assert s_h_constant(e) == pytest.approx(6.5479, abs=1e-4)
    assert quotient_threshold(e) == pytest.approx(s_h_constant(e) / 2 ** (1 / 3), rel=1e-14)
    assert energy_bound(e) == pytest.approx(s_h_constant(e) ** 1.5 / (3 * np.sqrt(2)), rel=1e-13)


@pytest.mark.parametrize("N", [3, 4, 6])
def test_s_h_decreases_in_mu(N):
    vals = [s_h_constant(critical_exponents(N, m)) for m in np.linspace(0.05, N - 0.05, 25)]
    assert np.all(np.diff(vals) < 0)


def test_beta_tails():
    e = critical_exponents(4, 2.0)
    assert beta_total(4) == pytest.approx(1.0 / 12, rel=1e-14)
    head, tail = beta_tail_integrals(e, np.inf)
    assert head == pytest.approx(1.0 / 12) and tail == 0.0
    head, tail = beta_tail_integrals(e, 0.0)
    assert head == 0.0 and tail == pytest.approx(1.0 / 12)
    # tail ~ cutoff^{-N}/N
    c = 1e4
    assert beta_tail_integrals(e, c)[1] * c**4 == pytest.approx(0.25, rel=1e-6)
    from scipy.integrate import quad
    h, t = beta_tail_integrals(e, 2.5)
    f = lambda r: r**3 / (1 + r * r) ** 4
    assert h == pytest.approx(quad(f, 0, 2.5, epsabs=0, epsrel=1e-13)[0], rel=1e-11)
    assert t == pytest.approx(quad(f, 2.5, np.inf, epsabs=0, epsrel=1e-13)[0], rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 50.0))
def test_beta_split_sums_to_total(c):
    e = critical_exponents(5, 1.0)
    h, t = beta_tail_integrals(e, c)
    assert h + t == pytest.approx(beta_total(5), rel=1e-12)


def test_bubble_quotient_on_large_radial_ball():
    e = critical_exponents(4, 2.0)
    d = make_domain("radial-ball", [(0, 200.0)], 1500, dim=4, grading="geometric", r_min=1e-3)
    u = GridFunction(d, (1 + d.radii**2) ** -1.0)
    rep = sobolev_quotient(u, NormCoefficients(), e)
    assert rep.Q == pytest.approx(s_h_constant(e), rel=0.02)


def test_low_dimension_constants_refused():
    with pytest.raises(DimensionError):
        s_h_constant(ChoquardExponents(2, 1.0, p=3.0))
