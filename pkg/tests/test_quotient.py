import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard_neumann.bubbles import s_h_constant
from choquard_neumann.exponents import ChoquardExponents, critical_exponents
from choquard_neumann.grid import GridFunction, dirichlet_energy, make_domain
from choquard_neumann.quotient import (CertificateError, NormCoefficients, cherrier_min_constant,
                                       energy, equivalence_certificate, equivalent_norm_sq,
                                       half_box, reflect_halfspace, sobolev_quotient)
from choquard_neumann.riesz import choquard_double_integral

E2 = ChoquardExponents(2, 1.0, p=3.0)


def test_norm_of_linear_function():
    # a Dirichlet face where x1 vanishes makes the form definite without changing u
    d = make_domain("box", [(0, 1), (0, 1)], (9, 9), dirichlet=("x1-",))
    u = GridFunction.from_callable(d, lambda x: x[:, 0])
    assert equivalent_norm_sq(u, NormCoefficients()) == pytest.approx(1.0, rel=1e-12)


def test_negative_a_gives_measure():
    d = make_domain("box", [(0, 1), (0, 2)], (9, 9))
    u = GridFunction(d, np.ones(d.n_nodes))
    assert equivalent_norm_sq(u, NormCoefficients(a=-1.0)) == pytest.approx(2.0, rel=1e-12)


def test_certificate_fails_for_pure_neumann_without_mass():
    d = make_domain("box", [(0, 1)], 20)
    assert not equivalence_certificate(d, NormCoefficients()).holds
    with pytest.raises(CertificateError):
        equivalent_norm_sq(GridFunction(d, np.ones(20)), NormCoefficients())


def test_certificate_tracks_the_spectral_parameter():
    from choquard_neumann.eigen import admissibility_check, weighted_neumann_eigenvalue
    d = make_domain("box", [(0, 1)], 60)
    alpha = GridFunction(d, np.where(d.points[:, 0] < 0.5, 1.0, -2.0))
    lam = weighted_neumann_eigenvalue(admissibility_check(alpha)).lambda_alpha
    inside = NormCoefficients.from_weight(alpha, 0.5 * lam)
    outside = NormCoefficients.from_weight(alpha, 1.5 * lam)
    assert equivalence_certificate(d, inside).holds
    assert not equivalence_certificate(d, outside).holds


def test_robin_term_uses_trace_weights():
    d = make_domain("box", [(0, 1), (0, 1)], (11, 11))
    u = GridFunction(d, np.ones(d.n_nodes))
    # perimeter 4 times b
    assert equivalent_norm_sq(u, NormCoefficients(b=0.5)) == pytest.approx(2.0, rel=1e-12)


def test_quotient_scale_and_sign_invariance():
    rng = np.random.default_rng(0)
    d = make_domain("box", [(0, 1), (0, 1)], (9, 9), dirichlet=("x1+",))
    u = GridFunction(d, rng.normal(size=d.n_nodes))
    c = NormCoefficients(a=0.3)
    q = sobolev_quotient(u, c, E2).Q
    assert sobolev_quotient(u * 7.3, c, E2).Q == pytest.approx(q, rel=1e-12)
    v = GridFunction(d, np.abs(u.values))
    assert sobolev_quotient(-v, c, E2).Q == pytest.approx(sobolev_quotient(v, c, E2).Q, rel=1e-14)


def test_gamma0_values_are_ignored():
    d = make_domain("box", [(0, 1), (0, 1)], (7, 7), dirichlet=("x2+",))
    u = GridFunction.from_callable(d, lambda x: np.sin(np.pi * x[:, 0]) + 0.1)
    v = u.copy()
    v.values[~d.free_mask] = 123.0
    c = NormCoefficients()
    assert sobolev_quotient(v, c, E2).Q == sobolev_quotient(u, c, E2).Q


def test_energy_ray_identity():
    d = make_domain("box", [(0, 1), (0, 1)], (9, 9), dirichlet=("x1-",))
    u = GridFunction.from_callable(d, lambda x: x[:, 0] * (1 + x[:, 1]))
    c = NormCoefficients(a=0.2)
    n2 = equivalent_norm_sq(u, c)
    ch = choquard_double_integral(u, exps=E2)
    t = 2.0
    expect = 0.5 * t * t * n2 - t**6 * ch / 6.0
    assert energy(u * t, c, E2) == pytest.approx(expect, rel=1e-12)
    assert energy(u * 0.0, c, E2) == 0.0


def test_reflection_energy_factor_two():
    d = make_domain("box", [(0, 1), (0, 0.5)], (9, 6))
    v = GridFunction.from_callable(d, lambda x: np.cos(x[:, 0]) * (1 + x[:, 1] ** 2))
    u = reflect_halfspace(v)
    assert dirichlet_energy(u) == pytest.approx(2 * dirichlet_energy(v), rel=1e-12)
    assert half_box(u.domain).shape == d.shape
    assert not np.any(reflect_halfspace(v * 0.0).values)


def test_reflection_choquard_factor_is_below_four():
    # |x - R y|^2 = |x - y|^2 + 4 x_N y_N, so the mirrored cross term is
    # smaller than the direct term and the factor is 2 + 2 X/D < 4
    d = make_domain("box", [(0, 1), (0, 0.5)], (9, 6))
    v = GridFunction.from_callable(d, lambda x: 1.0 + x[:, 0])
    u = reflect_halfspace(v)
    fac = choquard_double_integral(u, exps=E2) / choquard_double_integral(v, exps=E2)
    assert 2.0 < fac < 3.5


def test_reflection_rejects_asymmetric_grid():
    d = make_domain("box", [(0, 1), (0.1, 0.5)], (5, 5))
    with pytest.raises(ValueError, match="asymmetric"):
        reflect_halfspace(GridFunction(d, np.ones(25)))


def test_cherrier_constants_family():
    d = make_domain("box", [(0, 1)] * 3, (7, 7, 7))
    e = critical_exponents(3, 1.0)
    one = GridFunction(d, np.ones(d.n_nodes))
    val = cherrier_min_constant([one], 0.1, e)
    D = choquard_double_integral(one, exps=e)
    assert val == pytest.approx(D ** (1 / e.power) / d.measure, rel=1e-12)
    u = GridFunction.from_callable(d, lambda x: np.sin(3 * x[:, 0]))
    assert cherrier_min_constant([u], 1e6, e) < 0


def test_half_bubble_beats_the_boundary_constant():
    # on concentrating half-ball bubbles |v|_0^2 / int|grad v|^2 tends to
    # 1.077 times 2^{(p-2)/p}/S_H, so the inequality with that constant fails
    e = critical_exponents(4, 2.0)
    d = make_domain("radial-half-ball", [(0, 1)], 600, dim=4, grading="geometric", r_min=1e-6)
    lead = e.threshold_factor / s_h_constant(e)
    ratios, consts = [], []
    for delta in (1e-2, 3e-3, 1e-3):
        r = d.radii
        v = GridFunction(d, (delta**2 + r**2) ** -1.0 * np.clip(1 - (r / 0.5) ** 2, 0, None) ** 2)
        csq = choquard_double_integral(v, exps=e) ** (1 / e.power)
        ratios.append(csq / (lead * dirichlet_energy(v)))
        consts.append(cherrier_min_constant([v], 0.005, e))
    assert ratios[-1] == pytest.approx(1.077, abs=0.01)
    assert consts[0] < consts[1] < consts[2]
    assert consts[2] > 5 * consts[0]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_positive_quotient_under_certificate(seed):
    rng = np.random.default_rng(seed)
    d = make_domain("box", [(0, 1), (0, 1)], (6, 6), dirichlet=("x2-",))
    c = NormCoefficients(a=rng.uniform(-1, 2))
    if not equivalence_certificate(d, c).holds:
        return
    u = GridFunction(d, rng.random(d.n_nodes) + 1e-3)
    assert sobolev_quotient(u, c, E2).Q > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_sign_removal_never_increases_the_quotient(seed):
    # the stiffness form is a positive sum over edges of (u_i - u_j)^2 and
    # ||u_i| - |u_j|| <= |u_i - u_j|
    rng = np.random.default_rng(seed)
    d = make_domain("box", [(0, 1), (0, 1)], (6, 6), dirichlet=("x2+",))
    u = GridFunction(d, rng.normal(size=d.n_nodes))
    c = NormCoefficients(a=0.5)
    assert sobolev_quotient(abs(u), c, E2).Q <= sobolev_quotient(u, c, E2).Q * (1 + 1e-12)
