import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard_neumann.eigen import (EigenError, InadmissibleWeight, NeumannEigensolver,
                                    admissibility_check, weighted_neumann_eigenvalue)
from choquard_neumann.grid import GridFunction, make_domain
from choquard_neumann.quotient import NormCoefficients, equivalence_certificate


def _line(n):
    return make_domain("box", [(0, 1)], n)


def _step(d, a, b, split=0.5):
    """a on (0, split), -b on (split, 1), averaged over each node's dual cell."""
    x = d.points[:, 0]
    h = x[1] - x[0]
    lo = np.clip(x - h / 2, 0, 1)
    hi = np.clip(x + h / 2, 0, 1)
    f = np.clip((split - lo) / (hi - lo), 0, 1)
    return GridFunction(d, a * f - b * (1 - f))


def test_constant_negative_weight_is_inadmissible():
    d = _line(21)
    spec = admissibility_check(GridFunction(d, -np.ones(d.n_nodes)))
    assert not spec.sign_change
    assert spec.mean < 0
    assert not spec.admissible


def test_shifted_linear_weight_is_admissible():
    d = _line(101)
    spec = admissibility_check(GridFunction.from_callable(d, lambda x: x[:, 0] - 0.6))
    assert spec.sign_change
    assert spec.mean == pytest.approx(-0.1, abs=1e-12)
    assert spec.admissible


def test_zero_mean_weight_is_inadmissible():
    d = _line(101)
    spec = admissibility_check(GridFunction.from_callable(d, lambda x: x[:, 0] - 0.5))
    assert spec.mean == pytest.approx(0.0, abs=1e-14)
    assert not spec.admissible
    with pytest.raises(InadmissibleWeight):
        weighted_neumann_eigenvalue(spec)


def test_homogeneity():
    d = _line(201)
    al = _step(d, 1.0, 2.0)
    lam1 = weighted_neumann_eigenvalue(admissibility_check(al)).lambda_alpha
    lam2 = weighted_neumann_eigenvalue(admissibility_check(al * 2.0)).lambda_alpha
    assert lam2 == pytest.approx(lam1 / 2, rel=1e-10)


def test_mirror_symmetry():
    d = make_domain("box", [(0, 1), (0, 1)], (31, 31))
    al = GridFunction.from_callable(d, lambda x: np.cos(np.pi * x[:, 0]) + 0.3 * x[:, 1] - 0.4)
    mirrored = GridFunction.from_callable(
        d, lambda x: np.cos(np.pi * (1 - x[:, 0])) + 0.3 * x[:, 1] - 0.4)
    a = weighted_neumann_eigenvalue(admissibility_check(al)).lambda_alpha
    b = weighted_neumann_eigenvalue(admissibility_check(mirrored)).lambda_alpha
    assert a == pytest.approx(b, rel=1e-10)


def test_piecewise_weight_matches_dense_oracle():
    d = _line(200)
    x = d.points[:, 0]
    alpha = np.where(x < 0.5, 1.0, -3.0)
    res = weighted_neumann_eigenvalue(admissibility_check(GridFunction(d, alpha)))
    # oracle: all eigenpairs of A phi = lam M_alpha phi through a plain dense solve
    A = d.stiffness.toarray()
    Ma = np.diag(d.weights * alpha)
    lams, vecs = sla.eig(A, Ma)
    lams = lams.real
    cands = []
    for lam, v in zip(lams, vecs.T):
        v = v.real * np.sign(v.real.sum())
        if np.isfinite(lam) and lam > 1e-6 and v.min() > 0:
            cands.append(lam)
    assert len(cands) == 1
    assert res.lambda_alpha == pytest.approx(cands[0], rel=1e-10)


def test_positivity_and_residual():
    d = _line(301)
    al = GridFunction.from_callable(d, lambda x: np.cos(np.pi * x[:, 0]) - 0.3)
    res = weighted_neumann_eigenvalue(admissibility_check(al))
    assert res.lambda_alpha > 0
    assert np.all(res.phi.values > 0)
    assert res.residual <= 1e-8
    assert res.others_sign_changing


def test_sparse_path_residual():
    d = make_domain("box", [(0, 1), (0, 1)], (61, 61))
    al = GridFunction.from_callable(
        d, lambda x: np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]) - 0.2)
    res = weighted_neumann_eigenvalue(admissibility_check(al))
    assert np.all(res.phi.values > 0)
    assert res.residual <= 1e-8


def test_grid_refinement_is_second_order():
    lams = []
    for n in (41, 81, 161, 321):
        d = _line(n)
        lams.append(weighted_neumann_eigenvalue(admissibility_check(_step(d, 1.0, 2.0))).lambda_alpha)
    diffs = np.abs(np.diff(lams))
    ratios = diffs[:-1] / diffs[1:]
    assert np.all((ratios >= 3.5) & (ratios <= 4.5))


def test_certificate_brackets_eigenvalue():
    d = _line(101)
    al = _step(d, 1.0, 2.0)
    lam = weighted_neumann_eigenvalue(admissibility_check(al)).lambda_alpha
    below = equivalence_certificate(d, NormCoefficients.from_weight(al, 0.98 * lam))
    above = equivalence_certificate(d, NormCoefficients.from_weight(al, 1.02 * lam))
    assert below.holds
    assert not above.holds


def test_estimator_wrapper():
    d = _line(101)
    al = _step(d, 1.0, 2.0)
    est = NeumannEigensolver().fit(al)
    assert est.lambda_ == pytest.approx(weighted_neumann_eigenvalue(admissibility_check(al)).lambda_alpha)


def test_foreign_domain_rejected():
    al = _step(_line(21), 1.0, 2.0)
    with pytest.raises(ValueError):
        weighted_neumann_eigenvalue(admissibility_check(al), _line(21))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.2, 3.0), extra=st.floats(0.1, 3.0), split=st.floats(0.2, 0.8))
def test_positive_eigenfunction_exists_for_admissible_steps(a, extra, split):
    d = _line(81)
    # choose b so that the mean a*split - b*(1-split) is negative
    b = a * split / (1 - split) + extra
    spec = admissibility_check(_step(d, a, b, split))
    if not spec.admissible:
        return
    try:
        res = weighted_neumann_eigenvalue(spec)
    except EigenError:
        pytest.fail("no positive eigenfunction for an admissible weight")
    assert res.lambda_alpha > 0
    assert res.positivity_margin > 1e-12
