"""The weighted Neumann eigenvalue lambda(alpha).

The discrete problem is A phi = lambda M_alpha phi with A the Neumann
stiffness matrix and M_alpha = diag(w alpha).  M_alpha is indefinite, so the
pencil is shifted: for 0 < sigma < lambda(alpha) the matrix B = A - sigma M_alpha
is positive definite (it is the equivalent-norm form), and

    M_alpha phi = nu B phi,   lambda = sigma + 1/nu

is a symmetric-definite problem with real spectrum.  lambda(alpha) is the
eigenvalue with a one-signed eigenvector other than the trivial lambda = 0
(constants).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu
from sklearn.base import BaseEstimator

from .grid import GridDomain, GridFunction, integrate

POSITIVITY_RTOL = 1e-12
MEAN_RTOL = 1e-12
_DENSE_LIMIT = 2500


class EigenError(RuntimeError):
    """No positive eigenfunction was found in the computed window."""


class InadmissibleWeight(ValueError):
    """alpha does not change sign or does not have negative mean."""


@dataclass(frozen=True)
class WeightSpec:
    alpha: GridFunction
    mean: float
    sign_change: bool

    @property
    def admissible(self) -> bool:
        # a mean within roundoff of zero counts as zero
        return self.sign_change and self.mean < -MEAN_RTOL * integrate(abs(self.alpha))


def admissibility_check(alpha: GridFunction) -> WeightSpec:
    """Flag whether alpha changes sign and has negative integral."""
    v = alpha.values
    return WeightSpec(alpha, integrate(alpha), bool(np.any(v > 0) and np.any(v < 0)))


@dataclass(frozen=True)
class EigenResult:
    lambda_alpha: float
    phi: GridFunction
    residual: float
    positivity_margin: float
    others_sign_changing: bool
    window: np.ndarray

    def __iter__(self):
        return iter((self.lambda_alpha, self.phi))


def _is_definite(B):
    try:
        if sp.issparse(B):
            lu = splu(B.tocsc(), diag_pivot_thresh=0.0, permc_spec="MMD_AT_PLUS_A")
            d = lu.U.diagonal()
            return bool(np.all(d > 0))
        sla.cholesky(B)
        return True
    except (np.linalg.LinAlgError, RuntimeError):
        return False


def _choose_shift(A, Ma, w):
    """First sigma in a halving sequence with A - sigma M_alpha definite.

    Definiteness holds exactly for 0 < sigma < lambda(alpha); the sequence
    starts at max diag(W^{-1} A) / max|alpha|.
    """
    sigma = float((A.diagonal() / w).max() / np.abs(Ma.diagonal() / w).max())
    for _ in range(200):
        if _is_definite(A - sigma * Ma):
            return sigma
        sigma *= 0.5
    raise EigenError("could not find a definite shift; is the mean of alpha negative?")


def _residual(A, Ma, w, lam, phi):
    r = (A @ phi - lam * (Ma @ phi)) / w
    return float(np.sqrt(w @ r**2) / np.sqrt(w @ phi**2))


def weighted_neumann_eigenvalue(spec: WeightSpec, domain: GridDomain | None = None, *,
                                n_eigs=8) -> EigenResult:
    """lambda(alpha) and its positive eigenfunction on the Neumann grid.

    Parameters
    ----------
    spec : WeightSpec
        From :func:`admissibility_check`; must be admissible.
    domain : GridDomain, optional
        Defaults to the domain of ``spec.alpha``.  Dirichlet tags are ignored:
        the eigenproblem is pure Neumann.
    n_eigs : int
        Size of the spectral window on the sparse path.
    """
    if not spec.admissible:
        raise InadmissibleWeight("alpha must change sign and have negative mean")
    d = spec.alpha.domain if domain is None else domain
    if d is not spec.alpha.domain:
        raise ValueError("alpha lives on another domain")
    w = d.weights
    A = d.stiffness.tocsc()
    Ma = sp.diags(w * spec.alpha.values).tocsc()
    sigma = _choose_shift(A, Ma, w)
    B = (A - sigma * Ma).tocsc()
    if d.n_nodes <= _DENSE_LIMIT:
        nu, vecs = sla.eigh(Ma.toarray(), B.toarray())
    else:
        k = min(n_eigs, d.n_nodes - 2)
        nu, vecs = eigsh(Ma, k=k, M=B, which="BE")
    keep = nu != 0
    nu, vecs = nu[keep], vecs[:, keep]
    lams = sigma + 1.0 / nu
    order = np.argsort(lams)
    lams, vecs = lams[order], vecs[:, order]
    # the constant mode (lambda = 0) is one-signed but trivial; 0 < lambda(alpha) and
    # sigma < lambda(alpha), so the cut is relative to sigma, not to the spectral spread
    trivial = np.abs(lams) <= 1e-6 * sigma
    pick = None
    signs = []
    for i in range(len(lams)):
        v = vecs[:, i]
        v = v if v.sum() >= 0 else -v
        one_signed = v.min() > POSITIVITY_RTOL * v.max()
        signs.append(one_signed)
        if one_signed and pick is None and lams[i] > 0 and not trivial[i]:
            pick = i
    if pick is None:
        raise EigenError("no positive eigenfunction in the computed spectral window")
    phi = vecs[:, pick]
    phi = phi if phi.sum() >= 0 else -phi
    lam = float(lams[pick])
    if d.n_nodes > _DENSE_LIMIT:
        # eigsh stops at a loose tolerance; a few inverse-iteration steps on the
        # factored shift restore the residual
        lu = splu(B, permc_spec="MMD_AT_PLUS_A")
        for _ in range(4):
            phi = lu.solve(Ma @ phi)
            phi = phi / np.abs(phi).max()
        lam = float(phi @ (A @ phi) / (phi @ (Ma @ phi)))
    phi = phi / np.sqrt(w @ phi**2)
    others = all(not s for i, s in enumerate(signs) if i != pick and not trivial[i])
    return EigenResult(lam, GridFunction(d, phi), _residual(A, Ma, w, lam, phi),
                       float(phi.min() / phi.max()), others, lams)


class NeumannEigensolver(BaseEstimator):
    """Estimator wrapper: ``fit(alpha)`` solves for lambda(alpha).

    Parameters
    ----------
    n_eigs : int
        Spectral window on the sparse path.
    """

    def __init__(self, n_eigs=8):
        self.n_eigs = n_eigs

    def fit(self, alpha: GridFunction, y=None):
        res = weighted_neumann_eigenvalue(admissibility_check(alpha), n_eigs=self.n_eigs)
        self.lambda_ = res.lambda_alpha
        self.eigenfunction_ = res.phi
        self.residual_ = res.residual
        self.positivity_margin_ = res.positivity_margin
        return self
