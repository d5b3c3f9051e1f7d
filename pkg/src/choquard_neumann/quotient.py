"""Equivalent norm, Sobolev quotient, energy, reflections and the Cherrier constant.

The discrete space is the set of grid functions vanishing on the Dirichlet
nodes Gamma_0.  Values given on Gamma_0 nodes are ignored (treated as zero)
by every quantity in this module.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .bubbles import s_h_constant
from .exponents import ChoquardExponents
from .grid import GridDomain, GridFunction, dirichlet_energy, integrate, make_domain
from .riesz import choquard_double_integral

CERT_TOL = 1e-9
_DENSE_EIG_LIMIT = 3000


class CertificateError(ValueError):
    """The quadratic form is not positive definite: it does not define a norm."""


@dataclass(frozen=True, eq=False)
class NormCoefficients:
    """Coefficients of ||u||^2 = int |grad u|^2 - int a u^2 + int_{Gamma_1} b u^2.

    Parameters
    ----------
    a : array_like or float
        Bulk weight per node.
    b : array_like or float
        Boundary weight per node (only Gamma_1 trace weights see it).
    lam : float, optional
        Spectral parameter when ``a = lam * alpha``.
    alpha : array_like, optional
        Weight alpha.
    """

    a: np.ndarray | float = 0.0
    b: np.ndarray | float = 0.0
    lam: float | None = None
    alpha: np.ndarray | None = None

    @classmethod
    def from_weight(cls, alpha, lam, b=0.0):
        al = alpha.values if isinstance(alpha, GridFunction) else np.asarray(alpha, float)
        return cls(lam * al, b, float(lam), al)

    def arrays(self, domain: GridDomain):
        a = self.a.values if isinstance(self.a, GridFunction) else self.a
        b = self.b.values if isinstance(self.b, GridFunction) else self.b
        a = np.broadcast_to(np.asarray(a, float), (domain.n_nodes,))
        b = np.broadcast_to(np.asarray(b, float), (domain.n_nodes,))
        if self.alpha is not None and self.lam is not None:
            if not np.allclose(a, self.lam * np.asarray(self.alpha), rtol=1e-14, atol=0):
                raise ValueError("a must equal lam * alpha")
        return a, b

    def key(self, domain) -> bytes:
        a, b = self.arrays(domain)
        return hashlib.sha256(np.ascontiguousarray(a).tobytes()
                              + np.ascontiguousarray(b).tobytes()).digest()


def form_matrix(domain: GridDomain, coeffs: NormCoefficients) -> sp.csr_matrix:
    """Symmetric matrix of the quadratic form on all nodes."""
    a, b = coeffs.arrays(domain)
    return (domain.stiffness - sp.diags(domain.weights * a)
            + sp.diags(domain.boundary_weights * b)).tocsr()


def free_form(domain, coeffs):
    F = domain.free_mask
    return form_matrix(domain, coeffs)[F][:, F].tocsc()


@dataclass(frozen=True)
class Certificate:
    min_eigenvalue: float
    holds: bool


def equivalence_certificate(domain: GridDomain, coeffs: NormCoefficients, tol=CERT_TOL) -> Certificate:
    """Smallest eigenvalue of the form relative to the lumped mass on free nodes."""
    key = ("cert", coeffs.key(domain), tol)
    hit = domain._cache.get(key)
    if hit is not None:
        return hit
    F = domain.free_mask
    K = free_form(domain, coeffs)
    W = domain.weights[F]
    if K.shape[0] <= _DENSE_EIG_LIMIT:
        s = 1.0 / np.sqrt(W)
        lam_min = sla.eigvalsh((K.toarray() * s[:, None]) * s[None, :], subset_by_index=[0, 0])[0]
    else:
        a, _ = coeffs.arrays(domain)
        shift = -(np.max(np.abs(a)) + 1.0)
        lam_min = eigsh(K, k=1, M=sp.diags(W).tocsc(), sigma=shift, which="LM",
                        return_eigenvectors=False)[0]
    cert = Certificate(float(lam_min), bool(lam_min > tol))
    domain._cache[key] = cert
    return cert


def _restricted(u: GridFunction) -> np.ndarray:
    v = u.values.copy()
    v[~u.domain.free_mask] = 0.0
    return v


def equivalent_norm_sq(u: GridFunction, coeffs: NormCoefficients) -> float:
    """||u||^2; raises :class:`CertificateError` when the form is not positive definite."""
    cert = equivalence_certificate(u.domain, coeffs)
    if not cert.holds:
        raise CertificateError(f"form not positive definite (min eigenvalue {cert.min_eigenvalue:.3e})")
    v = _restricted(u)
    return float(v @ (form_matrix(u.domain, coeffs) @ v))


@dataclass(frozen=True)
class QuotientReport:
    norm_sq: float
    choquard_sq: float
    Q: float
    J: float


def _choquard_parts(u, exps, **kw):
    v = GridFunction(u.domain, np.abs(_restricted(u)))
    n = choquard_double_integral(v, exps.power, exps, **kw)
    return n, max(n, 0.0) ** (1.0 / exps.power)


def sobolev_quotient(u: GridFunction, coeffs: NormCoefficients, exps: ChoquardExponents,
                     **kw) -> QuotientReport:
    """Q(u) = ||u||^2 / ||u||_0^2 together with J(u).

    The Choquard term is evaluated on |u|, so Q(u) = Q(|u|) whenever the
    gradient form does not distinguish the two.
    """
    if not np.any(_restricted(u)):
        raise ValueError("the quotient is undefined for the zero function")
    norm_sq = equivalent_norm_sq(u, coeffs)
    n, csq = _choquard_parts(u, exps, **kw)
    p = exps.power
    return QuotientReport(norm_sq, csq, norm_sq / csq, 0.5 * norm_sq - n / (2.0 * p))


def energy(u: GridFunction, coeffs: NormCoefficients, exps: ChoquardExponents, **kw) -> float:
    """J(u) = ||u||^2/2 - ||u||_0^{2p}/(2p)."""
    v = _restricted(u)
    if not np.any(v):
        return 0.0
    norm_sq = float(v @ (form_matrix(u.domain, coeffs) @ v))
    n, _ = _choquard_parts(u, exps, **kw)
    return 0.5 * norm_sq - n / (2.0 * exps.power)


def half_box(domain: GridDomain) -> GridDomain:
    """Upper half (x_N >= 0) of a mirror-symmetric box."""
    if domain.kind != "reflected-pair":
        raise ValueError("expected a reflected-pair domain")
    ext = list(domain.extents)
    ext[-1] = (0.0, ext[-1][1])
    res = list(domain.resolution)
    res[-1] = (res[-1] + 1) // 2
    return make_domain("box", ext, res, dirichlet=domain.dirichlet)


def reflect_halfspace(v: GridFunction) -> GridFunction:
    """Even reflection of a function on {x_N >= 0} across x_N = 0.

    The half box must have its last axis starting at 0 and uniform spacing;
    the result lives on the mirror-symmetric ``reflected-pair`` box.
    """
    d = v.domain
    if d.is_radial:
        raise ValueError("reflection needs a box domain")
    lo, hi = d.extents[-1]
    if lo != 0.0:
        raise ValueError("asymmetric grid: the half box must start at x_N = 0")
    ext = list(d.extents)
    ext[-1] = (-hi, hi)
    res = list(d.resolution)
    m = res[-1]
    res[-1] = 2 * m - 1
    bad = [f for f in d.dirichlet if f == f"x{d.dim}-"]
    if bad:
        raise ValueError("the reflection plane cannot carry a Dirichlet condition")
    dirichlet = tuple(d.dirichlet) + ((f"x{d.dim}-",) if f"x{d.dim}+" in d.dirichlet else ())
    full = make_domain("reflected-pair", ext, res, dirichlet=dirichlet)
    vals = v.values.reshape(d.shape)
    mirrored = np.concatenate([vals[..., :0:-1], vals], axis=-1)
    return GridFunction(full, mirrored.ravel())


def cherrier_min_constant(family, eps: float, exps: ChoquardExponents, **kw) -> float:
    """Smallest C with ||u||_0^2 <= (2^{(p-2)/p}/S_H + eps) int |grad u|^2 + C int u^2 on the family."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    family = list(family)
    if not family:
        raise ValueError("family must be non-empty")
    lead = exps.threshold_factor / s_h_constant(exps) + eps
    best = -np.inf
    for u in family:
        if not np.any(u.values):
            raise ValueError("family members must be nonzero")
        n = choquard_double_integral(abs(u), exps.power, exps, **kw)
        csq = max(n, 0.0) ** (1.0 / exps.power)
        l2 = integrate(u * u)
        best = max(best, (csq - lead * dirichlet_energy(u)) / l2)
    return float(best)
