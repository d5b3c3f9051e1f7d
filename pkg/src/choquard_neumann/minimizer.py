"""Minimization of the Sobolev quotient and the rescaled ground state.

Iterates live on the free (non-Dirichlet) nodes, are kept nonnegative and are
normalized so that the double Riesz integral equals 1.  On that set
Q(v) = v^T K v, and its gradient is

    grad Q = 2 (K v - Q W v^{p-1} V(v)),   V(v) = riesz potential of v^p,

with K the form matrix and W the lumped weights.  The default step uses the
form itself as metric (d = -K^{-1} grad Q / 2); ``metric='l2'`` uses W.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator

from .bubbles import energy_bound, quotient_threshold
from .exponents import ChoquardExponents
from .grid import GridDomain, GridFunction, GAMMA1
from .quotient import (CertificateError, NormCoefficients, energy, equivalence_certificate,
                       form_matrix, free_form)
from .riesz import riesz_operator


# relative slack for Q comparisons at the level of floating-point resolution
ROUNDOFF_SLACK = 1e-14


class ConvergenceWarning(RuntimeWarning):
    """The minimizer stopped before reaching the stationarity tolerance."""


@dataclass(frozen=True)
class MinimizerOptions:
    """Options of :func:`minimize_quotient`.

    Parameters
    ----------
    step : float
        Initial step length (1 is the natural scale for the form metric).
    max_iters : int
    grad_tol : float
        Stationarity tolerance on the relative projected-gradient norm.
    restarts : int
        Random restarts in addition to the bubble initialization.
    seed : int
    metric : {'sobolev', 'l2'}
    armijo : float
        Sufficient-decrease constant.
    """

    step: float = 1.0
    max_iters: int = 2000
    grad_tol: float = 1e-6
    restarts: int = 0
    seed: int = 0
    metric: str = "sobolev"
    armijo: float = 1e-4
    min_step: float = 1e-14

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 0 or self.restarts < 0:
            raise ValueError("max_iters and restarts must be nonnegative")
        if self.metric not in ("sobolev", "l2"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class MinimizerResult:
    v: GridFunction
    S_disc: float
    history: np.ndarray  # columns: iteration, Q, gradient norm
    converged: bool
    restart_values: list = field(default_factory=list)
    initial_values: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.v, self.S_disc))


class _Problem:
    def __init__(self, domain, coeffs, exps):
        self.domain = domain
        self.p = exps.power
        self.free = domain.free_mask
        self.K = free_form(domain, coeffs)
        self.w_full = domain.weights
        self.w = self.w_full[self.free]
        self.op = riesz_operator(domain, exps.mu)
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            self._lu = splu(self.K.tocsc())
        return self._lu

    def full(self, v):
        out = np.zeros(self.domain.n_nodes)
        out[self.free] = v
        return out

    def potential(self, v):
        g = self.full(v) ** self.p
        return self.op.apply(self.w_full * g)[self.free]

    def double_integral(self, v):
        wg = self.w_full * self.full(v) ** self.p
        return float(wg @ self.op.apply(wg))

    def normalize(self, v):
        n = self.double_integral(v)
        if not n > 0:
            raise ValueError("iterate has a vanishing Choquard term")
        return v / n ** (1.0 / (2.0 * self.p))

    def quotient(self, v):
        return float(v @ (self.K @ v))

    def stationarity(self, v, Q, V):
        r = (self.K @ v) / self.w - Q * v ** (self.p - 1.0) * V
        return float(np.sqrt(self.w @ r**2) / np.sqrt(self.w @ v**2))


def _bubble_init(domain: GridDomain, coeffs: NormCoefficients):
    if domain.is_radial:
        R = domain.extents[0][1]
        r = domain.radii
        eps = (0.1 * R) ** 2
        return (eps + r**2) ** (-max(domain.dim - 2, 1) / 2.0)
    a = coeffs.alpha if coeffs.alpha is not None else coeffs.arrays(domain)[0]
    a = np.broadcast_to(np.asarray(a, float), (domain.n_nodes,))
    cand = np.flatnonzero(domain.node_roles == GAMMA1)
    if cand.size == 0:
        cand = np.flatnonzero(domain.free_mask)
    c = domain.points[cand[np.argmax(a[cand])]]
    diam = np.sqrt(sum((hi - lo) ** 2 for lo, hi in domain.extents))
    eps = (0.1 * diam) ** 2
    d2 = ((domain.points - c) ** 2).sum(axis=1)
    return (eps + d2) ** (-max(domain.dim - 2, 1) / 2.0)


def _descend(prob: _Problem, v0, opts: MinimizerOptions):
    v = prob.normalize(np.abs(v0))
    V = prob.potential(v)
    Q = prob.quotient(v)
    g = prob.stationarity(v, Q, V)
    hist = [(0, Q, g)]
    tau = opts.step
    converged = g <= opts.grad_tol
    it = 0
    while not converged and it < opts.max_iters:
        it += 1
        grad = 2.0 * (prob.K @ v - Q * prob.w * v ** (prob.p - 1.0) * V)
        if opts.metric == "sobolev":
            d = -0.5 * prob.lu.solve(grad)
        else:
            d = -0.5 * grad / prob.w
        slope = float(grad @ d)
        accepted = False
        while tau >= opts.min_step:
            trial = np.abs(v + tau * d)
            if np.any(trial):
                trial = prob.normalize(trial)
                Qt = prob.quotient(trial)
                if Qt <= Q + opts.armijo * tau * slope:
                    Vt = prob.potential(trial)
                    gt = prob.stationarity(trial, Qt, Vt)
                    accepted = True
                    break
                if Qt <= Q + ROUNDOFF_SLACK * abs(Q):
                    # the decrease is below the resolution of Q: accept only
                    # steps that still reduce the stationarity measure
                    Vt = prob.potential(trial)
                    gt = prob.stationarity(trial, Qt, Vt)
                    if gt < g:
                        accepted = True
                        break
            tau *= 0.5
        if not accepted:
            break
        v, Q, V, g = trial, Qt, Vt, gt
        hist.append((it, Q, g))
        converged = g <= opts.grad_tol
        tau = min(2.0 * tau, opts.step) if opts.metric == "sobolev" else 2.0 * tau
    return v, Q, np.array(hist), converged


def minimize_quotient(domain: GridDomain, coeffs: NormCoefficients, exps: ChoquardExponents,
                      opts: MinimizerOptions = MinimizerOptions(), init=None) -> MinimizerResult:
    """Minimize Q over nonnegative grid functions vanishing on Gamma_0.

    Parameters
    ----------
    domain : GridDomain
    coeffs : NormCoefficients
    exps : ChoquardExponents
    opts : MinimizerOptions
    init : GridFunction or array_like, optional
        Starting point; defaults to a bubble centred at the Gamma_1 node where
        the weight is largest (the origin on radial domains).

    Returns
    -------
    MinimizerResult
        Unpacks as ``(v, S_disc)``.  ``history`` holds the accepted
        iterations of the best run.
    """
    if not equivalence_certificate(domain, coeffs).holds:
        raise CertificateError("the quadratic form is not positive definite")
    prob = _Problem(domain, coeffs, exps)
    starts = []
    if init is not None:
        u = init.values if isinstance(init, GridFunction) else np.asarray(init, float)
        starts.append(u[prob.free])
    else:
        starts.append(_bubble_init(domain, coeffs)[prob.free])
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        starts.append(rng.random(prob.free.sum()) + 0.05)
    best = None
    values, initial = [], []
    for s in starts:
        v0 = prob.normalize(np.abs(s))
        initial.append(prob.quotient(v0))
        v, Q, hist, conv = _descend(prob, s, opts)
        values.append(Q)
        if best is None or Q < best[1]:
            best = (v, Q, hist, conv)
    v, Q, hist, conv = best
    if not conv:
        warnings.warn(f"minimizer stopped at gradient norm {hist[-1, 2]:.3e} "
                      f"above grad_tol={opts.grad_tol:.1e}", ConvergenceWarning, stacklevel=2)
    return MinimizerResult(GridFunction(domain, prob.full(v)), Q, hist, conv, values, initial)


class QuotientMinimizer(BaseEstimator):
    """Estimator wrapper around :func:`minimize_quotient`; ``fit(domain)``."""

    def __init__(self, exps=None, coeffs=None, step=1.0, max_iters=2000, grad_tol=1e-6,
                 restarts=0, seed=0, metric="sobolev"):
        self.exps = exps
        self.coeffs = coeffs
        self.step = step
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.restarts = restarts
        self.seed = seed
        self.metric = metric

    def fit(self, domain: GridDomain, y=None, init=None):
        coeffs = self.coeffs if self.coeffs is not None else NormCoefficients()
        opts = MinimizerOptions(self.step, self.max_iters, self.grad_tol, self.restarts,
                                self.seed, self.metric)
        res = minimize_quotient(domain, coeffs, self.exps, opts, init)
        self.v_ = res.v
        self.S_disc_ = res.S_disc
        self.history_ = res.history
        self.converged_ = res.converged
        self.ground_state_ = ground_state_rescale(res.v, res.S_disc, self.exps)
        return self


def ground_state_rescale(v: GridFunction, S_disc: float, exps: ChoquardExponents) -> GridFunction:
    """u0 = S_disc^{1/(2p - 2)} v."""
    return v * S_disc ** (1.0 / (2.0 * exps.power - 2.0))


def pde_residual(u: GridFunction, coeffs: NormCoefficients, exps: ChoquardExponents) -> GridFunction:
    """Nodal residual of -Lap u - a u - V(u^p) u^{p-1} with the Robin closure.

    The discrete Laplacian is W^{-1} A; boundary rows carry the Neumann/Robin
    condition through the form matrix.  Dirichlet nodes report 0.
    """
    d = u.domain
    p = exps.power
    v = u.values.copy()
    v[~d.free_mask] = 0.0
    if np.any(v < 0) and float(p) != int(p):
        raise ValueError("fractional powers need a nonnegative function")
    lin = (form_matrix(d, coeffs) @ v) / d.weights
    if np.any(v):
        V = riesz_operator(d, exps.mu).apply(d.weights * v**p)
    else:
        V = np.zeros_like(v)
    r = lin - V * v ** (p - 1.0)
    r[~d.free_mask] = 0.0
    return GridFunction(d, r)


def weighted_norm(f: GridFunction) -> float:
    w = f.domain.weights
    return float(np.sqrt(w @ f.values**2))


@dataclass(frozen=True)
class ThresholdCheck:
    below: bool
    margin: float
    J: float
    bound: float

    def __bool__(self):
        return self.below


def energy_threshold_check(u0: GridFunction, exps: ChoquardExponents,
                           coeffs: NormCoefficients | None = None) -> ThresholdCheck:
    """Compare J(u0) with (1/2 - 1/(2p)) S_H^{p/(p-1)} / 2^{(p-2)/(p-1)}."""
    coeffs = NormCoefficients() if coeffs is None else coeffs
    J = energy(u0, coeffs, exps)
    bound = energy_bound(exps)
    return ThresholdCheck(bool(J < bound), float(bound - J), float(J), float(bound))


def energy_from_sdisc(S_disc: float, exps: ChoquardExponents) -> float:
    """J(u0) for the rescaled minimizer: (1/2 - 1/(2p)) S_disc^{p/(p-1)}."""
    p = exps.power
    return (0.5 - 0.5 / p) * S_disc ** (p / (p - 1.0))


def threshold_check_from_sdisc(S_disc: float, exps: ChoquardExponents) -> ThresholdCheck:
    """Threshold check written through S_disc only; margin 0 exactly at S_H/2^{(p-2)/p}."""
    J = energy_from_sdisc(S_disc, exps)
    bound = energy_from_sdisc(quotient_threshold(exps), exps)
    return ThresholdCheck(bool(J < bound), float(bound - J), float(J), float(bound))
