"""Concentrating cut-off bubbles at a flat boundary point and their quotient.

All quantities are radial integrals evaluated with composite Gauss-Legendre
rules whose panels are graded geometrically towards every point where the
integrand is singular or changes scale (the origin, the kernel diagonal, the
cut-off radii).  Nonlocal terms use the angular-mean shell kernel of
:mod:`kernels`, so that for radial F

    int int_{B x B} F(x) F(y) |x - y|^{-mu} = int F(r) |S| r^{N-1} V(r) dr,
    V(r) = |S| int F(s) s^{N-1} r_>^{-mu} kbar(r_</r_>) ds.

Geometry near the concentration point x0 = 0: the domain is
{x_N > rho(x')} with rho = c |x'|^k, i.e. the half-ball minus the layer
Sigma = {0 < x_N < rho(x')} inside B_{R/2}.  Sigma is integrated in the
thin-layer approximation  int_Sigma h ~ int_{|x'|<R/2} h(x', 0) rho(x') dx'.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from sklearn.base import BaseEstimator

from .bubbles import quotient_threshold, s_h_constant
from .exponents import ChoquardExponents, FlatBoundarySpec, sphere_area
from .grid import GridDomain, GridFunction
from .kernels import radial_profile

_Q = 10


def default_epsilons():
    """Twelve points log-spaced in [1e-6, 1e-1], decreasing."""
    return tuple(np.geomspace(1e-1, 1e-6, 12))


@dataclass(frozen=True)
class AsymptoticsSweep:
    """Parameters of an epsilon-sweep of cut-off bubbles u_eps = phi U_eps.

    Parameters
    ----------
    exps : ChoquardExponents
    lam : float
        Spectral parameter (>= 0; 0 switches the linear gain term off).
    alpha0 : float
        Lower bound of alpha near the concentration point.
    flatness : FlatBoundarySpec
        Boundary graph order k, amplitude c and chart radius R.
    epsilons : tuple of float
        Strictly decreasing positive scales.
    """

    exps: ChoquardExponents
    lam: float
    alpha0: float = 1.0
    flatness: FlatBoundarySpec = field(default_factory=lambda: FlatBoundarySpec(4.0, 1.0, 1.0))
    epsilons: tuple = field(default_factory=default_epsilons)

    def __post_init__(self):
        if self.exps.N < 3:
            raise ValueError("the bubble sweep needs N >= 3")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        eps = np.asarray(self.epsilons, float)
        if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise ValueError("epsilons must be positive and strictly decreasing")
        object.__setattr__(self, "epsilons", tuple(float(e) for e in eps))

    @property
    def R(self) -> float:
        return self.flatness.radius_R

    def check_epsilon(self, eps):
        if not eps > 0:
            raise ValueError("epsilon must be positive")
        if np.sqrt(eps) >= 0.5 * self.R:
            raise ValueError("epsilon too large for the chart: sqrt(eps) must be below R/2")

    # -- cut-off ---------------------------------------------------------------

    def cutoff(self, r):
        """Smooth radial cut-off: 1 on r <= R/4, 0 on r >= R/2."""
        t = (np.asarray(r, float) - 0.25 * self.R) / (0.25 * self.R)
        return 1.0 - _smooth_step(t)

    def cutoff_derivative(self, r):
        t = (np.asarray(r, float) - 0.25 * self.R) / (0.25 * self.R)
        return -_smooth_step_derivative(t) / (0.25 * self.R)

    def bubble(self, r, eps):
        N = self.exps.N
        r = np.asarray(r, float)
        return self.cutoff(r) * (eps + r * r) ** (-(N - 2) / 2.0)

    def bubble_derivative(self, r, eps):
        N = self.exps.N
        r = np.asarray(r, float)
        base = (eps + r * r) ** (-(N - 2) / 2.0)
        dbase = -(N - 2) * r * (eps + r * r) ** (-N / 2.0)
        return self.cutoff_derivative(r) * base + self.cutoff(r) * dbase


def _f(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _smooth_step(t):
    shape = np.shape(t)
    t = np.atleast_1d(np.asarray(t, float))
    a, b = _f(t), _f(1.0 - t)
    return (a / (a + b)).reshape(shape)


def _smooth_step_derivative(t):
    shape = np.shape(t)
    t = np.atleast_1d(np.asarray(t, float))
    a, b = _f(t), _f(1.0 - t)
    da = np.zeros_like(t)
    db = np.zeros_like(t)
    pos = t > 0
    da[pos] = a[pos] / t[pos] ** 2
    pos = t < 1
    db[pos] = b[pos] / (1.0 - t[pos]) ** 2
    return ((da * b + a * db) / (a + b) ** 2).reshape(shape)


# -- graded composite quadrature -------------------------------------------------


def graded_rule(lo, hi, foci=(), q=_Q, floor=1e-13, extra=()):
    """Gauss-Legendre nodes on [lo, hi] with panels halving towards each focus."""
    span = hi - lo
    pts = [lo, hi, *[e for e in extra if lo < e < hi]]
    for c in foci:
        if not lo <= c <= hi:
            continue
        lev = int(np.ceil(np.log2(span / (floor * max(abs(c), floor))))) + 1
        d = span * 2.0 ** -np.arange(lev)
        pts.extend(c - d)
        pts.extend(c + d)
    b = np.unique(np.clip(pts, lo, hi))
    x, w = leggauss(q)
    a, c = b[:-1, None], b[1:, None]
    return (0.5 * (c - a) * (x + 1) + a).ravel(), (0.5 * (c - a) * w).ravel()


def shell_potential(F, dim, mu, r_eval, s_lo, s_hi, region="full", s_foci=(), s_extra=()):
    """V(r) = c int_{s_lo}^{s_hi} F(s) s^{N-1} max(r,s)^{-mu} kbar(min/max) ds.

    ``c`` is |S^{N-1}| for ``region='full'`` and |S^{N-1}|/2 for the
    hemisphere-averaged half-ball potential.
    """
    prof = radial_profile(dim, mu, region)
    c = sphere_area(dim) * (0.5 if region == "half" else 1.0)
    base_foci = (s_lo, s_hi, *s_foci)
    out = np.empty(len(r_eval))
    for i, r in enumerate(np.atleast_1d(r_eval)):
        s, w = graded_rule(s_lo, s_hi, (*base_foci, min(max(r, s_lo), s_hi)), extra=s_extra)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = prof.kernel(r, s)
        k[~np.isfinite(k)] = 0.0
        out[i] = c * np.sum(w * F(s) * s ** (dim - 1) * k)
    return out


def radial_double_integral(F, dim, mu, r_lo, r_hi, region="full", foci=(), extra=(),
                           s_lo=None, s_hi=None):
    """int_{r_lo<|x|<r_hi} int_{s_lo<|y|<s_hi} F(|x|) F(|y|) |x - y|^{-mu} over a ball or half-ball."""
    s_lo = r_lo if s_lo is None else s_lo
    s_hi = r_hi if s_hi is None else s_hi
    c = sphere_area(dim) * (0.5 if region == "half" else 1.0)
    r, w = graded_rule(r_lo, r_hi, (r_lo, r_hi, *foci), extra=extra)
    V = shell_potential(F, dim, mu, r, s_lo, s_hi, region, s_foci=foci, s_extra=extra)
    return float(c * np.sum(w * F(r) * r ** (dim - 1) * V))


# -- unit-bubble constants ---------------------------------------------------------


@dataclass(frozen=True)
class UnitBubble:
    """Integrals of u(x) = (1 + |x|^2)^{-(N-2)/2} over R^N."""

    grad_sq: float
    l2_sq: float
    choquard: float  # int int u^p u^p |x-y|^{-mu}, p = 2*_mu

    @property
    def ratio(self) -> float:
        return self.grad_sq / self.choquard


_UNIT_CACHE: dict = {}


def unit_bubble(exps: ChoquardExponents) -> UnitBubble:
    key = (exps.N, exps.mu)
    if key in _UNIT_CACHE:
        return _UNIT_CACHE[key]
    N, mu = exps.N, exps.mu
    area = sphere_area(N)
    r_hi = 1e9
    r, w = graded_rule(0.0, r_hi, (0.0,), extra=(1.0,), floor=1e-10)
    du = -(N - 2) * r * (1 + r * r) ** (-N / 2.0)
    grad = area * np.sum(w * du**2 * r ** (N - 1))
    l2 = area * np.sum(w * (1 + r * r) ** (-(N - 2.0)) * r ** (N - 1)) if N >= 5 else np.inf
    f = lambda s: (1 + s * s) ** (-(2 * N - mu) / 2.0)
    chq = radial_double_integral(f, N, mu, 0.0, 1e7, "full", foci=(0.0,), extra=(1.0,))
    ub = UnitBubble(float(grad), float(l2), chq)
    _UNIT_CACHE[key] = ub
    return ub


# -- the terms of the quotient -------------------------------------------------------


def _sigma_density(sweep, r):
    """|S^{N-2}| rho(r) r^{N-2}: thin-layer density of Sigma in |x'| (r < R/2)."""
    N = sweep.exps.N
    fl = sweep.flatness
    return sphere_area(N - 1) * fl.rho(r) * r ** (N - 2)


def _outer_rule(sweep, eps):
    R = sweep.R
    return graded_rule(0.0, 0.5 * R, (0.0, 0.25 * R, 0.5 * R),
                       extra=tuple(np.linspace(0.25 * R, 0.5 * R, 9)) + (np.sqrt(eps),),
                       floor=1e-12)


@dataclass(frozen=True)
class Term:
    """A computed quantity, its half-ball part, its Sigma correction and a leading-order model."""

    value: float
    half_ball: float
    sigma: float
    leading: float


def cutoff_bubble(sweep: AsymptoticsSweep, epsilon: float, domain: GridDomain | None = None):
    """u_eps = phi(x) (eps + |x|^2)^{-(N-2)/2}.

    With a domain, returns the grid sample; without one, the radial profile
    as a callable.
    """
    sweep.check_epsilon(epsilon)
    if domain is None:
        return lambda r: sweep.bubble(r, epsilon)
    if domain.is_radial:
        return GridFunction(domain, sweep.bubble(domain.radii, epsilon))
    return GridFunction(domain, sweep.bubble(np.linalg.norm(domain.points, axis=1), epsilon))


def gradient_term(sweep: AsymptoticsSweep, epsilon: float) -> Term:
    """int_Omega |grad u_eps|^2 = (1/2) int_B |grad u_eps|^2 - int_Sigma |grad u_eps|^2."""
    sweep.check_epsilon(epsilon)
    N = sweep.exps.N
    r, w = _outer_rule(sweep, epsilon)
    du2 = sweep.bubble_derivative(r, epsilon) ** 2
    half = 0.5 * sphere_area(N) * np.sum(w * du2 * r ** (N - 1))
    sig = np.sum(w * du2 * _sigma_density(sweep, r))
    lead = unit_bubble(sweep.exps).grad_sq / (2.0 * epsilon ** ((N - 2) / 2.0))
    return Term(float(half - sig), float(half), float(sig), float(lead))


def l2_term(sweep: AsymptoticsSweep, epsilon: float) -> Term:
    """int_Omega u_eps^2, split as the gradient term.

    The leading model is ||u||_2^2/(2 eps^{(N-4)/2}) for N >= 5 and
    (|S^3|/4)|log eps| for N = 4 (half of the full-ball coefficient |S^3|/2).
    """
    sweep.check_epsilon(epsilon)
    N = sweep.exps.N
    r, w = _outer_rule(sweep, epsilon)
    u2 = sweep.bubble(r, epsilon) ** 2
    half = 0.5 * sphere_area(N) * np.sum(w * u2 * r ** (N - 1))
    sig = np.sum(w * u2 * _sigma_density(sweep, r))
    if N >= 5:
        lead = unit_bubble(sweep.exps).l2_sq / (2.0 * epsilon ** ((N - 4) / 2.0))
    elif N == 4:
        lead = 0.25 * sphere_area(4) * abs(np.log(epsilon))
    else:
        lead = float("nan")
    return Term(float(half - sig), float(half), float(sig), float(lead))


def tail_integrals_DE(sweep: AsymptoticsSweep, epsilon: float):
    """The off-ball pieces D and E of the unit-bubble Choquard integral.

    With f = (1 + |x|^2)^{-(2N-mu)/2} and L = R/(4 sqrt(eps)):
    D = int_{|x|>L} int_{|y|<L} f f |x-y|^{-mu},  E = int_{|x|>L} int_{|y|>L} f f |x-y|^{-mu}.
    """
    N, mu = sweep.exps.N, sweep.exps.mu
    L = sweep.R / (4.0 * np.sqrt(epsilon))
    f = lambda s: (1 + s * s) ** (-(2 * N - mu) / 2.0)
    top = L * 1e6
    key = (N, mu, float(L))
    if key not in _TAILS:
        D = radial_double_integral(f, N, mu, L, top, "full", foci=(L,), s_lo=0.0, s_hi=L)
        E = radial_double_integral(f, N, mu, L, top, "full", foci=(L,))
        _TAILS[key] = (D, E)
    return _TAILS[key]


_TAILS: dict = {}


@dataclass(frozen=True)
class ChoquardTerm:
    """Double integral of u_eps^p over Omega and its pieces.

    value = half_ball - 2 half_sigma + sigma_sigma; ``full_ball`` is the
    double integral over the whole ball B x B; ``bound`` is the lower bound
    total/(4 eps^{(2N-mu)/2}) (1 - C1 eps^{(2N-mu)/4} - C2 eps^{gamma_Sigma}).
    """

    value: float
    half_ball: float
    half_sigma: float
    sigma_sigma: float
    full_ball: float
    D: float
    E: float
    bound: float


def _choquard_pieces(sweep, eps):
    key = (sweep.exps, sweep.flatness, float(eps))
    if key not in _PIECES:
        _PIECES[key] = _compute_pieces(sweep, eps)
    return _PIECES[key]


_PIECES: dict = {}


def _compute_pieces(sweep, eps):
    N, mu = sweep.exps.N, sweep.exps.mu
    p = sweep.exps.two_star_mu
    R = sweep.R
    F = lambda s: sweep.bubble(s, eps) ** p
    foci = (0.0, 0.25 * R, 0.5 * R)
    extra = tuple(np.linspace(0.25 * R, 0.5 * R, 9)) + (np.sqrt(eps),)
    r, w = graded_rule(0.0, 0.5 * R, foci, extra=extra, floor=1e-12)
    Fr = F(r)
    Vh = shell_potential(F, N, mu, r, 0.0, 0.5 * R, "half", s_foci=foci, s_extra=extra)
    Vf = shell_potential(F, N, mu, r, 0.0, 0.5 * R, "full", s_foci=foci, s_extra=extra)
    area = sphere_area(N)
    half = 0.5 * area * np.sum(w * Fr * r ** (N - 1) * Vh)
    full = area * np.sum(w * Fr * r ** (N - 1) * Vf)
    sig = _sigma_density(sweep, r)
    # the half-ball potential on the flat face is half the full-ball potential
    cross = np.sum(w * Fr * sig * 0.5 * Vf)
    if sweep.flatness.coefficient > 0 and mu < N - 1 and N - 1 >= 2:
        G = lambda s: F(s) * sweep.flatness.rho(s)
        Vs = shell_potential(G, N - 1, mu, r, 0.0, 0.5 * R, "full", s_foci=foci, s_extra=extra)
        ss = sphere_area(N - 1) * np.sum(w * G(r) * r ** (N - 2) * Vs)
    else:
        # kernel not integrable on the (N-1)-dimensional layer: drop the
        # nonnegative Sigma x Sigma term, which can only lower the value
        ss = 0.0
    return float(half), float(cross), float(ss), float(full)


def choquard_lower_bound(sweep: AsymptoticsSweep, epsilon: float, C1=None, C2=None) -> ChoquardTerm:
    """Computed ||u_eps||_{0,Omega}^{2p} against the lower-bound model.

    C1, C2 are the correction constants of the model; when omitted they are
    fitted at this epsilon alone (C1 from D and E, C2 from the Sigma terms).
    """
    sweep.check_epsilon(epsilon)
    N, mu = sweep.exps.N, sweep.exps.mu
    half, cross, ss, full = _choquard_pieces(sweep, epsilon)
    D, E = tail_integrals_DE(sweep, epsilon)
    value = half - 2.0 * cross + ss
    total = unit_bubble(sweep.exps).choquard
    a = (2 * N - mu) / 2.0
    g1 = (2 * N - mu) / 4.0
    gs = sigma_rate(sweep)
    if C1 is None:
        C1 = (2 * D + E) / (total * epsilon**g1)
    if C2 is None:
        C2 = max(0.0, 2.0 * cross - ss) * epsilon**a / (0.25 * total) / epsilon**gs
    bound = total / (4.0 * epsilon**a) * (1.0 - C1 * epsilon**g1 - C2 * epsilon**gs)
    return ChoquardTerm(value, half, cross, ss, full, D, E, float(bound))


def sigma_rate(sweep: AsymptoticsSweep) -> float:
    """Relative order of the Sigma corrections to the Choquard term.

    (k-1)(2N-mu)/(4N) for k <= N+1 and (2N-mu)/4 for k > N+1; the two
    agree at k = N+1.
    """
    N, mu, k = sweep.exps.N, sweep.exps.mu, sweep.flatness.order_k
    if k <= N + 1:
        return (k - 1) * (2 * N - mu) / (4.0 * N)
    return (2 * N - mu) / 4.0


@dataclass(frozen=True)
class CurvePoint:
    epsilon: float
    grad_term: float
    l2_term: float
    choquard: float
    D: float
    E: float
    Q: float
    threshold: float
    predicted_bound: float
    below_gate: bool
    choquard_bound: float


@dataclass(frozen=True)
class QuotientCurve:
    points: tuple
    constants: dict

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def column(self, name):
        return np.array([getattr(p, name) for p in self.points], dtype=float)


def _gain(sweep, eps):
    if sweep.exps.N == 4:
        return eps * abs(np.log(eps))
    return eps


def quotient_curve(sweep: AsymptoticsSweep) -> QuotientCurve:
    """Q(u_eps) along the sweep with a(x) = lam alpha0 on the support.

    The predicted bound is threshold + A eps^{g1} + B eps^{(N-2)/2} - C lam g(eps)
    with g = eps|log eps| (N = 4) or eps (N >= 5), g1 = sigma_rate, and the
    constants A, B, C fitted by least squares to the computed curve.
    """
    N, mu = sweep.exps.N, sweep.exps.mu
    p = sweep.exps.two_star_mu
    T = quotient_threshold(sweep.exps)
    rows = []
    for eps in sweep.epsilons:
        g = gradient_term(sweep, eps)
        l2 = l2_term(sweep, eps)
        ch = choquard_lower_bound(sweep, eps)
        num = g.value - sweep.lam * sweep.alpha0 * l2.value
        rows.append((eps, g.value, l2.value, ch, num / ch.value ** (1.0 / p)))
    eps = np.array([r[0] for r in rows])
    Q = np.array([r[4] for r in rows])
    a = (2 * N - mu) / 2.0
    g1 = (2 * N - mu) / 4.0
    gs = sigma_rate(sweep)
    total = unit_bubble(sweep.exps).choquard
    C1 = max((2 * r[3].D + r[3].E) / (total * r[0] ** g1) for r in rows)
    C2 = max(max(0.0, 2 * r[3].half_sigma - r[3].sigma_sigma) * r[0] ** a / (0.25 * total) / r[0] ** gs
             for r in rows)
    cols = [eps**gs, eps ** ((N - 2) / 2.0)]
    if sweep.lam > 0:
        cols.append(-sweep.lam * np.array([_gain(sweep, e) for e in eps]))
    X = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(X, Q - T, rcond=None)
    pred = T + X @ coef
    points = []
    for (e, gv, lv, ch, q), pb in zip(rows, pred):
        cb = total / (4.0 * e**a) * (1.0 - C1 * e**g1 - C2 * e**gs)
        points.append(CurvePoint(e, gv, lv, ch.value, ch.D, ch.E, q, T, float(pb), bool(q < T), float(cb)))
    constants = {"A": float(coef[0]), "B": float(coef[1]),
                 "C": float(coef[2]) if sweep.lam > 0 else 0.0, "C1": float(C1), "C2": float(C2),
                 "S_H": s_h_constant(sweep.exps), "threshold": T}
    return QuotientCurve(tuple(points), constants)


@dataclass(frozen=True)
class RateFit:
    slope: float
    r_squared: float
    intercept: float

    def __iter__(self):
        return iter((self.slope, self.r_squared))


def fit_rate(series) -> RateFit:
    """Least-squares slope of log(value) against log(epsilon).

    Parameters
    ----------
    series : sequence of (epsilon, value)
        At least four points with positive values.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 4:
        raise ValueError("fit_rate needs at least four (epsilon, value) pairs")
    if np.any(arr[:, 1] <= 0) or np.any(arr[:, 0] <= 0):
        raise ValueError("fit_rate needs positive epsilons and values")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, icpt])
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(r2), float(icpt))


class PowerLawRateFit(BaseEstimator):
    """Estimator form of :func:`fit_rate`: ``fit(eps, values)`` sets ``slope_``."""

    def fit(self, X, y):
        res = fit_rate(np.column_stack([np.ravel(X), np.ravel(y)]))
        self.slope_ = res.slope
        self.r_squared_ = res.r_squared
        self.intercept_ = res.intercept
        return self

    def predict(self, X):
        return np.exp(self.intercept_) * np.ravel(X) ** self.slope_
