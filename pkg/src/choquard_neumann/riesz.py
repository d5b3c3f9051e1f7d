"""Discrete Riesz potentials and Choquard double integrals.

Every path shares one discrete operator per (domain, mu): a symmetric matrix
K with off-diagonal entries equal to the kernel between nodes and a
corrected diagonal for the singular self-interaction, so that

    int int g(x) g(y) |x - y|^{-mu}  ~  (w g)^T K (w g).

On boxes the diagonal is chosen so that K w reproduces the exact potential of
the uniform density (singularity subtraction).  On radial grids the off
diagonal holds the angular-mean shell kernel and the diagonal the hat-weighted
self-shell integral.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exponents import ChoquardExponents
from .grid import GridDomain, GridFunction
from .kernels import box_constant_potential, radial_profile, self_cell_values

DENSE_LIMIT = 5000
_CHUNK_ROWS = 512


def n_threads() -> int:
    """Worker count for chunked kernel reductions, from ``CHOQUARD_THREADS``."""
    try:
        return max(1, int(os.environ.get("CHOQUARD_THREADS", "1")))
    except ValueError:
        return 1


class RieszOperator:
    """Kernel matrix of |x - y|^{-mu} on the nodes of a domain.

    Dense when the node count is at most ``DENSE_LIMIT``, otherwise rebuilt
    row-block by row-block on each application.
    """

    def __init__(self, domain: GridDomain, mu: float):
        if not 0.0 < mu < domain.dim:
            raise ValueError(f"mu must lie in (0, N) with N={domain.dim}; got {mu}")
        self.domain = domain
        self.mu = float(mu)
        if domain.is_radial:
            region = "half" if domain.is_half else "full"
            self.profile = radial_profile(domain.dim, self.mu, region)
        self._dense = None
        self._diag = None

    @property
    def n(self) -> int:
        return self.domain.n_nodes

    def block(self, rows) -> np.ndarray:
        """Off-diagonal kernel rows (self entries set to 0)."""
        rows = np.asarray(rows)
        d = self.domain
        if d.is_radial:
            r = d.radii
            with np.errstate(divide="ignore", invalid="ignore"):
                blk = self.profile.kernel(r[rows][:, None], r[None, :])
        else:
            with np.errstate(divide="ignore"):
                blk = cdist(d.points[rows], d.points) ** (-self.mu)
        blk[np.arange(rows.size), rows] = 0.0
        return blk

    def _row_chunks(self):
        return [np.arange(lo, min(lo + _CHUNK_ROWS, self.n)) for lo in range(0, self.n, _CHUNK_ROWS)]

    def _offdiag_apply(self, x):
        if self.n <= DENSE_LIMIT:
            return self.dense_offdiag @ x
        chunks = self._row_chunks()
        with ThreadPoolExecutor(n_threads()) as ex:
            parts = list(ex.map(lambda rows: self.block(rows) @ x, chunks))
        return np.concatenate(parts)

    @property
    def dense_offdiag(self) -> np.ndarray:
        if self._dense is None:
            if self.n > DENSE_LIMIT:
                raise MemoryError("operator too large for a dense matrix")
            self._dense = self.block(np.arange(self.n))
        return self._dense

    def diag_at(self, idx) -> np.ndarray:
        """Corrected diagonal entries for the given nodes."""
        idx = np.atleast_1d(np.asarray(idx))
        d = self.domain
        if self._diag is not None:
            return self._diag[idx]
        w = d.weights
        if d.is_radial:
            return self_cell_values(self.profile, d.radii, d.sphere_factor, w)[idx]
        lo = [a for a, _ in d.extents]
        hi = [b for _, b in d.extents]
        v1 = box_constant_potential(d.points[idx], lo, hi, self.mu)
        off = np.concatenate([self.block(idx[k:k + _CHUNK_ROWS]) @ w
                              for k in range(0, idx.size, _CHUNK_ROWS)])
        return (v1 - off) / w[idx]

    @property
    def diag(self) -> np.ndarray:
        if self._diag is None:
            self._diag = self.diag_at(np.arange(self.n))
        return self._diag

    def apply(self, x) -> np.ndarray:
        """K @ x."""
        x = np.asarray(x, dtype=float)
        return self._offdiag_apply(x) + self.diag * x

    def matrix(self) -> np.ndarray:
        K = self.dense_offdiag.copy()
        K[np.diag_indices_from(K)] = self.diag
        return K


def riesz_operator(domain: GridDomain, mu: float) -> RieszOperator:
    """Memoized operator for ``(domain, mu)``."""
    key = ("riesz", float(mu))
    op = domain._cache.get(key)
    if op is None:
        op = RieszOperator(domain, mu)
        domain._cache[key] = op
    return op


def _check_exps(domain, exps: ChoquardExponents):
    if exps.N != domain.dim:
        raise ValueError(f"exponents are for N={exps.N} but the domain has dim={domain.dim}")
    if not exps.mu < domain.dim:
        raise ValueError("mu >= N: kernel not locally integrable")


def _powered(u: GridFunction, p: float) -> np.ndarray:
    v = u.values
    if float(p) != int(p) and np.any(v < 0):
        raise ValueError("negative values cannot be raised to a fractional power")
    return v**p


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    n_pairs: int


def choquard_double_integral(u: GridFunction, p: float | None = None,
                             exps: ChoquardExponents | None = None, *, method="auto",
                             n_pairs=200_000, rng=None, return_stderr=False):
    """Double Riesz integral of u^p: int int u(x)^p u(y)^p |x - y|^{-mu} dx dy.

    Parameters
    ----------
    u : GridFunction
    p : float, optional
        Power; defaults to ``exps.power``.
    exps : ChoquardExponents
    method : {'auto', 'direct', 'radial', 'mc'}
        ``auto`` picks radial quadrature on radial domains, direct pairwise
        summation on boxes with N <= 3 and pair-sampled Monte Carlo otherwise.
    n_pairs : int
        Sample pairs for the Monte Carlo path.
    rng : numpy.random.Generator, optional
    return_stderr : bool
        Also return the standard error (0 for the deterministic paths).
    """
    if exps is None:
        raise ValueError("exps is required")
    d = u.domain
    _check_exps(d, exps)
    p = exps.power if p is None else float(p)
    g = _powered(u, p)
    if method == "auto":
        method = "radial" if d.is_radial else ("direct" if d.dim <= 3 else "mc")
    if method == "mc":
        est = choquard_double_integral_mc(u, p, exps, n_pairs=n_pairs, rng=rng)
        return (est.value, est.stderr) if return_stderr else est.value
    if method == "radial" and not d.is_radial:
        raise ValueError("radial quadrature needs a radial domain")
    if method == "direct" and d.is_radial:
        raise ValueError("direct pairwise summation needs a box domain")
    if method not in ("radial", "direct"):
        raise ValueError(f"unknown method {method!r}")
    if not np.any(g):
        val = 0.0
    else:
        wg = d.weights * g
        val = float(wg @ riesz_operator(d, exps.mu).apply(wg))
    return (val, 0.0) if return_stderr else val


def choquard_double_integral_mc(u: GridFunction, p: float, exps: ChoquardExponents, *,
                                n_pairs=200_000, rng=None) -> MonteCarloEstimate:
    """Unbiased pair-sampling estimate of the discrete double integral on a box.

    Pairs (i, j) are drawn with probability proportional to w_i w_j: i by
    stratified sampling of the cumulative weights, j independently.  Each
    pair is averaged with its image under the central reflection of the box
    (an antithetic partner with the same kernel value).
    """
    d = u.domain
    if d.is_radial:
        raise ValueError("Monte Carlo pair sampling is implemented for boxes")
    _check_exps(d, exps)
    rng = np.random.default_rng() if rng is None else rng
    g = _powered(u, p)
    w = d.weights
    W = w.sum()
    cdf = np.cumsum(w) / W
    cdf[-1] = 1.0
    m = int(n_pairs)
    i = np.searchsorted(cdf, (np.arange(m) + rng.random(m)) / m, side="right")
    j = np.searchsorted(cdf, rng.random(m), side="right")
    i = np.minimum(i, d.n_nodes - 1)
    j = np.minimum(j, d.n_nodes - 1)
    op = riesz_operator(d, exps.mu)
    pts = d.points
    ia, ja = d.n_nodes - 1 - i, d.n_nodes - 1 - j

    def kern(a, b):
        k = np.empty(a.size)
        same = a == b
        with np.errstate(divide="ignore"):
            k[~same] = np.linalg.norm(pts[a[~same]] - pts[b[~same]], axis=1) ** (-op.mu)
        if np.any(same):
            uniq, inv = np.unique(a[same], return_inverse=True)
            k[same] = op.diag_at(uniq)[inv]
        return k

    y = 0.5 * (g[i] * g[j] * kern(i, j) + g[ia] * g[ja] * kern(ia, ja)) * W * W
    return MonteCarloEstimate(float(y.mean()), float(y.std(ddof=1) / np.sqrt(m)), m)


def choquard_norm(u: GridFunction, exps: ChoquardExponents, **kw) -> float:
    """Squared Choquard norm: the double integral at p = 2*_mu, raised to 1/2*_mu."""
    val = choquard_double_integral(u, exps.power, exps, **kw)
    return float(max(val, 0.0) ** (1.0 / exps.power))


def riesz_potential(density: GridFunction, mu: float) -> GridFunction:
    """Nodal values of int density(y) |x - y|^{-mu} dy.

    On half-ball radial grids this is the potential averaged over the
    hemisphere at each radius, which is what the radial reduction sees.
    """
    d = density.domain
    if not 0.0 < mu < d.dim:
        raise ValueError(f"mu must lie in (0, N) with N={d.dim}")
    if np.any(density.values < 0):
        raise ValueError("density must be nonnegative")
    if not np.any(density.values):
        return GridFunction(d, np.zeros(d.n_nodes))
    return GridFunction(d, riesz_operator(d, mu).apply(d.weights * density.values))


def lebesgue_norm(f: GridFunction, t: float) -> float:
    return float((f.domain.weights @ np.abs(f.values) ** t) ** (1.0 / t))


def hls_ratio(f: GridFunction, h: GridFunction, t: float, r: float, exps: ChoquardExponents) -> float:
    """int int f(x) h(y) |x - y|^{-mu} dx dy / (|f|_t |h|_r)."""
    N, mu = f.domain.dim, exps.mu
    if abs(1.0 / t + mu / N + 1.0 / r - 2.0) > 1e-9:
        raise ValueError("HLS exponents must satisfy 1/t + mu/N + 1/r = 2")
    if h.domain is not f.domain:
        raise ValueError("f and h must share a domain")
    if np.any(f.values < 0) or np.any(h.values < 0):
        raise ValueError("f and h must be nonnegative")
    nf, nh = lebesgue_norm(f, t), lebesgue_norm(h, r)
    if nf == 0.0 or nh == 0.0:
        return 0.0
    w = f.domain.weights
    num = (w * f.values) @ riesz_operator(f.domain, mu).apply(w * h.values)
    return float(num / (nf * nh))
