"""Angular reductions of the Riesz kernel |x - y|^{-mu}.

For radial functions on a ball (or a half-ball cut by a hyperplane through the
centre) the double integral reduces to a double radial integral against the
angular mean

    kbar(t) = E |e_1 - t w|^{-mu},   0 <= t <= 1,

so that the kernel between shells of radii r and s is
max(r, s)^{-mu} kbar(min/max).  The mean is over w uniform on S^{N-1}; for the
half-ball it is the conditional mean given that both points lie in the same
hemisphere, which only needs the law of the angle between them.

The profiles are tabulated once per (N, mu, region) as log kbar against
z = log(1 - t) and interpolated with a cubic spline.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.special import hyp2f1

from .exponents import sphere_area

_Z_MIN = -45.0


def _theta_rule(n_panels=72, q=24):
    """Composite Gauss-Legendre rule on [0, pi] with panels halving towards 0."""
    edges = np.concatenate([[0.0], np.pi * 2.0 ** -np.arange(n_panels - 1, -1, -1.0)])
    x, w = leggauss(q)
    a, b = edges[:-1, None], edges[1:, None]
    theta = (0.5 * (b - a) * (x + 1.0) + a).ravel()
    weight = (0.5 * (b - a) * w).ravel()
    return theta, weight


def angular_mean(dim, mu, t, region="full"):
    """Angular mean kbar(t) by direct quadrature in the polar angle.

    Parameters
    ----------
    dim : int
        Ambient dimension N >= 2.
    mu : float
        Kernel power.
    t : array_like
        Radius ratios in [0, 1).
    region : {'full', 'half'}
        Whole sphere, or pairs of points constrained to one hemisphere.
    """
    if dim < 2:
        raise ValueError("angular means need dim >= 2")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta, wq = _theta_rule()
    dens = wq * np.sin(theta) ** (dim - 2)
    if region == "half":
        # P(both in one hemisphere | angle theta) = (1 - theta/pi)/2, against 1/4 overall
        dens = dens * 2.0 * (1.0 - theta / np.pi)
    elif region != "full":
        raise ValueError(f"unknown region {region!r}")
    norm = (wq * np.sin(theta) ** (dim - 2)).sum()
    out = np.empty_like(t)
    s2 = np.sin(0.5 * theta) ** 2
    for lo in range(0, t.size, 256):
        tt = t[lo:lo + 256, None]
        # |e - t w|^2 written without cancellation near t = 1, theta = 0
        d2 = (1.0 - tt) ** 2 + 4.0 * tt * s2[None, :]
        out[lo:lo + 256] = (d2 ** (-0.5 * mu)) @ dens / norm
    return out


def angular_mean_hyp2f1(dim, mu, t):
    """Closed form of the full-sphere mean, 2F1(mu/2, mu/2 - N/2 + 1; N/2; t^2)."""
    t = np.asarray(t, dtype=float)
    return hyp2f1(0.5 * mu, 0.5 * mu - 0.5 * dim + 1.0, 0.5 * dim, t * t)


class RadialProfile:
    """Spline interpolant of the angular mean in z = log(1 - t)."""

    def __init__(self, dim, mu, region="full", n_table=4097):
        self.dim, self.mu, self.region = int(dim), float(mu), region
        z = np.linspace(_Z_MIN, 0.0, n_table)
        t = -np.expm1(z)
        logk = np.log(angular_mean(dim, mu, t, region))
        spline = CubicSpline(z, logk)
        self._z0 = z[0]
        self._dz = z[1] - z[0]
        self._coef = spline.c
        self._n = n_table
        self._tail_slope = spline(z[0], 1)
        self._tail_value = logk[0]

    def log_value(self, t):
        z = np.log1p(-np.asarray(t, dtype=float))
        out = np.empty_like(z)
        low = z < self._z0
        out[low] = self._tail_value + self._tail_slope * (z[low] - self._z0)
        zz = z[~low]
        idx = np.clip(((zz - self._z0) / self._dz).astype(np.int64), 0, self._n - 2)
        h = zz - (self._z0 + idx * self._dz)
        c = self._coef
        out[~low] = ((c[0, idx] * h + c[1, idx]) * h + c[2, idx]) * h + c[3, idx]
        return out

    def __call__(self, t):
        return np.exp(self.log_value(t))

    def kernel(self, r, s):
        """Angular-mean kernel max(r,s)^{-mu} kbar(min/max); needs max(r,s) > 0."""
        r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
        hi = np.maximum(r, s)
        lo = np.minimum(r, s)
        return hi ** (-self.mu) * self(lo / hi)


@lru_cache(maxsize=32)
def radial_profile(dim, mu, region="full") -> RadialProfile:
    return RadialProfile(dim, mu, region)


def _hat_cell_rule(mu, dim, q=40):
    """Graded nodes on [0, 1] for integrals with an endpoint singularity."""
    m = 4 if mu >= dim - 1 else 2
    x, w = leggauss(q)
    tau = 0.5 * (x + 1.0)
    return tau**m, 0.5 * w * m * tau ** (m - 1)


def self_cell_values(profile: RadialProfile, r, sphere_factor, weights):
    """Hat-weighted self-interaction of each radial node, divided by its weight.

    Entry i is (1/w_i) * int hat_i(s) K(r_i, s) c s^{N-1} ds, the singular
    diagonal of the discrete radial operator.
    """
    N, mu = profile.dim, profile.mu
    sig, ws = _hat_cell_rule(mu, N)
    out = np.zeros_like(r)
    for side in (-1, 1):
        if side < 0:
            idx = np.arange(1, len(r))
            h = r[idx] - r[idx - 1]
        else:
            idx = np.arange(0, len(r) - 1)
            h = r[idx + 1] - r[idx]
        ri = r[idx][:, None]
        s = ri + side * h[:, None] * sig[None, :]
        hat = 1.0 - sig[None, :]
        with np.errstate(divide="ignore"):
            k = profile.kernel(ri, s)
        val = hat * k * sphere_factor * s ** (N - 1) * h[:, None] * ws[None, :]
        out[idx] += val.sum(axis=1)
    return out / weights


@dataclass(frozen=True, eq=False)
class RadialKernelTable:
    """Sphere-integrated shell kernel K(r_i, r_j) = int_{S^{N-1}} |r_i e_1 - r_j w|^{-mu} dw.

    The diagonal holds the hat-cell average of the kernel (the value actually
    used by the quadrature), since the pointwise value is singular or
    discontinuous there.
    """

    dim: int
    mu: float
    nodes: np.ndarray
    entries: np.ndarray

    @classmethod
    def build(cls, dim, mu, nodes):
        nodes = np.asarray(nodes, dtype=float)
        prof = radial_profile(dim, mu, "full")
        area = sphere_area(dim)
        ri, rj = np.meshgrid(nodes, nodes, indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = area * prof.kernel(ri, rj)
        from .grid import _radial_element_moments

        w, _ = _radial_element_moments(nodes, dim - 1, 1.0)
        np.fill_diagonal(ent, area * self_cell_values(prof, nodes, 1.0, w))
        return cls(int(dim), float(mu), nodes, ent)

    @property
    def grid_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.nodes).tobytes()).hexdigest()[:16]

    def cache_name(self) -> str:
        return f"rkt_N{self.dim}_mu{self.mu!r}_{self.grid_hash}.bin"

    def save(self, path):
        """Write magic, (N, mu, n), the nodes and the row-major table as 64-bit floats."""
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(b"RKT1")
            fh.write(struct.pack("<qdq", self.dim, self.mu, self.nodes.size))
            fh.write(self.nodes.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(self.entries, dtype="<f8").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(4) != b"RKT1":
                raise ValueError("not a radial kernel table file")
            dim, mu, n = struct.unpack("<qdq", fh.read(24))
            nodes = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            ent = np.frombuffer(fh.read(8 * n * n), dtype="<f8").copy()
        if ent.size != n * n:
            raise ValueError("truncated kernel table file")
        return cls(int(dim), float(mu), nodes, ent.reshape(n, n))

    @classmethod
    def cached(cls, dim, mu, nodes, cache_dir):
        """Load from ``cache_dir`` when present, otherwise build and store."""
        nodes = np.asarray(nodes, dtype=float)
        probe = cls(int(dim), float(mu), nodes, np.empty((0, 0)))
        path = Path(cache_dir) / probe.cache_name()
        if path.exists():
            tab = cls.load(path)
            if np.array_equal(tab.nodes, nodes):
                return tab
        tab = cls.build(dim, mu, nodes)
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        tab.save(path)
        return tab


# -- exact potential of the uniform density on a box ----------------------------


def _pyramid_rule(dim, q):
    x, w = leggauss(q)
    sig = 0.5 * (x + 1.0)
    s = sig**3
    ws = 0.5 * w * 3.0 * sig**2
    if dim == 1:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([s] * (dim - 1)), indexing="ij")
    wgrids = np.meshgrid(*([ws] * (dim - 1)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


def box_constant_potential(points, lo, hi, mu, q=None):
    """int_box |x - y|^{-mu} dy at each point of the closed box.

    The box is split into the 2^N orthant boxes around x; each orthant box
    with side lengths A is the union of N pyramids with apex x, and on the
    pyramid whose base is the face y_k = A_k

        int |y|^{-mu} dy = prod(A)/(N - mu) * int_{[0,1]^{N-1}}
                           (A_k^2 + sum_m A_m^2 s_m^2)^{-mu/2} ds.

    The remaining integral is smooth but peaked when A_k is small; it is
    computed with Gauss-Legendre after grading s = sigma^3.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    n, dim = pts.shape
    if dim == 1:
        a = pts[:, 0] - lo[0]
        b = hi[0] - pts[:, 0]
        return (a ** (1.0 - mu) + b ** (1.0 - mu)) / (1.0 - mu)
    if q is None:
        q = {2: 48, 3: 24}.get(dim, 10)
    S, WS = _pyramid_rule(dim, q)
    out = np.zeros(n)
    signs = np.array(np.meshgrid(*([[0, 1]] * dim), indexing="ij")).reshape(dim, -1).T
    chunk = max(1, 2_000_000 // max(1, S.shape[0]))
    for sgn in signs:
        A = np.where(sgn == 1, hi - pts, pts - lo)
        vol = np.prod(A, axis=1)
        for k in range(dim):
            others = [m for m in range(dim) if m != k]
            for c0 in range(0, n, chunk):
                Ak = A[c0:c0 + chunk, k][:, None]
                Am = A[c0:c0 + chunk][:, others]
                d2 = Ak**2 + (Am[:, None, :] ** 2 * S[None, :, :] ** 2).sum(axis=2)
                good = vol[c0:c0 + chunk] > 0
                val = np.zeros(d2.shape[0])
                val[good] = (d2[good] ** (-0.5 * mu)) @ WS
                out[c0:c0 + chunk] += vol[c0:c0 + chunk] * val / (dim - mu)
    return out
