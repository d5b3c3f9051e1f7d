"""Discretized domains, grid functions and the basic quadratures on them.

Two families of domains are supported:

* tensor-product vertex grids on boxes (``box`` and the mirror-symmetric
  ``reflected-pair``), with trapezoid weights;
* one-dimensional radial grids standing for a ball or a half-ball in R^N
  (``radial-ball``, ``radial-half-ball``), with lumped piecewise-linear
  weights carrying the Jacobian r^{N-1}.

Both families share the same discrete Dirichlet form: edge differences
weighted so that it is the exact P1 stiffness on radial grids and the
mirror-ghost Neumann stencil on boxes.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from .exponents import FlatBoundarySpec, sphere_area

BOX_KINDS = ("box", "reflected-pair")
RADIAL_KINDS = ("radial-ball", "radial-half-ball")
KINDS = BOX_KINDS + RADIAL_KINDS

INTERIOR, GAMMA0, GAMMA1, SIGMA = "interior", "gamma0", "gamma1", "sigma"


class DomainError(ValueError):
    """Inconsistent domain description."""


class StencilError(ValueError):
    """The domain kind has no gradient stencil for the requested operation."""


def _trapezoid_weights(x):
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def _difference_matrix(n):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def _radial_element_moments(r, power, density=1.0):
    """Lumped hat-function integrals of density * r^power on a 1D mesh.

    Returns ``(node_weights, element_integrals)``.
    """
    q = max(2, int(np.ceil((power + 2) / 2)) + 1)
    xg, wg = leggauss(q)
    a, b = r[:-1], r[1:]
    h = b - a
    s = 0.5 * (xg[None, :] + 1.0)
    pts = a[:, None] + h[:, None] * s
    f = density * pts**power * (0.5 * wg[None, :]) * h[:, None]
    left = (f * (1.0 - s)).sum(axis=1)
    right = (f * s).sum(axis=1)
    w = np.zeros_like(r)
    w[:-1] += left
    w[1:] += right
    return w, f.sum(axis=1)


@dataclass(frozen=True, eq=False)
class GridDomain:
    """A discretized domain.  Immutable; derived arrays are computed lazily.

    Parameters
    ----------
    kind : str
        One of ``box``, ``reflected-pair``, ``radial-ball``, ``radial-half-ball``.
    extents : tuple of (lo, hi)
        Per-axis bounds for boxes; a single ``(0, R)`` for radial kinds.
    resolution : tuple of int
        Nodes per axis (radial kinds: number of radial nodes).
    dim : int
        Ambient dimension N.
    flatness : FlatBoundarySpec, optional
        Boundary graph x_N = c|x'|^k near the chart centre.
    dirichlet : tuple of str
        Faces carrying the Dirichlet part Gamma_0: ``"x1-"``, ``"x2+"``, ...
        on boxes, ``"cap"`` (the sphere r = R) on radial kinds.
    grading : str
        ``uniform`` or ``geometric`` radial spacing.
    r_min : float, optional
        First positive node for geometric grading.
    """

    kind: str
    extents: tuple
    resolution: tuple
    dim: int
    flatness: FlatBoundarySpec | None = None
    dirichlet: tuple = ()
    grading: str = "uniform"
    r_min: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def is_radial(self) -> bool:
        return self.kind in RADIAL_KINDS

    @property
    def is_half(self) -> bool:
        return self.kind == "radial-half-ball"

    @cached_property
    def axes(self) -> list:
        if self.is_radial:
            R = self.extents[0][1]
            n = self.resolution[0]
            if self.grading == "geometric":
                r = np.concatenate([[0.0], np.geomspace(self.r_min, R, n - 1)])
            else:
                r = np.linspace(0.0, R, n)
            return [r]
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.extents, self.resolution)]

    @property
    def radii(self) -> np.ndarray:
        if not self.is_radial:
            raise StencilError("radii are defined only on radial domains")
        return self.axes[0]

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim); radial kinds give (n_nodes, 1)."""
        if self.is_radial:
            return self.radii[:, None]
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @cached_property
    def sphere_factor(self) -> float:
        """Angular measure attached to the radial Jacobian (halved on half-balls)."""
        c = sphere_area(self.dim)
        return 0.5 * c if self.is_half else c

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights; positive and summing to the domain measure."""
        if self.is_radial:
            w, _ = _radial_element_moments(self.radii, self.dim - 1, self.sphere_factor)
            return w
        w = np.ones(1)
        for a in self.axes:
            w = np.multiply.outer(w, _trapezoid_weights(a)).ravel()
        return w

    @property
    def measure(self) -> float:
        if self.is_radial:
            return self.sphere_factor * self.extents[0][1] ** self.dim / self.dim
        return float(np.prod([hi - lo for lo, hi in self.extents]))

    # -- boundary bookkeeping -------------------------------------------------

    def _face_masks(self):
        masks = {}
        for k, a in enumerate(self.axes):
            idx = np.unravel_index(np.arange(self.n_nodes), self.shape)[k]
            masks[f"x{k + 1}-"] = idx == 0
            masks[f"x{k + 1}+"] = idx == len(a) - 1
        return masks

    @cached_property
    def node_roles(self) -> np.ndarray:
        roles = np.full(self.n_nodes, INTERIOR, dtype=object)
        if self.is_radial:
            if self.is_half:
                roles[0] = GAMMA1
            roles[-1] = GAMMA0 if "cap" in self.dirichlet else GAMMA1
            return roles
        masks = self._face_masks()
        on_boundary = np.zeros(self.n_nodes, dtype=bool)
        on_dirichlet = np.zeros(self.n_nodes, dtype=bool)
        for name, m in masks.items():
            on_boundary |= m
            if name in self.dirichlet:
                on_dirichlet |= m
        roles[on_boundary] = GAMMA1
        # Gamma_0 dominates at Gamma_0/Gamma_1 junctions
        roles[on_dirichlet] = GAMMA0
        if self.flatness is not None and self.flatness.coefficient > 0:
            roles[self._sigma_mask()] = SIGMA
        return roles

    def _chart_centre(self):
        c = np.array([0.5 * (lo + hi) for lo, hi in self.extents])
        c[-1] = self.extents[-1][0]
        return c

    def _sigma_mask(self):
        fl = self.flatness
        x = self.points - self._chart_centre()
        xp = np.linalg.norm(x[:, :-1], axis=1)
        xn = x[:, -1]
        inside = np.linalg.norm(x, axis=1) < fl.sigma_radius
        return inside & (xn > 0) & (xn < fl.rho(xp))

    @property
    def free_mask(self) -> np.ndarray:
        """Nodes not pinned by the Dirichlet condition."""
        return self.node_roles != GAMMA0

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """(N-1)-dimensional trace weights on Gamma_1 nodes."""
        bw = np.zeros(self.n_nodes)
        if self.is_radial:
            R = self.extents[0][1]
            if self.is_half:
                if self.dim >= 2:
                    w, _ = _radial_element_moments(self.radii, self.dim - 2, sphere_area(self.dim - 1))
                    bw += w
                if "cap" not in self.dirichlet:
                    bw[-1] += self.sphere_factor * R ** (self.dim - 1)
            elif "cap" not in self.dirichlet:
                bw[-1] += self.sphere_factor * R ** (self.dim - 1)
            bw[self.node_roles == GAMMA0] = 0.0
            return bw
        tw = [_trapezoid_weights(a) for a in self.axes]
        masks = self._face_masks()
        for k in range(self.dim):
            trans = np.ones(1)
            for m, a in enumerate(self.axes):
                factor = np.ones(len(a)) if m == k else tw[m]
                trans = np.multiply.outer(trans, factor).ravel()
            for side in "-+":
                name = f"x{k + 1}{side}"
                if name in self.dirichlet:
                    continue
                bw[masks[name]] += trans[masks[name]]
        bw[self.node_roles == GAMMA0] = 0.0
        return bw

    @cached_property
    def sigma_weights(self) -> np.ndarray:
        """Per-node share of the measure of the layer Sigma between x_N = 0 and the graph.

        On radial half-balls the layer is integrated in the thin-layer
        approximation: its radial density is |S^{N-2}| c r^{N+k-2} for r < R/2.
        On boxes the nodes inside Sigma carry their trapezoid weights.
        """
        fl = self.flatness
        if fl is None or fl.coefficient == 0:
            return np.zeros(self.n_nodes)
        if not self.is_radial:
            return np.where(self._sigma_mask(), self.weights, 0.0)
        return sigma_layer_weights(self.radii, self.dim, fl)

    @property
    def sigma_measure(self) -> float:
        return float(self.sigma_weights.sum())

    # -- discrete Dirichlet form ---------------------------------------------

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix A with u^T A u the discrete integral of |grad u|^2."""
        if self.is_radial:
            r = self.radii
            _, elem = _radial_element_moments(r, self.dim - 1, self.sphere_factor)
            coef = elem / np.diff(r) ** 2
            D = _difference_matrix(len(r))
            return (D.T @ sp.diags(coef) @ D).tocsr()
        tw = [_trapezoid_weights(a) for a in self.axes]
        A = None
        for k in range(self.dim):
            factors = []
            for m, a in enumerate(self.axes):
                if m == k:
                    d = _difference_matrix(len(a))
                    factors.append(d.T @ sp.diags(1.0 / np.diff(a)) @ d)
                else:
                    factors.append(sp.diags(tw[m]))
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f)
            A = term if A is None else A + term
        return sp.csr_matrix(A)

    # -- serialization -------------------------------------------------------

    def to_spec_text(self) -> str:
        lines = [f"kind={self.kind}", f"dim={self.dim}"]
        lines.append("extents=" + ",".join(f"{lo!r}:{hi!r}" for lo, hi in self.extents))
        lines.append("resolution=" + ",".join(str(n) for n in self.resolution))
        if self.dirichlet:
            lines.append("dirichlet=" + ",".join(self.dirichlet))
        if self.is_radial:
            lines.append(f"grading={self.grading}")
            if self.r_min is not None:
                lines.append(f"r_min={self.r_min!r}")
        if self.flatness is not None:
            fl = self.flatness
            lines += [f"flatness.k={float(fl.order_k)!r}", f"flatness.c={float(fl.coefficient)!r}",
                      f"flatness.R={float(fl.radius_R)!r}"]
        return "\n".join(lines) + "\n"


def sigma_layer_weights(r, dim, flatness):
    """Lumped hat weights of the thin-layer density of Sigma on a radial mesh."""
    fl = flatness
    Rs = fl.sigma_radius
    c_area = sphere_area(dim - 1) if dim >= 2 else 1.0
    power = dim + fl.order_k - 2.0
    xg, wg = leggauss(16)
    w = np.zeros_like(r)
    for i in range(len(r) - 1):
        a, b = r[i], min(r[i + 1], Rs)
        if b <= a:
            continue
        h_full = r[i + 1] - r[i]
        pts = a + (b - a) * 0.5 * (xg + 1.0)
        f = c_area * fl.coefficient * pts**power * 0.5 * (b - a) * wg
        s = (pts - r[i]) / h_full
        w[i] += (f * (1.0 - s)).sum()
        w[i + 1] += (f * s).sum()
    return w


def make_domain(kind, extents, resolution, flatness=None, *, dim=None, dirichlet=(),
                grading="uniform", r_min=None) -> GridDomain:
    """Validate a domain description and build the :class:`GridDomain`."""
    if kind not in KINDS:
        raise DomainError(f"unknown domain kind {kind!r}; expected one of {KINDS}")
    extents = tuple((float(lo), float(hi)) for lo, hi in extents)
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution),) * (1 if kind in RADIAL_KINDS else len(extents))
    resolution = tuple(int(n) for n in resolution)
    if any(hi <= lo for lo, hi in extents):
        raise DomainError("each extent needs lo < hi")
    if any(n < 3 for n in resolution):
        raise DomainError("resolution must be >= 3 per axis")
    dirichlet = tuple(dirichlet)

    if kind in RADIAL_KINDS:
        if dim is None:
            raise DomainError("radial domains need dim")
        if len(extents) != 1 or extents[0][0] != 0.0:
            raise DomainError("radial extents must be a single (0, R)")
        if len(resolution) != 1:
            raise DomainError("radial domains take a single resolution")
        if grading not in ("uniform", "geometric"):
            raise DomainError(f"unknown grading {grading!r}")
        if grading == "geometric" and not (r_min and 0 < r_min < extents[0][1]):
            raise DomainError("geometric grading needs 0 < r_min < R")
        if any(f != "cap" for f in dirichlet):
            raise DomainError("radial domains accept only the 'cap' Dirichlet face")
        if flatness is not None:
            if kind != "radial-half-ball":
                raise DomainError("flatness applies only to half-balls or graph-boundary boxes")
            if flatness.radius_R > extents[0][1] * (1 + 1e-12):
                raise DomainError("flatness chart radius exceeds the domain")
    else:
        if dim is not None and dim != len(extents):
            raise DomainError("dim disagrees with the number of extents")
        dim = len(extents)
        if len(resolution) != dim:
            raise DomainError("resolution must list one count per axis")
        valid = {f"x{k + 1}{s}" for k in range(dim) for s in "-+"}
        bad = [f for f in dirichlet if f not in valid]
        if bad:
            raise DomainError(f"unknown Dirichlet faces {bad}")
        if kind == "reflected-pair":
            lo, hi = extents[-1]
            if not np.isclose(lo, -hi) or resolution[-1] % 2 == 0:
                raise DomainError("reflected-pair needs a last axis symmetric about 0 "
                                  "with an odd node count")
        if flatness is not None:
            if kind != "box":
                raise DomainError("flatness applies only to half-balls or graph-boundary boxes")
            half_widths = [0.5 * (hi - lo) for lo, hi in extents[:-1]]
            height = extents[-1][1] - extents[-1][0]
            if flatness.radius_R > min(half_widths + [height]) * (1 + 1e-12):
                raise DomainError("flatness chart radius exceeds the domain")
    return GridDomain(kind, extents, resolution, int(dim), flatness, dirichlet, grading, r_min)


def parse_domain_spec(text: str) -> GridDomain:
    """Build a domain from its plain-text ``key=value`` description."""
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"malformed line {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    known = {"kind", "dim", "extents", "resolution", "dirichlet", "grading", "r_min",
             "flatness.k", "flatness.c", "flatness.R"}
    unknown = sorted(set(kv) - known)
    if unknown:
        raise DomainError(f"unknown domain keys {unknown}")
    try:
        extents = [tuple(float(x) for x in e.split(":")) for e in kv["extents"].split(",")]
        resolution = tuple(int(x) for x in kv["resolution"].split(","))
        kind = kv["kind"]
    except KeyError as exc:
        raise DomainError(f"missing domain key {exc.args[0]!r}") from None
    flatness = None
    if "flatness.k" in kv:
        flatness = FlatBoundarySpec(float(kv["flatness.k"]), float(kv.get("flatness.c", 0.0)),
                                    float(kv.get("flatness.R", 1.0)))
    dirichlet = tuple(f for f in kv.get("dirichlet", "").split(",") if f)
    return make_domain(kind, extents, resolution, flatness,
                       dim=int(kv["dim"]) if "dim" in kv else None, dirichlet=dirichlet,
                       grading=kv.get("grading", "uniform"),
                       r_min=float(kv["r_min"]) if "r_min" in kv else None)


class GridFunction:
    """Nodal values attached to a :class:`GridDomain`."""

    __slots__ = ("domain", "values")

    def __init__(self, domain: GridDomain, values):
        values = np.asarray(values, dtype=float)
        if values.shape == ():
            values = np.full(domain.n_nodes, float(values))
        values = values.reshape(-1)
        if values.shape[0] != domain.n_nodes:
            raise ValueError(f"expected {domain.n_nodes} values, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        self.domain = domain
        self.values = values

    @classmethod
    def from_callable(cls, domain, func):
        """Sample ``func`` at the nodes; it receives coordinates of shape (n, dim)
        (radial domains: the radii, shape (n,))."""
        x = domain.radii if domain.is_radial else domain.points
        return cls(domain, func(x))

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.domain is not self.domain:
                raise ValueError("grid functions live on different domains")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.domain, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.domain, self.values - self._coerce(other))

    def __mul__(self, other):
        return GridFunction(self.domain, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.domain, -self.values)

    def __abs__(self):
        return GridFunction(self.domain, np.abs(self.values))

    def __pow__(self, p):
        if np.any(self.values < 0) and float(p) != int(p):
            raise ValueError("fractional powers need a nonnegative grid function")
        return GridFunction(self.domain, self.values**p)

    def __repr__(self):
        return f"GridFunction({self.domain.kind}, n={self.values.size})"

    def copy(self):
        return GridFunction(self.domain, self.values.copy())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["r"] if self.domain.is_radial else [f"x{k + 1}" for k in range(self.domain.dim)]
        writer.writerow(cols + ["value"])
        for x, v in zip(self.domain.points, self.values):
            writer.writerow([f"{c:.17g}" for c in x] + [f"{v:.17g}"])
        return buf.getvalue()


def read_grid_function(domain: GridDomain, text: str) -> GridFunction:
    """Load a CSV dump, checking that its coordinates match ``domain``'s nodes."""
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], [r for r in rows[1:] if r]
    data = np.array(body, dtype=float)
    if data.shape[0] != domain.n_nodes or data.shape[1] != len(header):
        raise ValueError("function dump does not match the domain node count")
    coords = data[:, :-1]
    if not np.allclose(coords, domain.points, rtol=1e-12, atol=1e-12):
        raise ValueError("function dump coordinates do not match the domain nodes")
    return GridFunction(domain, data[:, -1])


def integrate(f: GridFunction) -> float:
    """Quadrature of ``f`` over its domain."""
    return float(f.domain.weights @ f.values)


def dirichlet_energy(u: GridFunction) -> float:
    """Discrete integral of |grad u|^2 (edge differences, mirror-ghost Neumann closure)."""
    A = u.domain.stiffness
    return float(u.values @ (A @ u.values))
