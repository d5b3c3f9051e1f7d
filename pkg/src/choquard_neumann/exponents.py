"""Exponent algebra for the critical Choquard problem and boundary flatness data."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gamma


class ExponentError(ValueError):
    """Raised for a kernel power outside (0, N)."""


class DimensionError(ValueError):
    """Raised when the critical exponents are requested for N < 3."""


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^{dim-1} in R^dim."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    return float(2.0 * np.pi ** (dim / 2.0) / gamma(dim / 2.0))


@dataclass(frozen=True)
class ChoquardExponents:
    """Dimension ``N``, kernel power ``mu`` and the derived critical exponents.

    ``power`` is the exponent applied to ``u`` inside the double Riesz
    integral.  It defaults to ``two_star_mu``; low-dimensional engine tests
    (N < 3, where the critical exponent is undefined) must pass it explicitly.
    """

    N: int
    mu: float
    p: float | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DimensionError(f"N must be a positive integer, got {self.N!r}")
        if not (0.0 < self.mu < self.N):
            raise ExponentError(f"mu must lie in (0,N); got mu={self.mu}, N={self.N}")
        if self.p is None and self.N < 3:
            raise DimensionError("critical exponents need N >= 3; pass p explicitly for N < 3")
        if self.p is not None and self.p <= 0:
            raise ValueError("p must be positive")

    @property
    def two_star(self) -> float:
        if self.N < 3:
            raise DimensionError("2* is defined only for N >= 3")
        return 2.0 * self.N / (self.N - 2)

    @property
    def two_star_mu(self) -> float:
        if self.N < 3:
            raise DimensionError("2*_mu is defined only for N >= 3")
        return (2.0 * self.N - self.mu) / (self.N - 2)

    @property
    def power(self) -> float:
        return float(self.p) if self.p is not None else self.two_star_mu

    @property
    def hls_exponent(self) -> float:
        """Diagonal HLS Lebesgue exponent 2N/(2N - mu)."""
        return 2.0 * self.N / (2.0 * self.N - self.mu)

    @property
    def admissible_window(self) -> tuple[float, float]:
        return ((2.0 * self.N - self.mu) / self.N, self.two_star_mu)

    @property
    def flatness_gate(self) -> float:
        """Flatness order that the boundary must exceed: (6N - mu)/(2N - mu)."""
        return (6.0 * self.N - self.mu) / (2.0 * self.N - self.mu)

    @property
    def threshold_factor(self) -> float:
        """2^{(p-2)/p}, the boundary loss factor in the compactness threshold."""
        p = self.power
        return 2.0 ** ((p - 2.0) / p)


def critical_exponents(N: int, mu: float) -> ChoquardExponents:
    """Build the exponent record for dimension ``N >= 3`` and ``0 < mu < N``."""
    if not (0.0 < mu < N):
        raise ExponentError(f"mu must lie in (0,N); got mu={mu}, N={N}")
    if N < 3:
        raise DimensionError(f"critical exponents need N >= 3, got N={N}")
    return ChoquardExponents(int(N), float(mu))


@dataclass(frozen=True)
class FlatBoundarySpec:
    """Monomial boundary graph x_N = c |x'|^k inside a chart of radius R."""

    order_k: float
    coefficient: float = 0.0
    radius_R: float = 1.0

    def __post_init__(self):
        if not self.order_k > 1.0:
            raise ValueError("flatness order k must exceed 1")
        if not self.radius_R > 0.0:
            raise ValueError("chart radius R must be positive")
        if self.coefficient < 0.0:
            # only rho >= 0 is implemented
            raise ValueError("flatness coefficient must be >= 0")

    def rho(self, xprime_norm):
        return self.coefficient * np.abs(xprime_norm) ** self.order_k

    def rho_grad(self, xprime_norm):
        s = np.abs(xprime_norm)
        return self.coefficient * self.order_k * s ** (self.order_k - 1.0)

    @cached_property
    def sigma_radius(self) -> float:
        return 0.5 * self.radius_R
