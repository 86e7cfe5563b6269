"""Dirichlet sine basis on an interval.

Fields are stored as coefficient vectors in the L2-orthonormal eigenbasis

    e_k(x) = sqrt(2/L) sin(k pi x / L),   -e_k'' = (k pi / L)^2 e_k,

and moved to physical space on a uniform interior grid of ``n_grid`` nodes.
The trapezoid rule on that grid (boundary values vanish) integrates
sin(j.) sin(k.) exactly whenever j + k < 2 (n_grid + 1), so with
``n_grid >= 2 n_modes`` the discrete Gram matrix is the identity and
quadratic and quartic products of resolved fields are integrated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DomainSpec:
    """Interval (0, length) resolved by ``n_modes`` sine modes."""

    length: float
    n_modes: int
    n_grid: int | None = None

    def __post_init__(self):
        if self.n_grid is None:
            object.__setattr__(self, "n_grid", 2 * int(self.n_modes))
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValidationError(f"length > 0 violated: {self.length}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValidationError(f"n_modes >= 1 violated: {self.n_modes}")
        if self.n_grid < 2 * self.n_modes:
            raise ValidationError(
                f"n_grid >= 2*n_modes violated: {self.n_grid} < {2 * self.n_modes}"
            )

    @property
    def lambda1(self) -> float:
        return (np.pi / self.length) ** 2


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of a scalar field in the orthonormal sine basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1:
            raise ValidationError("coefficients must be a 1-D array")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.coeffs.size

    def __add__(self, other):
        return SpectralField(self.coeffs + coeffs_of(other))

    def __sub__(self, other):
        return SpectralField(self.coeffs - coeffs_of(other))

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n))

    @classmethod
    def mode(cls, n, k, amp=1.0):
        """``amp * e_k`` with ``k`` 1-based."""
        if not 1 <= k <= n:
            raise ValidationError(f"mode index {k} outside 1..{n}")
        c = np.zeros(n)
        c[k - 1] = amp
        return cls(c)


def coeffs_of(x) -> np.ndarray:
    """Coefficient array of a SpectralField or array-like."""
    if isinstance(x, SpectralField):
        return x.coeffs
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class Basis:
    domain: DomainSpec
    eigenvalues: np.ndarray
    norm_const: float
    nodes: np.ndarray
    weights: np.ndarray
    # synthesis[j, k] = e_{k+1}(x_j); analysis = (weights * synthesis).T
    synthesis: np.ndarray = field(repr=False)
    analysis: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.domain.n_modes

    @property
    def n_grid(self) -> int:
        return self.domain.n_grid

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    def gram(self) -> np.ndarray:
        return self.analysis @ self.synthesis

    def integrate(self, values) -> float:
        """Quadrature of grid values over the interval."""
        return float(np.dot(self.weights, values))

    def _check(self, c):
        if c.shape[-1] != self.n_modes:
            raise ValidationError(
                f"field has {c.shape[-1]} coefficients, basis has {self.n_modes}"
            )
        return c


def build_basis(domain: DomainSpec) -> Basis:
    """Eigenvalues, normalized sine eigenfunctions, grid and weights."""
    L, N, M = float(domain.length), int(domain.n_modes), int(domain.n_grid)
    k = np.arange(1, N + 1)
    eigenvalues = (k * np.pi / L) ** 2
    h = L / (M + 1)
    nodes = h * np.arange(1, M + 1)
    weights = np.full(M, h)
    norm_const = np.sqrt(2.0 / L)
    synthesis = norm_const * np.sin(np.outer(np.arange(1, M + 1), k) * np.pi / (M + 1))
    analysis = (weights[:, None] * synthesis).T.copy()
    for a in (eigenvalues, nodes, weights, synthesis, analysis):
        a.setflags(write=False)
    return Basis(domain, eigenvalues, norm_const, nodes, weights, synthesis, analysis)


def to_physical(field, basis: Basis) -> np.ndarray:
    """Grid values of a field (works on stacked coefficient arrays too)."""
    c = basis._check(coeffs_of(field))
    return c @ basis.synthesis.T


def from_physical(values, basis: Basis) -> SpectralField:
    """Discrete L2 projection of grid values onto the first N modes."""
    v = np.asarray(values, dtype=float)
    if v.shape != (basis.n_grid,):
        raise ValidationError(f"expected {basis.n_grid} grid values, got {v.shape}")
    return SpectralField(basis.analysis @ v)


def apply_laplacian(field, basis: Basis) -> SpectralField:
    c = basis._check(coeffs_of(field))
    return SpectralField(-basis.eigenvalues * c)


def grad_norm_sq(field, basis: Basis) -> float:
    c = basis._check(coeffs_of(field))
    return float(np.dot(basis.eigenvalues, c * c))


def l2_inner(a, b) -> float:
    ca, cb = coeffs_of(a), coeffs_of(b)
    if ca.shape != cb.shape:
        raise ValidationError(f"size mismatch: {ca.shape} vs {cb.shape}")
    return float(np.dot(ca, cb))


def lp_norm(field, p: float, basis: Basis) -> float:
    """(int |u|^p)^(1/p) by quadrature on the oversampled grid."""
    if not p >= 1:
        raise ValidationError(f"p >= 1 violated: {p}")
    u = to_physical(field, basis)
    return basis.integrate(np.abs(u) ** p) ** (1.0 / p)
