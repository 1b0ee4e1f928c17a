"""Finite-difference assembly of shifted Schrodinger operators.

Builds A = c_lap * L_h + diag(V) + sigma * M on a rectangular box with
homogeneous Dirichlet boundaries, where L_h is the (2d+1)-point Laplacian
and M holds the tensor-product quadrature weights (cell volumes).  All
entries of A carry the quadrature weight so that C_U^T A C_V approximates
the energy bilinear form a(u,v) + sigma*(u,v) and C_U^T diag(M) C_V the
L2 pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, GridTooSmall, NoConvergence, SingularPotential

__all__ = [
    "DomainSpec",
    "GridSpec",
    "ZeroPotential",
    "HarmonicPotential",
    "SoftCoulombPotential",
    "Discretization",
    "assemble",
    "node_coordinates",
    "apply_stiffness",
    "apply_mass",
    "estimate_lambda1",
]


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box in 1, 2 or 3 dimensions."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        for lo, hi in zip(self.lower, self.upper):
            if not hi > lo:
                raise ValueError(f"domain side [{lo}, {hi}] is empty")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float) - np.asarray(self.lower, dtype=float)


@dataclass(frozen=True)
class GridSpec:
    """Interior grid points per axis; boundary nodes are eliminated."""

    points_per_dim: tuple[int, ...]

    def __post_init__(self):
        if any(int(n) < 2 for n in self.points_per_dim):
            raise GridTooSmall(f"need >= 2 interior points per axis, got {self.points_per_dim}")
        if self.total_points < 3:
            raise GridTooSmall(f"total interior points {self.total_points} < 3")

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points_per_dim))

    def spacings(self, domain: DomainSpec) -> np.ndarray:
        if len(self.points_per_dim) != domain.dim:
            raise DimensionMismatch("grid and domain dimensions differ")
        return domain.lengths / (np.asarray(self.points_per_dim) + 1)


@dataclass(frozen=True)
class ZeroPotential:
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(points.shape[0])


@dataclass(frozen=True)
class HarmonicPotential:
    """V(x) = coeff * |x|^2."""

    coeff: float

    def __post_init__(self):
        if not self.coeff > 0:
            raise ValueError("harmonic coeff must be positive")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.coeff * np.sum(points**2, axis=1)


@dataclass(frozen=True)
class SoftCoulombPotential:
    """V(x) = -charge / sqrt(|x|^2 + softening^2)."""

    charge: float
    softening: float = 0.0

    def __post_init__(self):
        if self.softening < 0:
            raise ValueError("softening must be >= 0")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        r2 = np.sum(points**2, axis=1)
        if self.softening == 0.0 and np.min(r2) < 1e-24:
            raise SingularPotential("grid node within 1e-12 of the origin with zero softening")
        return -self.charge / np.sqrt(r2 + self.softening**2)


Potential = ZeroPotential | HarmonicPotential | SoftCoulombPotential


@dataclass
class Discretization:
    """Sparse operator pair (A, M) with grid metadata.

    A is exactly symmetric by construction.  lambda1_est is the smallest
    eigenvalue of the shifted pencil (A, M), populated by estimate_lambda1.
    """

    A: sp.csr_matrix
    M: np.ndarray
    sigma: float
    c_lap: float
    grid: GridSpec
    domain: DomainSpec
    potential: Potential
    lambda1_est: float | None = field(default=None)

    @property
    def n_points(self) -> int:
        return self.grid.total_points

    def check_block(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.shape[0] != self.n_points:
            raise DimensionMismatch(
                f"block state must be ({self.n_points}, N), got {U.shape}"
            )
        return U


def node_coordinates(domain: DomainSpec, grid: GridSpec) -> np.ndarray:
    """Interior node coordinates, shape (Ng, dim), C-order (last axis fastest)."""
    h = grid.spacings(domain)
    axes = [
        domain.lower[k] + h[k] * np.arange(1, grid.points_per_dim[k] + 1)
        for k in range(domain.dim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def assemble(
    domain: DomainSpec,
    grid: GridSpec,
    potential: Potential,
    c_lap: float = 1.0,
    sigma: float = 0.0,
) -> Discretization:
    """Assemble the shifted operator A and quadrature weights M.

    A = weight * (c_lap * L + diag(V) + sigma), with weight = prod(h), so the
    pencil (A, M) has the eigenvalues of the finite-difference Schrodinger
    operator plus sigma.
    """
    if not c_lap > 0:
        raise ValueError("c_lap must be positive")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    h = grid.spacings(domain)
    weight = float(np.prod(h))

    lap = None
    for k in range(domain.dim):
        lk = _laplacian_1d(grid.points_per_dim[k], h[k])
        term = lk
        for j in range(domain.dim):
            if j == k:
                continue
            ident = sp.identity(grid.points_per_dim[j], format="csr")
            term = sp.kron(term, ident, format="csr") if j > k else sp.kron(ident, term, format="csr")
        lap = term if lap is None else lap + term

    v = potential.evaluate(node_coordinates(domain, grid))
    A = (c_lap * lap + sp.diags(v + sigma)) * weight
    A = A.tocsr()
    A.sort_indices()
    M = np.full(grid.total_points, weight)
    return Discretization(A=A, M=M, sigma=sigma, c_lap=c_lap, grid=grid,
                          domain=domain, potential=potential)


def apply_stiffness(disc: Discretization, U: np.ndarray) -> np.ndarray:
    """A @ U columnwise."""
    return disc.A @ disc.check_block(U)


def apply_mass(disc: Discretization, U: np.ndarray) -> np.ndarray:
    """diag(M) @ U columnwise."""
    return disc.M[:, None] * disc.check_block(U)


def estimate_lambda1(disc, gop, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Smallest eigenvalue of the shifted pencil (A, M) by inverse power iteration.

    M-normalized iteration with a deterministic start; converged when the
    Rayleigh quotient changes by less than tol relative.  The estimate is
    stored into disc.lambda1_est and returned.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = np.ones((disc.n_points, 1))
    x /= np.sqrt(float(x[:, 0] @ (disc.M * x[:, 0])))
    rho_old = np.inf
    for _ in range(max_iter):
        y = gop.apply(x)
        y /= np.sqrt(float(y[:, 0] @ (disc.M * y[:, 0])))
        rho = float(y[:, 0] @ (disc.A @ y[:, 0]))
        if abs(rho - rho_old) < tol * abs(rho):
            disc.lambda1_est = rho
            return rho
        rho_old = rho
        x = y
    raise NoConvergence(f"inverse power iteration: no convergence in {max_iter} iterations")
