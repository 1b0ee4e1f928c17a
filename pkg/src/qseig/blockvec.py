"""Block-state algebra: Gram matrices, small dense symmetric kernels.

A block state is a dense (Ng, N) array whose columns are grid functions.
Gram matrices are explicitly symmetrized on construction so floating-point
drift cannot break SPD assumptions downstream.
"""

from __future__ import annotations

import numpy as np

from .discretize import Discretization, apply_mass, apply_stiffness
from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

__all__ = ["gram_l2", "gram_a", "combine", "sym_eig", "inv_sqrt", "subspace_distance_a"]


def _check_pair(disc: Discretization, U: np.ndarray, V: np.ndarray):
    U = disc.check_block(U)
    V = disc.check_block(V)
    return U, V


def gram_l2(disc: Discretization, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """L2 pairing matrix <U, V> = U^T diag(M) V, symmetrized when U is V."""
    U, V = _check_pair(disc, U, V)
    S = U.T @ apply_mass(disc, V)
    if U is V or (U.shape == V.shape and np.shares_memory(U, V)):
        S = 0.5 * (S + S.T)
    return S


def gram_a(disc: Discretization, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Energy pairing matrix <U, V>_a = U^T A V (A carries the shift)."""
    U, V = _check_pair(disc, U, V)
    S = U.T @ apply_stiffness(disc, V)
    if U is V or (U.shape == V.shape and np.shares_memory(U, V)):
        S = 0.5 * (S + S.T)
    return S


def combine(U: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """Right-multiply a block state by a small coefficient matrix."""
    U = np.asarray(U, dtype=float)
    coeff = np.asarray(coeff, dtype=float)
    if U.ndim != 2 or coeff.ndim != 2 or U.shape[1] != coeff.shape[0]:
        raise DimensionMismatch(f"cannot combine {U.shape} with {coeff.shape}")
    return U @ coeff


def sym_eig(S: np.ndarray):
    """Eigendecomposition of a small symmetric matrix.

    Returns (eigenvalues ascending, orthogonal eigenvectors) with a fixed
    sign convention: the largest-magnitude entry of each eigenvector is
    positive, so repeated runs are reproducible.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got {S.shape}")
    try:
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"symmetric eigensolve failed: {exc}") from exc
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


def inv_sqrt(S: np.ndarray) -> np.ndarray:
    """Inverse matrix square root of an SPD Gram matrix."""
    vals, vecs = sym_eig(S)
    if vals[0] <= 1e-14 * max(vals[-1], 0.0):
        raise NotPositiveDefinite(
            f"matrix not SPD enough for inverse sqrt (eigenvalues {vals[0]:.3e}..{vals[-1]:.3e})"
        )
    R = (vecs / np.sqrt(vals)) @ vecs.T
    return 0.5 * (R + R.T)


def subspace_distance_a(disc: Discretization, U: np.ndarray, V: np.ndarray) -> float:
    """Distance min over orthogonal Q of ||U - V Q||_a between column spans.

    Equals sqrt(||U||_a^2 + ||V||_a^2 - 2 * nuclear_norm(<V, U>_a)).
    """
    U, V = _check_pair(disc, U, V)
    if U.shape != V.shape:
        raise DimensionMismatch(f"shapes differ: {U.shape} vs {V.shape}")
    nu = float(np.trace(gram_a(disc, U, U)))
    nv = float(np.trace(gram_a(disc, V, V)))
    cross = gram_a(disc, V, U)
    nuclear = float(np.sum(np.linalg.svd(cross, compute_uv=False)))
    return float(np.sqrt(max(nu + nv - 2.0 * nuclear, 0.0)))
