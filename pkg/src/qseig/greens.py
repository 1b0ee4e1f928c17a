"""Application of the inverse operator G = A^{-1} diag(M) to block states.

One application of G is N sparse solves against the shifted operator; the
factorization (or CG setup) is prepared once and amortized over the whole
iteration, since A never changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import Discretization
from .errors import NoConvergence, NonFinite, NotPositiveDefinite

__all__ = ["DirectFactorization", "ConjugateGradient", "InverseOperator", "prepare", "apply_green"]

# above this many unknowns a factorization's fill-in stops paying off
_DIRECT_LIMIT = 200_000


@dataclass(frozen=True)
class DirectFactorization:
    pass


@dataclass(frozen=True)
class ConjugateGradient:
    tol: float = 1e-12
    max_iter: int = 20000
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0.0 < self.tol <= 1e-4:
            raise ValueError("CG tol must lie in (0, 1e-4]")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


def _probe_smallest_eigenvalue(A: sp.csr_matrix) -> float:
    """Loose Lanczos estimate of lambda_min(A), deterministic start."""
    n = A.shape[0]
    if n <= 2:
        return float(np.linalg.eigvalsh(A.toarray())[0])
    v0 = np.ones(n)
    try:
        vals = spla.eigsh(A, k=1, which="SA", v0=v0, tol=1e-6,
                          maxiter=max(5000, 10 * n), return_eigenvectors=False)
        return float(vals[0])
    except spla.ArpackNoConvergence as exc:
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            return float(exc.eigenvalues[0])
        raise NoConvergence("SPD probe did not converge") from exc


class InverseOperator:
    """Prepared solver state applying G = A^{-1} diag(M) to block states."""

    def __init__(self, disc: Discretization, method):
        self.disc = disc
        self.method = method
        self.solve_count = 0
        scale = float(np.max(np.abs(disc.A.diagonal())))
        lam_min = _probe_smallest_eigenvalue(disc.A)
        if lam_min < -1e-10 * scale:
            raise NotPositiveDefinite(
                f"operator has a negative pencil eigenvalue ({lam_min / np.min(disc.M):.4g}); "
                "increase the spectral shift sigma"
            )
        if isinstance(method, DirectFactorization):
            try:
                self._lu = spla.splu(disc.A.tocsc())
            except RuntimeError as exc:  # exactly singular
                raise NotPositiveDefinite(str(exc)) from exc
            self._precond = None
        elif isinstance(method, ConjugateGradient):
            self._lu = None
            if method.preconditioner == "jacobi":
                inv_diag = 1.0 / disc.A.diagonal()
                self._precond = spla.LinearOperator(
                    disc.A.shape, matvec=lambda x: inv_diag * x)
            else:
                self._precond = None
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def apply(self, U: np.ndarray) -> np.ndarray:
        """Solve A X = diag(M) U columnwise; increments solve_count by N."""
        U = self.disc.check_block(U)
        rhs = self.disc.M[:, None] * U
        if self._lu is not None:
            X = self._lu.solve(rhs)
        else:
            X = np.empty_like(rhs)
            for j in range(rhs.shape[1]):
                x, info = spla.cg(self.disc.A, rhs[:, j], rtol=self.method.tol,
                                  atol=0.0, maxiter=self.method.max_iter,
                                  M=self._precond)
                if info != 0:
                    raise NoConvergence(f"CG failed on column {j} (info={info})")
                X[:, j] = x
        if not np.all(np.isfinite(X)):
            raise NonFinite("inverse-operator solve produced non-finite entries")
        self.solve_count += U.shape[1]
        return X


def prepare(disc: Discretization, method=None) -> InverseOperator:
    """Prepare the inverse operator; raises NotPositiveDefinite if sigma is too small.

    Default method: direct sparse factorization up to 200k unknowns, then
    Jacobi-preconditioned CG.
    """
    if method is None:
        method = DirectFactorization() if disc.n_points <= _DIRECT_LIMIT else ConjugateGradient()
    return InverseOperator(disc, method)


def apply_green(gop: InverseOperator, U: np.ndarray) -> np.ndarray:
    return gop.apply(U)
