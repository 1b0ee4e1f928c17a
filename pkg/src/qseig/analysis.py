"""Diagnostics, eigenpair extraction, reference oracle, and rate fitting.

Eigenvalue extraction projects the pencil onto the current block subspace
with the <U,U> weighting, so values are meaningful mid-run when the block
is only quasi-orthonormal; at convergence (<U,U> -> I) it reduces to the
spectrum of <G U, U>^{-1}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .blockvec import combine, gram_a, gram_l2, inv_sqrt, sym_eig
from .discretize import Discretization, apply_mass, apply_stiffness
from .errors import (
    BracketNotSPD,
    DimensionMismatch,
    GapTooSmallWarning,
    InsufficientData,
    NoConvergence,
    NonFinite,
    NotPositiveDefinite,
    RankDeficient,
    ZeroReference,
)
from .greens import InverseOperator

__all__ = [
    "EigenReport",
    "RateFit",
    "energy",
    "energy_unshifted",
    "orthogonality_error",
    "gradient_residual",
    "grad_norms",
    "extract_eigenvalues",
    "reference_subspace_iteration",
    "eigenvector_error",
    "closed_form_solution",
    "rk4_integrate",
    "fit_exponential_rate",
]

_ORACLE_SEED = 1789569706


@dataclass
class EigenReport:
    """Extracted eigenvalues (unshifted, ascending) with residual norms.

    energy is reported unshifted to match the eigenvalues; relative_errors
    is populated when a reference spectrum is supplied.
    """

    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    energy: float
    relative_errors: np.ndarray | None = None


@dataclass
class RateFit:
    series_name: str
    slope_per_step: float
    r_squared: float
    window: tuple[int, int]


def energy(disc: Discretization, U: np.ndarray) -> float:
    """E(U) = 0.5 trace <U,U>_a (the shifted form; monotone under the scheme)."""
    return 0.5 * float(np.trace(gram_a(disc, U, U)))


def energy_unshifted(disc: Discretization, U: np.ndarray) -> float:
    return energy(disc, U) - 0.5 * disc.sigma * float(np.trace(gram_l2(disc, U, U)))


def orthogonality_error(disc: Discretization, U: np.ndarray) -> float:
    """Frobenius norm of <U,U> - I."""
    S = gram_l2(disc, U, U)
    return float(np.linalg.norm(S - np.eye(S.shape[0])))


def gradient_residual(disc: Discretization, U: np.ndarray, GU: np.ndarray) -> np.ndarray:
    """R = G U - U <G U, U> given a precomputed G U."""
    S = gram_l2(disc, GU, U)
    return GU - combine(U, 0.5 * (S + S.T))


def grad_norms(disc: Discretization, gop: InverseOperator, U: np.ndarray):
    """(L2, a-norm) of the subspace gradient G U - U <G U, U>."""
    R = gradient_residual(disc, U, gop.apply(U))
    l2 = float(np.sqrt(max(np.trace(gram_l2(disc, R, R)), 0.0)))
    a = float(np.sqrt(max(np.trace(gram_a(disc, R, R)), 0.0)))
    return l2, a


def _check_full_rank(S: np.ndarray):
    vals = np.linalg.eigvalsh(0.5 * (S + S.T))
    if vals[0] <= 1e-12 * max(vals[-1], 0.0):
        raise RankDeficient(
            f"block Gram matrix nearly singular (eigenvalues {vals[0]:.3e}..{vals[-1]:.3e})"
        )


def extract_eigenvalues(
    disc: Discretization,
    gop: InverseOperator,
    U: np.ndarray,
    reference: np.ndarray | None = None,
) -> EigenReport:
    """Rayleigh-Ritz values of the pencil restricted to span(U).

    Solves the N x N problem on (<U,GU>, <U,U>); returns unshifted values
    ascending, M-normalized Ritz vectors' residual norms, and relative
    errors against `reference` when given.
    """
    U = disc.check_block(U)
    S = gram_l2(disc, U, U)
    _check_full_rank(S)
    T = gram_l2(disc, U, gop.apply(U))
    T = 0.5 * (T + T.T)
    Si = inv_sqrt(S)
    theta, Q = sym_eig(Si @ T @ Si)
    if theta[0] <= 0:
        raise NotPositiveDefinite("<U, G U> projection lost positivity")
    order = np.argsort(1.0 / theta)
    rho = 1.0 / theta[order]
    Y = (Si @ Q)[:, order]
    vecs = combine(U, Y)
    mv = apply_mass(disc, vecs)
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, mv))
    vecs /= norms
    av = apply_stiffness(disc, vecs)
    mv = apply_mass(disc, vecs)
    resid = np.linalg.norm(av - mv * rho, axis=0) / np.linalg.norm(mv, axis=0)
    lam = rho - disc.sigma
    rel = None
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        rel = np.abs(lam - reference) / np.abs(reference)
    return EigenReport(eigenvalues=lam, residual_norms=resid,
                       energy=energy_unshifted(disc, U), relative_errors=rel)


def reference_subspace_iteration(
    disc: Discretization,
    gop: InverseOperator,
    n_eig: int,
    tol: float = 1e-10,
    max_iter: int = 500,
    x0: np.ndarray | None = None,
    workspace_extra: int = 2,
):
    """Inverse subspace iteration with explicit orthonormalization (the
    classical baseline and test oracle).

    Each sweep applies G, M-orthonormalizes, and performs a Rayleigh-Ritz
    rotation; converged when the first n_eig residual norms fall below tol.
    A widened workspace (n_eig + workspace_extra columns) is kept so the
    Ritz window boundary can be inspected: if rho_N / rho_{N+1} is within
    1e-12 of 1 a GapTooSmallWarning is emitted (the target window may cut
    a degenerate cluster).

    Returns (EigenReport, block of the first n_eig Ritz vectors).
    """
    if n_eig > disc.n_points:
        raise ValueError("n_eig exceeds the number of grid points")
    width = min(n_eig + workspace_extra, disc.n_points)
    rng = np.random.default_rng(_ORACLE_SEED)
    if x0 is None:
        X = rng.standard_normal((disc.n_points, width))
    else:
        X = disc.check_block(x0).copy()
        if X.shape[1] < width:
            X = np.hstack([X, rng.standard_normal((disc.n_points, width - X.shape[1]))])
    X = combine(X, inv_sqrt(gram_l2(disc, X, X)))

    for _ in range(max_iter):
        X = gop.apply(X)
        X = combine(X, inv_sqrt(gram_l2(disc, X, X)))
        vals, Q = sym_eig(gram_a(disc, X, X))
        X = combine(X, Q)
        av = apply_stiffness(disc, X[:, :n_eig])
        mv = apply_mass(disc, X[:, :n_eig])
        resid = np.linalg.norm(av - mv * vals[:n_eig], axis=0) / np.linalg.norm(mv, axis=0)
        if np.all(resid < tol):
            if width > n_eig and vals[n_eig - 1] / vals[n_eig] >= 1.0 - 1e-12:
                warnings.warn(
                    "Ritz window closes a degenerate cluster; the target "
                    "invariant subspace may not be unique",
                    GapTooSmallWarning,
                )
            block = X[:, :n_eig].copy()
            report = EigenReport(eigenvalues=vals[:n_eig] - disc.sigma,
                                 residual_norms=resid,
                                 energy=energy_unshifted(disc, block))
            return report, block
    raise NoConvergence(f"subspace iteration: residuals above {tol} after {max_iter} sweeps")


def eigenvector_error(disc: Discretization, U_n: np.ndarray, U_end: np.ndarray) -> float:
    """Relative M-weighted block distance ||U_n - U_end|| / ||U_end||."""
    U_n = disc.check_block(U_n)
    U_end = disc.check_block(U_end)
    if U_n.shape != U_end.shape:
        raise DimensionMismatch(f"shapes differ: {U_n.shape} vs {U_end.shape}")
    den = np.sqrt(float(np.trace(gram_l2(disc, U_end, U_end))))
    if den < 1e-14:
        raise ZeroReference("reference block has zero norm")
    diff = U_n - U_end
    num = np.sqrt(max(float(np.trace(gram_l2(disc, diff, diff))), 0.0))
    return num / den


def _dense_pencil_basis(disc: Discretization):
    """Dense M-orthonormal eigenbasis of the pencil (A, M): A V = M V diag(w)."""
    if disc.n_points > 200:
        raise ValueError("dense path limited to Ng <= 200")
    sqm = np.sqrt(disc.M)
    B = disc.A.toarray() / sqm[:, None] / sqm[None, :]
    w, P = np.linalg.eigh(0.5 * (B + B.T))
    if w[0] <= 0:
        raise NotPositiveDefinite("pencil not positive definite on the dense path")
    V = P / sqm[:, None]
    return w, V


def closed_form_solution(disc: Discretization, U0: np.ndarray, t: float) -> np.ndarray:
    """Representative of the exact continuous-flow solution at time t.

    Computes exp(G t) U0 [I - <U0,U0> + <U0, exp(2 G t) U0>]^{-1/2} through
    the dense pencil eigenbasis.  The orthogonal factor of the true solution
    is unobservable, so compare outputs only in subspace metrics.
    """
    U0 = disc.check_block(U0)
    w, V = _dense_pencil_basis(disc)
    c = V.T @ (disc.M[:, None] * U0)
    exp_t = np.exp(t / w)
    Et_U0 = V @ (exp_t[:, None] * c)
    P2 = c.T @ (np.exp(2.0 * t / w)[:, None] * c)
    S0 = gram_l2(disc, U0, U0)
    bracket = np.eye(S0.shape[0]) - S0 + 0.5 * (P2 + P2.T)
    try:
        root = inv_sqrt(bracket)
    except NotPositiveDefinite as exc:
        raise BracketNotSPD(str(exc)) from exc
    return combine(Et_U0, root)


def rk4_integrate(
    disc: Discretization,
    gop: InverseOperator,
    U0: np.ndarray,
    t_end: float,
    dt: float,
) -> np.ndarray:
    """Classical RK4 on dU/dt = G U - U <G U, U> (reference integrator)."""
    if not dt > 0 or t_end < dt:
        raise ValueError("need dt > 0 and t_end >= dt")

    def rhs(U):
        return gradient_residual(disc, U, gop.apply(U))

    U = disc.check_block(U0).copy()
    n_full = int(np.floor(t_end / dt + 1e-12))
    leftover = t_end - n_full * dt
    steps = [dt] * n_full + ([leftover] if leftover > 1e-12 * t_end else [])
    for h in steps:
        k1 = rhs(U)
        k2 = rhs(U + 0.5 * h * k1)
        k3 = rhs(U + 0.5 * h * k2)
        k4 = rhs(U + h * k3)
        U = U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(U)):
            raise NonFinite("RK4 trajectory left the finite range")
    return U


def fit_exponential_rate(
    series,
    window_fraction: float = 0.7,
    name: str = "series",
    floor: float = 1e-13,
) -> RateFit:
    """Log-linear decay fit over the tail of a positive series.

    Points at or below the roundoff floor terminate the usable prefix; the
    fit uses the final window_fraction of that prefix (default 0.7, i.e.
    the initial 30% transient is excluded).
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    arr = np.asarray(series, dtype=float)
    usable = len(arr)
    for i, v in enumerate(arr):
        if not np.isfinite(v) or v <= floor:
            usable = i
            break
    if usable < 5:
        raise InsufficientData(f"only {usable} points above the {floor:g} floor")
    start = usable - max(int(np.ceil(window_fraction * usable)), 5)
    start = max(start, 0)
    idx = np.arange(start, usable)
    logy = np.log(arr[start:usable])
    slope, intercept = np.polyfit(idx, logy, 1)
    fitted = slope * idx + intercept
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - np.mean(logy)) ** 2))
    # a flat series has ss_tot at the rounding floor; report a perfect fit
    flat = ss_tot <= 1e-20 * max(1.0, float(np.mean(logy) ** 2)) * len(logy)
    r2 = 1.0 if flat else 1.0 - ss_res / ss_tot
    return RateFit(series_name=name, slope_per_step=float(slope),
                   r_squared=float(r2), window=(int(start), int(usable - 1)))
