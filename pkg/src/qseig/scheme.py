"""Quasi-orthogonal iteration: exact low-rank Cayley predictor + corrector.

One step costs exactly 2N inverse-operator solves: N for G U_n (shared by
the stopping gradient and the predictor) and N for G of the predicted
state inside the corrector.  The implicit midpoint predictor is solved
exactly through the rank-2N structure of the skew operator, so the block
Gram matrix is preserved to roundoff regardless of the step size.

Near convergence the corrector's Gram mode contracts by |1 - 2 tau /
lambda_1| per step; step sizes at or above lambda_1 (of the shifted
pencil) stop contracting the orthogonality error and the iteration can
stall in a limit cycle even though each step stays bounded.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from . import analysis
from .blockvec import combine, gram_a, gram_l2, inv_sqrt
from .discretize import Discretization, estimate_lambda1
from .errors import (
    MissingLambda1,
    NonFinite,
    RankDeficient,
    SmallSolveSingular,
    TauRejected,
)
from .greens import InverseOperator

__all__ = [
    "SchemeConfig",
    "StepDiagnostics",
    "StepBounds",
    "Termination",
    "RunHistory",
    "init_state",
    "skew_apply",
    "cayley_step",
    "corrector_step",
    "step",
    "bounds_from_scalars",
    "compute_step_bounds",
    "run",
]

INIT_MODES = ("raw_random", "quasi_stiefel_scaled", "orthonormal", "from_state")


@dataclass
class SchemeConfig:
    tau: float
    eps: float = 1e-5
    max_steps: int = 100_000
    init_mode: str = "quasi_stiefel_scaled"
    seed: int = 0
    enforce_bounds: str = "warn"  # warn | reject

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.enforce_bounds not in ("warn", "reject"):
            raise ValueError("enforce_bounds must be 'warn' or 'reject'")


@dataclass
class StepDiagnostics:
    """Per-iterate diagnostics.

    predictor_gram_drift is relative: ||<Uhat,Uhat> - <U,U>||_F / ||<U,U>||_F
    for the predictor step leaving this state (0.0 for a state that was
    never stepped from).
    """

    step_index: int
    energy: float
    orth_error: float
    grad_norm_l2: float
    grad_norm_a: float
    lambda_min_gram: float
    predictor_gram_drift: float
    green_solves: int


class Termination(enum.Enum):
    TOLERANCE_MET = "ToleranceMet"
    MAX_STEPS = "MaxSteps"
    DIVERGED = "Diverged"


@dataclass
class RunHistory:
    records: list[StepDiagnostics]
    terminated_by: Termination
    final_state: np.ndarray

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def steps_taken(self) -> int:
        return len(self.records) if self.terminated_by is Termination.MAX_STEPS \
            else len(self.records) - 1


@dataclass
class StepBounds:
    """Provable step-size safeguards (in terms of the shifted-pencil lambda_1).

    tau_energy uses the Poincare constant estimated as 1/sqrt(lambda_1),
    so it is itself an estimate.
    """

    tau_nonexpansion: float
    tau_quasi_stiefel: float
    tau_contraction: float
    tau_energy: float
    c_e: float


def _gram_eigs(disc: Discretization, U: np.ndarray) -> np.ndarray:
    S = gram_l2(disc, U, U)
    return np.linalg.eigvalsh(S)


def init_state(
    disc: Discretization,
    n_cols: int,
    mode: str = "quasi_stiefel_scaled",
    seed: int = 0,
    state: np.ndarray | None = None,
) -> np.ndarray:
    """Seeded initial block state.

    raw_random: iid standard normal entries.
    quasi_stiefel_scaled: scaled so lambda_min(<U,U>) = 1 (lands in the
        quasi-Stiefel set).
    orthonormal: right-multiplied by <U,U>^{-1/2} so <U,U> = I.
    from_state: validates a caller-supplied block.
    """
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}")
    if not 1 <= n_cols <= disc.n_points:
        raise ValueError(f"need 1 <= N <= {disc.n_points}, got {n_cols}")
    if mode == "from_state":
        if state is None:
            raise ValueError("from_state requires a state")
        U = disc.check_block(state)
        if U.shape[1] != n_cols or not np.all(np.isfinite(U)):
            raise ValueError("supplied state has wrong width or non-finite entries")
        vals = _gram_eigs(disc, U)
        if vals[0] < 1e-12 * vals[-1]:
            raise RankDeficient("supplied state is rank deficient")
        return U.copy()

    rng = np.random.default_rng(seed)
    for _ in range(3):
        U = rng.standard_normal((disc.n_points, n_cols))
        vals = _gram_eigs(disc, U)
        if vals[0] >= 1e-12 * vals[-1]:
            break
    else:
        raise RankDeficient("random draw repeatedly rank deficient")
    if mode == "raw_random":
        return U
    if mode == "quasi_stiefel_scaled":
        return U / np.sqrt(vals[0])
    return combine(U, inv_sqrt(gram_l2(disc, U, U)))


def skew_apply(
    disc: Discretization,
    gop: InverseOperator,
    U: np.ndarray,
    GU: np.ndarray,
    V: np.ndarray,
) -> np.ndarray:
    """Skew operator of the iteration: V -> GU <U,V> - U <GU,V>."""
    return combine(GU, gram_l2(disc, U, V)) - combine(U, gram_l2(disc, GU, V))


def _predictor_coefficients(disc, U, GU, tau):
    """Small-matrix data for the exact midpoint solve.

    The skew operator factors as A_U V = W <Z, V> with W = [GU, -U] and
    Z = [U, GU]; the midpoint relation reduces to a 2N x 2N linear system.
    """
    n = U.shape[1]
    s_uu = gram_l2(disc, U, U)
    s_ug = gram_l2(disc, U, GU)
    s_ug = 0.5 * (s_ug + s_ug.T)
    s_gg = gram_l2(disc, GU, GU)
    zw = np.block([[s_ug, -s_uu], [s_gg, -s_ug]])
    zu = np.vstack([s_uu, s_ug])
    zb = zu + 0.5 * tau * (zw @ zu)
    lhs = np.eye(2 * n) - 0.5 * tau * zw
    try:
        y = np.linalg.solve(lhs, zb)
    except np.linalg.LinAlgError as exc:
        raise SmallSolveSingular(
            "2N x 2N predictor system singular (tau pathological or rank collapse)"
        ) from exc
    return zu + y


def cayley_step(
    disc: Discretization,
    gop: InverseOperator,
    U: np.ndarray,
    GU: np.ndarray,
    tau: float,
) -> np.ndarray:
    """Exact implicit-midpoint (Cayley) predictor.

    Preserves <U,U> to roundoff for any tau; the fixed-point iteration on
    the midpoint relation is kept in the tests as an independent oracle.
    """
    coeff = _predictor_coefficients(disc, U, GU, tau)
    n = U.shape[1]
    U_hat = U + 0.5 * tau * (combine(GU, coeff[:n]) - combine(U, coeff[n:]))
    if not np.all(np.isfinite(U_hat)):
        raise NonFinite("predictor produced non-finite entries")
    return U_hat


def corrector_step(
    disc: Discretization,
    gop: InverseOperator,
    U_hat: np.ndarray,
    tau: float,
) -> np.ndarray:
    """Orthogonality corrector: U_hat - tau * G U_hat (<U_hat,U_hat> - I)."""
    GU_hat = gop.apply(U_hat)
    O = gram_l2(disc, U_hat, U_hat) - np.eye(U_hat.shape[1])
    return U_hat - tau * combine(GU_hat, O)


def step(
    disc: Discretization,
    gop: InverseOperator,
    U: np.ndarray,
    tau: float,
    step_index: int = 0,
    gu: np.ndarray | None = None,
):
    """One predictor-corrector step; returns (U_next, diagnostics of U).

    Exactly 2N solves: N for G U (skipped when gu is supplied) and N inside
    the corrector.
    """
    U = disc.check_block(U)
    if gu is None:
        gu = gop.apply(U)
    s_uu = gram_l2(disc, U, U)
    gram_fro = float(np.linalg.norm(s_uu))
    lam_min = float(np.linalg.eigvalsh(s_uu)[0])
    orth = float(np.linalg.norm(s_uu - np.eye(U.shape[1])))
    en = analysis.energy(disc, U)
    R = analysis.gradient_residual(disc, U, gu)
    g_l2 = float(np.sqrt(max(np.trace(gram_l2(disc, R, R)), 0.0)))
    g_a = float(np.sqrt(max(np.trace(gram_a(disc, R, R)), 0.0)))

    U_hat = cayley_step(disc, gop, U, gu, tau)
    drift = float(np.linalg.norm(gram_l2(disc, U_hat, U_hat) - s_uu)) / gram_fro
    U_next = corrector_step(disc, gop, U_hat, tau)

    diag = StepDiagnostics(
        step_index=step_index,
        energy=en,
        orth_error=orth,
        grad_norm_l2=g_l2,
        grad_norm_a=g_a,
        lambda_min_gram=lam_min,
        predictor_gram_drift=drift,
        green_solves=gop.solve_count,
    )
    return U_next, diag


def bounds_from_scalars(lam1: float, lam_max_gram: float, energy0: float, n_cols: int) -> StepBounds:
    """Step-size safeguards from (lambda_1, lambda_max(<U0,U0>), E(U0), N)."""
    if lam1 <= 0:
        raise MissingLambda1("lambda_1 must be positive (shifted pencil)")
    c_om = 1.0 / np.sqrt(lam1)
    c_e = 2.0 * (np.sqrt(2.0) * energy0 / lam1
                 + c_om**2 * np.sqrt(energy0 * lam_max_gram)) \
        * np.sqrt(n_cols * energy0 * lam_max_gram) + 0.5
    return StepBounds(
        tau_nonexpansion=2.0 * lam1 / lam_max_gram,
        tau_quasi_stiefel=lam1 / (2.0 * lam_max_gram),
        tau_contraction=min(lam1 / (3.0 * lam_max_gram), energy0),
        tau_energy=min(lam1 / (2.0 * c_e * lam_max_gram),
                       lam1 / (2.0 * np.sqrt(2.0 * energy0 * lam_max_gram))),
        c_e=float(c_e),
    )


def compute_step_bounds(disc: Discretization, gop: InverseOperator, U0: np.ndarray) -> StepBounds:
    """Evaluate all tau safeguards for a concrete initial state."""
    if disc.lambda1_est is None:
        raise MissingLambda1("run estimate_lambda1 first")
    vals = _gram_eigs(disc, U0)
    return bounds_from_scalars(disc.lambda1_est, float(vals[-1]),
                               analysis.energy(disc, U0), U0.shape[1])


def _diverged(records: list[StepDiagnostics], streak: int) -> bool:
    r = records[-1]
    vals = (r.energy, r.orth_error, r.grad_norm_l2, r.grad_norm_a,
            r.lambda_min_gram, r.predictor_gram_drift)
    return streak >= 3 or not all(np.isfinite(v) for v in vals)


def run(
    disc: Discretization,
    gop: InverseOperator,
    config: SchemeConfig,
    U0: np.ndarray,
) -> RunHistory:
    """Outer driver: iterate until the L2 gradient norm drops below eps.

    Records one StepDiagnostics per visited state U_0, U_1, ...; on
    ToleranceMet/Diverged the last record describes the final state, on
    MaxSteps the final state is the freshly produced (unrecorded) iterate.
    Divergence means 3 consecutive relative energy increases beyond 1e-8
    or any non-finite diagnostic.
    """
    U = init_state(disc, U0.shape[1], "from_state", state=U0)
    if disc.lambda1_est is None:
        estimate_lambda1(disc, gop, tol=1e-10)
    bounds = compute_step_bounds(disc, gop, U)
    if config.tau >= bounds.tau_quasi_stiefel:
        msg = (f"tau={config.tau:g} exceeds the quasi-Stiefel safeguard "
               f"{bounds.tau_quasi_stiefel:g}")
        if config.enforce_bounds == "reject":
            raise TauRejected(msg)
        warnings.warn(msg + "; proceeding (enforce_bounds=warn)", stacklevel=2)

    records: list[StepDiagnostics] = []
    increase_streak = 0
    steps_taken = 0
    while True:
        U_next, diag = step(disc, gop, U, config.tau, step_index=len(records))
        records.append(diag)
        if len(records) >= 2:
            prev = records[-2].energy
            if diag.energy > prev + 1e-8 * abs(prev):
                increase_streak += 1
            else:
                increase_streak = 0
        if _diverged(records, increase_streak):
            return RunHistory(records, Termination.DIVERGED, U)
        if diag.grad_norm_l2 < config.eps:
            return RunHistory(records, Termination.TOLERANCE_MET, U)
        U = U_next
        steps_taken += 1
        if steps_taken >= config.max_steps:
            return RunHistory(records, Termination.MAX_STEPS, U)
