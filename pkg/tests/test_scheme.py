import numpy as np
import pytest

import qseig as q
from qseig import verify


def test_init_orthonormal(harmonic_2d):
    disc, _ = harmonic_2d
    U = q.init_state(disc, 5, "orthonormal", seed=30)
    assert np.linalg.norm(q.gram_l2(disc, U, U) - np.eye(5)) <= 1e-12


def test_init_quasi_stiefel_scaled(harmonic_2d):
    disc, _ = harmonic_2d
    U = q.init_state(disc, 5, "quasi_stiefel_scaled", seed=31)
    vals = np.linalg.eigvalsh(q.gram_l2(disc, U, U))
    assert abs(vals[0] - 1.0) <= 1e-12


def test_init_deterministic(harmonic_2d):
    disc, _ = harmonic_2d
    a = q.init_state(disc, 4, "raw_random", seed=32)
    b = q.init_state(disc, 4, "raw_random", seed=32)
    assert np.array_equal(a, b)
    c = q.init_state(disc, 4, "raw_random", seed=33)
    assert not np.array_equal(a, c)


def test_init_from_state_validates(harmonic_2d):
    disc, _ = harmonic_2d
    good = q.init_state(disc, 3, "orthonormal", seed=34)
    back = q.init_state(disc, 3, "from_state", state=good)
    assert np.array_equal(back, good)
    degenerate = np.ones((disc.n_points, 3))
    with pytest.raises(q.RankDeficient):
        q.init_state(disc, 3, "from_state", state=degenerate)
    with pytest.raises(ValueError):
        q.init_state(disc, 3, "from_state")


def test_skew_apply_vanishes_at_critical_point(harmonic_2d, harmonic_2d_oracle):
    disc, gop = harmonic_2d
    _, block = harmonic_2d_oracle
    GU = q.apply_green(gop, block)
    out = q.skew_apply(disc, gop, block, GU, block)
    assert np.abs(out).max() <= 1e-10


def test_skew_apply_antisymmetric_pairing(harmonic_2d):
    disc, gop = harmonic_2d
    rng = np.random.default_rng(35)
    U = rng.standard_normal((disc.n_points, 4))
    V = rng.standard_normal((disc.n_points, 4))
    GU = q.apply_green(gop, U)
    AV = q.skew_apply(disc, gop, U, GU, V)
    S = q.gram_l2(disc, V, AV)
    assert np.abs(S + S.T).max() <= 1e-10 * max(np.abs(S).max(), 1.0)


def test_skew_apply_matches_dense_formula(dense_1d):
    disc, gop = dense_1d
    rng = np.random.default_rng(36)
    U = rng.standard_normal((disc.n_points, 2))
    V = rng.standard_normal((disc.n_points, 2))
    GU = q.apply_green(gop, U)
    expected = GU @ q.gram_l2(disc, U, V) - U @ q.gram_l2(disc, GU, V)
    np.testing.assert_allclose(q.skew_apply(disc, gop, U, GU, V), expected,
                               atol=1e-13)


def midpoint_fixed_point(disc, gop, U, GU, tau, tol=1e-13):
    """Independent oracle: fixed-point iteration on the midpoint relation."""
    U_hat = U.copy()
    for _ in range(500):
        mid = 0.5 * (U_hat + U)
        nxt = U + tau * q.skew_apply(disc, gop, U, GU, mid)
        if np.abs(nxt - U_hat).max() <= tol:
            return nxt
        U_hat = nxt
    raise AssertionError("fixed point iteration stalled")


def test_cayley_step_matches_fixed_point_oracle(dense_1d):
    disc, gop = dense_1d
    U = q.init_state(disc, 2, "quasi_stiefel_scaled", seed=37)
    GU = q.apply_green(gop, U)
    for tau in (0.01, 0.05):
        direct = q.cayley_step(disc, gop, U, GU, tau)
        oracle = midpoint_fixed_point(disc, gop, U, GU, tau)
        assert np.abs(direct - oracle).max() <= 1e-10


def test_cayley_step_preserves_gram_any_tau(harmonic_2d):
    disc, gop = harmonic_2d
    U = q.init_state(disc, 5, "quasi_stiefel_scaled", seed=38)
    GU = q.apply_green(gop, U)
    S = q.gram_l2(disc, U, U)
    for tau in (0.01, 0.3, 1.0):
        U_hat = q.cayley_step(disc, gop, U, GU, tau)
        drift = np.linalg.norm(q.gram_l2(disc, U_hat, U_hat) - S)
        assert drift <= 1e-9 * np.linalg.norm(S)


def test_cayley_step_fixed_at_critical_point(harmonic_2d, harmonic_2d_oracle):
    disc, gop = harmonic_2d
    _, block = harmonic_2d_oracle
    GU = q.apply_green(gop, block)
    U_hat = q.cayley_step(disc, gop, block, GU, 0.5)
    assert np.abs(U_hat - block).max() <= 1e-10


def test_cayley_singular_small_system_mapped(monkeypatch, dense_1d):
    disc, gop = dense_1d
    U = q.init_state(disc, 2, "orthonormal", seed=39)
    GU = q.apply_green(gop, U)

    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(np.linalg, "solve", boom)
    with pytest.raises(q.SmallSolveSingular):
        q.cayley_step(disc, gop, U, GU, 0.1)


def test_corrector_identity_on_orthonormal(harmonic_2d):
    disc, gop = harmonic_2d
    U = q.init_state(disc, 4, "orthonormal", seed=40)
    out = q.corrector_step(disc, gop, U, 0.3)
    assert np.abs(out - U).max() <= 1e-12 * np.abs(U).max()


def test_corrector_unit_excess_gram(harmonic_2d):
    disc, gop = harmonic_2d
    U = np.sqrt(2.0) * q.init_state(disc, 4, "orthonormal", seed=41)
    expected = U - 0.2 * q.apply_green(gop, U)
    np.testing.assert_allclose(q.corrector_step(disc, gop, U, 0.2), expected,
                               atol=1e-11)


def test_corrector_keeps_interior_quasi_stiefel(harmonic_2d):
    disc, gop = harmonic_2d
    rng = np.random.default_rng(42)
    U = rng.standard_normal((disc.n_points, 4))
    vals = np.linalg.eigvalsh(q.gram_l2(disc, U, U))
    U = U * np.sqrt(1.5 / vals[0])  # interior of the quasi-Stiefel set
    bounds = q.compute_step_bounds(disc, gop, U)
    out = q.corrector_step(disc, gop, U, 0.9 * bounds.tau_quasi_stiefel)
    assert np.linalg.eigvalsh(q.gram_l2(disc, out, out))[0] >= 1.0 - 1e-9


def test_step_fixed_point(harmonic_2d, harmonic_2d_oracle):
    disc, gop = harmonic_2d
    _, block = harmonic_2d_oracle
    U1, diag = q.step(disc, gop, block, 0.2)
    assert np.abs(U1 - block).max() <= 1e-9
    assert diag.grad_norm_l2 <= 1e-9


def test_step_solve_budget(harmonic_2d):
    disc, _ = harmonic_2d
    gop = q.prepare(disc)
    U = q.init_state(disc, 5, "quasi_stiefel_scaled", seed=43)
    before = gop.solve_count
    q.step(disc, gop, U, 0.1)
    assert gop.solve_count == before + 10  # exactly 2N solves


def test_step_decreases_energy_within_bound(harmonic_2d):
    disc, gop = harmonic_2d
    U = q.init_state(disc, 4, "quasi_stiefel_scaled", seed=44)
    bounds = q.compute_step_bounds(disc, gop, U)
    tau = 0.9 * bounds.tau_energy
    e_prev = q.energy(disc, U)
    for k in range(50):
        U, diag = q.step(disc, gop, U, tau, step_index=k)
        e = q.energy(disc, U)
        assert e <= e_prev + 1e-10 * abs(e_prev)
        e_prev = e


def test_step_contracts_orthogonality(harmonic_2d):
    disc, gop = harmonic_2d
    U = q.init_state(disc, 4, "quasi_stiefel_scaled", seed=45)
    bounds = q.compute_step_bounds(disc, gop, U)
    tau = 0.9 * bounds.tau_contraction
    e0 = q.energy(disc, U)
    omega = 1.0 - tau / e0
    o_prev = q.orthogonality_error(disc, U)
    for k in range(60):
        U, _ = q.step(disc, gop, U, tau, step_index=k)
        o = q.orthogonality_error(disc, U)
        assert o**2 <= omega * o_prev**2 + 1e-10
        o_prev = o


def test_bounds_formula_frozen_values():
    b = q.bounds_from_scalars(1.0, 1.0, 2.0, 3)
    # c_e = 2 (sqrt(2)*2 + sqrt(2)) sqrt(6) + 1/2 = 12 sqrt(3) + 1/2
    np.testing.assert_allclose(b.c_e, 12.0 * np.sqrt(3.0) + 0.5, rtol=1e-14)
    np.testing.assert_allclose(b.tau_quasi_stiefel, 0.5)
    np.testing.assert_allclose(b.tau_nonexpansion, 2.0)
    np.testing.assert_allclose(b.tau_contraction, min(1.0 / 3.0, 2.0))
    b4 = q.bounds_from_scalars(1.0, 4.0, 2.0, 3)
    assert b4.tau_contraction <= 1.0 / 12.0 + 1e-15
    assert b4.tau_quasi_stiefel <= b4.tau_nonexpansion


def test_bounds_require_lambda1(harmonic_2d):
    disc, gop = harmonic_2d
    U = q.init_state(disc, 3, "orthonormal", seed=46)
    fresh = q.assemble(disc.domain, disc.grid, disc.potential,
                       c_lap=disc.c_lap, sigma=disc.sigma)
    with pytest.raises(q.MissingLambda1):
        q.compute_step_bounds(fresh, gop, U)


def test_run_converges_to_oracle(harmonic_2d, harmonic_2d_oracle):
    disc, gop = harmonic_2d
    report, _ = harmonic_2d_oracle
    U0 = q.init_state(disc, 6, "quasi_stiefel_scaled", seed=47)
    hist = q.run(disc, gop, q.SchemeConfig(tau=0.2, eps=1e-6, max_steps=3000), U0)
    assert hist.terminated_by is q.Termination.TOLERANCE_MET
    rep = q.extract_eigenvalues(disc, gop, hist.final_state,
                                reference=report.eigenvalues)
    assert np.max(rep.relative_errors) <= 1e-8


def test_run_starts_at_fixed_point(harmonic_2d, harmonic_2d_oracle):
    disc, gop = harmonic_2d
    _, block = harmonic_2d_oracle
    hist = q.run(disc, gop, q.SchemeConfig(tau=0.1, eps=1e-5, max_steps=10), block)
    assert hist.terminated_by is q.Termination.TOLERANCE_MET
    assert len(hist.records) <= 2


def test_run_max_steps_budget(harmonic_2d):
    disc, gop = harmonic_2d
    U0 = q.init_state(disc, 4, "quasi_stiefel_scaled", seed=48)
    hist = q.run(disc, gop, q.SchemeConfig(tau=0.05, eps=1e-12, max_steps=1), U0)
    assert hist.terminated_by is q.Termination.MAX_STEPS
    assert len(hist.records) == 1
    assert hist.steps_taken == 1


def test_run_reject_mode(harmonic_2d):
    disc, gop = harmonic_2d
    U0 = q.init_state(disc, 4, "quasi_stiefel_scaled", seed=49)
    bounds = q.compute_step_bounds(disc, gop, U0)
    cfg = q.SchemeConfig(tau=2.0 * bounds.tau_quasi_stiefel, eps=1e-5,
                         max_steps=10, enforce_bounds="reject")
    with pytest.raises(q.TauRejected):
        q.run(disc, gop, cfg, U0)


def test_run_warn_mode_survives_huge_tau(harmonic_2d):
    disc, gop = harmonic_2d
    U0 = q.init_state(disc, 4, "quasi_stiefel_scaled", seed=50)
    bounds = q.compute_step_bounds(disc, gop, U0)
    cfg = q.SchemeConfig(tau=100.0 * bounds.tau_nonexpansion, eps=1e-5, max_steps=40)
    with pytest.warns(UserWarning):
        hist = q.run(disc, gop, cfg, U0)
    assert hist.terminated_by in (q.Termination.DIVERGED, q.Termination.MAX_STEPS,
                                  q.Termination.TOLERANCE_MET)


def test_run_deterministic(harmonic_2d):
    disc, gop = harmonic_2d
    U0 = q.init_state(disc, 4, "quasi_stiefel_scaled", seed=51)
    cfg = q.SchemeConfig(tau=0.1, eps=1e-30, max_steps=30)
    h1 = q.run(disc, gop, cfg, U0)
    h2 = q.run(disc, gop, cfg, U0)
    assert np.array_equal(h1.final_state, h2.final_state)
    assert [r.energy for r in h1.records] == [r.energy for r in h2.records]
    assert [r.grad_norm_l2 for r in h1.records] == [r.grad_norm_l2 for r in h2.records]


def test_run_history_series(harmonic_2d):
    disc, gop = harmonic_2d
    U0 = q.init_state(disc, 3, "quasi_stiefel_scaled", seed=52)
    hist = q.run(disc, gop, q.SchemeConfig(tau=0.1, eps=1e-30, max_steps=20), U0)
    e = hist.series("energy")
    assert e.shape == (20,)
    assert np.all(np.isfinite(e))
    assert hist.records[0].predictor_gram_drift <= 1e-9


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        q.SchemeConfig(tau=0.0)
    with pytest.raises(ValueError):
        q.SchemeConfig(tau=0.1, eps=-1.0)
    with pytest.raises(ValueError):
        q.SchemeConfig(tau=0.1, max_steps=0)
    with pytest.raises(ValueError):
        q.SchemeConfig(tau=0.1, init_mode="magic")


def test_full_invariant_suite_passes(harmonic_2d):
    disc, gop = harmonic_2d
    results = verify.run_suite(disc, gop, 6, seed=0)
    failed = [r.name for r in results if not r.passed]
    assert not failed, f"invariant checks failed: {failed}"
