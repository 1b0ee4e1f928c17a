"""The continuous evolution behind the scheme, cross-checked two ways.

On a dense-friendly instance the trajectory has a closed form built from
the pencil eigendecomposition (valid up to a right orthogonal factor).  A
high-order Runge-Kutta integration of the same block ODE must land in the
same subspace, and the orthogonality error must decay at least as fast as
exp(-t / E(U0)).
"""

import numpy as np

import qseig as q

disc = q.assemble(q.DomainSpec((0.0,), (1.0,)), q.GridSpec((20,)), q.ZeroPotential())
gop = q.prepare(disc)
q.estimate_lambda1(disc, gop, 1e-12)

# smoothed random start: low energy keeps the subspace-distance formula's
# cancellation floor (~sqrt(E) * sqrt(machine eps)) well below the gaps shown
U0 = q.apply_green(gop, q.init_state(disc, 2, "raw_random", seed=3))
U0 /= np.sqrt(np.linalg.eigvalsh(q.gram_l2(disc, U0, U0))[0])
e0 = q.energy(disc, U0)
o0 = q.orthogonality_error(disc, U0)
print(f"initial energy E(U0) = {e0:.3f}, orthogonality error ||O_0|| = {o0:.3e}")

print("\n t     subspace gap (closed form vs RK4)   ||O(t)||     bound exp(-t/E0)")
for t in (0.5, 1.0, 2.0):
    closed = q.closed_form_solution(disc, U0, t)
    rk = q.rk4_integrate(disc, gop, U0, t, 1e-3)
    gap = q.subspace_distance_a(disc, closed, rk)
    o_t = q.orthogonality_error(disc, closed)
    print(f" {t:3.1f}   {gap:24.3e}   {o_t:12.3e}   {o0 * np.exp(-t / e0):12.3e}")

print("\northonormal data stays orthonormal along the flow:")
V0 = q.init_state(disc, 2, "orthonormal", seed=4)
for t in (1.0, 5.0):
    o_t = q.orthogonality_error(disc, q.closed_form_solution(disc, V0, t))
    print(f"  t={t:3.1f}  ||<U(t),U(t)> - I|| = {o_t:.2e}")

print("\none scheme step matches the flow to second order (gap ratio ~4 per halving):")
W0 = q.init_state(disc, 2, "orthonormal", seed=5)
gaps = {}
for tau in (0.04, 0.02, 0.01):
    U1, _ = q.step(disc, gop, W0, tau)
    ref = q.rk4_integrate(disc, gop, W0, tau, tau / 100.0)
    W, _, Vt = np.linalg.svd(q.gram_l2(disc, ref, U1))
    diff = U1 - q.combine(ref, W @ Vt)
    gaps[tau] = float(np.sqrt(np.trace(q.gram_a(disc, diff, diff))))
    print(f"  tau={tau:5.3f}  one-step gap {gaps[tau]:.3e}")
print(f"  ratios: {gaps[0.04] / gaps[0.02]:.2f}, {gaps[0.02] / gaps[0.01]:.2f}")
