"""Accuracy does not depend on the time step; only the step count does.

The admissible step size is controlled by lambda_1, E(U0) and the initial
Gram spectrum alone, never by the mesh width, so a 10x larger step just
divides the iteration count by ~10 at unchanged final accuracy.  This is
the property that makes the method practical: the same tau works on every
refinement of the grid.
"""

import warnings

import numpy as np

import qseig as q

# running beyond the quasi-Stiefel safeguard is the point of this demo
warnings.filterwarnings("ignore", category=UserWarning)

n_eig = 6
for points in ((24, 24), (40, 40)):
    disc = q.assemble(q.DomainSpec((-5.5, -5.5), (5.5, 5.5)), q.GridSpec(points),
                      q.HarmonicPotential(0.5), c_lap=0.5)
    gop = q.prepare(disc)
    q.estimate_lambda1(disc, gop, 1e-10)
    reference, _ = q.reference_subspace_iteration(disc, gop, n_eig, tol=1e-11)
    U0 = q.init_state(disc, n_eig, "quasi_stiefel_scaled", seed=42)

    print(f"\ngrid {points[0]}x{points[1]} "
          f"(h = {11.0 / (points[0] + 1):.3f}), lambda_1 = {disc.lambda1_est:.6f}")
    print("  tau    steps   max rel. eigenvalue error")
    for tau in (0.05, 0.2, 0.8):
        hist = q.run(disc, gop,
                     q.SchemeConfig(tau=tau, eps=1e-7, max_steps=50_000), U0)
        rep = q.extract_eigenvalues(disc, gop, hist.final_state,
                                    reference=reference.eigenvalues)
        print(f"  {tau:4.2f}  {hist.steps_taken:6d}   {np.max(rep.relative_errors):.3e}")

print("\nsame accuracy at every tau; steps scale like 1/tau; and the admissible")
print("tau did not shrink when the grid was refined (mesh-independent step size)")
print("\nupper limit: the corrector's Gram mode contracts by |1 - 2 tau/lambda_1|")
print("per step, so past tau = lambda_1 (~1 here) the iteration stops converging")
