import numpy as np
import pytest

import qseig as q


@pytest.fixture(scope="session")
def disc_1d_tiny():
    """1D zero-potential box, 5 interior points: hand-checkable sizes."""
    return q.assemble(q.DomainSpec((0.0,), (1.0,)), q.GridSpec((5,)), q.ZeroPotential())


@pytest.fixture(scope="session")
def dense_1d():
    """Ng=20 zero-potential instance for dense-path and continuous-model tests."""
    disc = q.assemble(q.DomainSpec((0.0,), (1.0,)), q.GridSpec((20,)), q.ZeroPotential())
    gop = q.prepare(disc)
    q.estimate_lambda1(disc, gop, 1e-12)
    return disc, gop


@pytest.fixture(scope="session")
def harmonic_2d():
    """20x20 harmonic oscillator (complete shells at N in {1,3,6})."""
    disc = q.assemble(q.DomainSpec((-5.5, -5.5), (5.5, 5.5)), q.GridSpec((20, 20)),
                      q.HarmonicPotential(0.5), c_lap=0.5)
    gop = q.prepare(disc)
    q.estimate_lambda1(disc, gop, 1e-12)
    return disc, gop


@pytest.fixture(scope="session")
def harmonic_2d_oracle(harmonic_2d):
    disc, gop = harmonic_2d
    report, block = q.reference_subspace_iteration(disc, gop, 6, tol=1e-11)
    return report, block


def dense_pencil(disc):
    """Dense M-orthonormal eigendecomposition of (A, M) for oracle checks."""
    sqm = np.sqrt(disc.M)
    sym = disc.A.toarray() / sqm[:, None] / sqm[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    return vals, vecs / sqm[:, None]
