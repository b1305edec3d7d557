import numpy as np
import pytest

from hardquad.instances import Instance, InstanceParams


def synthetic_instance(A, b, u=None, z=None, lam=1.3, tau0=0.09, seed=0):
    """Instance wrapper around an explicit (A, b) pair for solver tests.

    The spectral fields are backfilled so the dataclass is complete; tests that
    use this helper only exercise the A/b/u surface.
    """
    d = len(b)
    params = InstanceParams(d=d, lam=lam, tau0=tau0, seed=seed)
    g = params.gamma
    M = g * np.eye(d) - A
    if u is None:
        u = np.zeros(d)
    if z is None:
        z = b - np.sqrt(tau0) * u
    W = M - lam * np.outer(u, u)
    return Instance(params=params, W=W, u=u, z=z, b=b, M=M, A=A)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
