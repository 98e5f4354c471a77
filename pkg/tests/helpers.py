"""
Shared numerical helpers for the test suite
"""

import numpy as np
from scipy import integrate

from hts_capacity import BfProblem


def integrate_positive(fn, scale, points=(1e-3, 1e-2, 0.1, 1.0, 4.0, 20.0)):
    """Integrate ``fn`` over ``(0, inf)`` in panels placed relative to ``scale``"""
    edges = [0.0] + [scale * p for p in points]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(fn, lo, hi, limit=200, epsabs=1e-14, epsrel=1e-12)[0]
    return total + integrate.quad(fn, edges[-1], np.inf, limit=200, epsabs=1e-14)[0]


def random_problem(seed, n_antennas=4, n_users=3, sigma2=1.0, per_interferer_power=False):
    """Small beamforming problem with a complex Gaussian steering matrix"""
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((n_antennas, n_users)) + 1j * gen.standard_normal(
        (n_antennas, n_users)
    )
    P = gen.uniform(0.5, 2.0, size=n_users)
    return BfProblem(A=A, P=P, sigma2=sigma2, per_interferer_power=per_interferer_power)
