"""Channel models: Malaga FSO turbulence, shadowed-Rician RF fading, beam geometry.

Densities and distribution functions are evaluated analytically; the
samplers use generative forms (Gamma times shadowed-Rician power for
Malaga, LoS-plus-scatter for shadowed-Rician) whose correctness is checked
empirically against the densities by the test and validation suites.

User and beam indices are zero-based throughout.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special

from .constants import SPEED_OF_LIGHT, ParameterError
from .specfun import MeijerParams2002, bessel_j, hyp1f1, meijer_g_2002

logger = logging.getLogger(__name__)

BEAM_3DB_U = 2.07123


# ============================================================================
# Random streams
# ============================================================================


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream, path)``.

    Every call to :meth:`generator` returns a fresh PCG64 generator in the
    same state, so identical streams reproduce identical draws. Child streams
    from :meth:`child` are statistically independent of their parent.
    """

    seed: int
    stream: int = 0
    path: Tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *index: int) -> "RngStream":
        return replace(self, path=self.path + tuple(int(i) for i in index))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


# ============================================================================
# Malaga turbulence
# ============================================================================


@dataclass(frozen=True)
class MalagaParams:
    """Malaga turbulence parameters.

    Attributes:
        alpha: Effective number of large-scale scattering cells.
        beta: Amount of fading (positive integer).
        b0: Half the average power of the scatter components.
        rho0: Fraction of scatter power coupled to the LoS component.
        Omega0: Average LoS power.
        phiA: Deterministic LoS phase.
        phiB: Deterministic phase of the coupled scatter term.
    """

    alpha: float
    beta: int
    b0: float
    rho0: float
    Omega0: float
    phiA: float = 0.0
    phiB: float = math.pi / 2

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if int(self.beta) != self.beta or self.beta < 1:
            raise ParameterError(f"beta must be a positive integer, got {self.beta}")
        if not self.b0 > 0:
            raise ParameterError(f"b0 must be positive, got {self.b0}")
        if not 0.0 <= self.rho0 <= 1.0:
            raise ParameterError(f"rho0 must lie in [0, 1], got {self.rho0}")
        if not self.Omega0 >= 0:
            raise ParameterError(f"Omega0 must be non-negative, got {self.Omega0}")
        object.__setattr__(self, "beta", int(self.beta))

    @property
    def g0(self) -> float:
        return 2.0 * self.b0 * (1.0 - self.rho0)

    @property
    def omega_prime(self) -> float:
        return (
            self.Omega0
            + 2.0 * self.b0 * self.rho0
            + 2.0
            * math.sqrt(2.0 * self.b0 * self.Omega0 * self.rho0)
            * math.cos(self.phiA - self.phiB)
        )

    def mean(self) -> float:
        """``E[I]``."""
        return self.g0 + self.omega_prime

    def second_moment(self) -> float:
        """``E[I^2]`` from the Gamma times shadowed-Rician-power factorization."""
        a, m = self.alpha, self.beta
        g0, om = self.g0, self.omega_prime
        power_sq = om * om * (m + 1) / m + 4.0 * om * g0 + 2.0 * g0 * g0
        return (a + 1.0) / a * power_sq


@dataclass(frozen=True)
class MalagaConstants:
    """Normalization ``A`` and mixture coefficients ``c_1..c_beta`` of the Malaga PDF."""

    A: float
    c: NDArray[np.float64]


def malaga_constants(p: MalagaParams) -> MalagaConstants:
    """Compute ``A`` and ``c_j`` of the Malaga density.

    Raises:
        ParameterError: ``g0 = 0`` (pure-LoS limit, ``rho0 = 1``).
    """
    g0, om = p.g0, p.omega_prime
    if g0 <= 0:
        raise ParameterError("degenerate Malaga parameters: g0 = 0 (rho0 = 1)")
    a, beta = p.alpha, p.beta
    scale = g0 * beta + om

    log_a = (
        math.log(2.0)
        + 0.5 * a * math.log(a)
        - (1.0 + 0.5 * a) * math.log(g0)
        - special.gammaln(a)
        + (0.5 * a + beta) * math.log(g0 * beta / scale)
    )
    c = np.empty(beta)
    for j in range(1, beta + 1):
        c[j - 1] = (
            math.comb(beta - 1, j - 1)
            * scale ** (1.0 - 0.5 * j)
            / math.factorial(j - 1)
            * (om / g0) ** (j - 1)
            * (a / beta) ** (0.5 * j)
            * (a * beta / scale) ** (-0.5 * (a + j))
        )
    return MalagaConstants(A=math.exp(log_a), c=c)


def malaga_pdf(x: ArrayLike, p: MalagaParams) -> Union[float, NDArray[np.float64]]:
    """Malaga irradiance density, a mixture of ``beta`` Meijer G terms."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ParameterError("malaga_pdf requires x > 0")
    const = malaga_constants(p)
    arg = p.alpha * p.beta * arr / (p.g0 * p.beta + p.omega_prime)
    total = np.zeros_like(arr)
    for j in range(1, p.beta + 1):
        if const.c[j - 1] == 0.0:
            continue
        total = total + const.c[j - 1] * np.asarray(
            meijer_g_2002(arg, MeijerParams2002(p.alpha, j))
        )
    value = 0.5 * const.A * total / arr
    return float(value) if value.ndim == 0 else value


def malaga_cdf(x: float, p: MalagaParams) -> float:
    """Malaga CDF by adaptive quadrature of :func:`malaga_pdf`."""
    if x <= 0:
        return 0.0
    inner = [t * p.mean() for t in (0.01, 0.1, 1.0, 4.0) if t * p.mean() < x]
    edges = [0.0, *inner, x]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(lambda t: malaga_pdf(t, p), lo, hi, limit=200)
        total += value
    return min(total, 1.0)


def malaga_sample(rng: RngLike, p: MalagaParams, n: int) -> NDArray[np.float64]:
    """Draw ``n`` Malaga irradiances as ``X * |rho|^2``.

    ``X ~ Gamma(alpha, mean 1)`` and ``rho`` is shadowed-Rician with
    ``m = beta``, ``b = g0 / 2`` and ``Omega = Omega'``.
    """
    if n < 1:
        raise ParameterError(f"sample count must be >= 1, got {n}")
    gen = as_generator(rng)
    large_scale = gen.gamma(p.alpha, 1.0 / p.alpha, size=n)
    small_scale = _sr_complex(gen, p.beta, 0.5 * p.g0, p.omega_prime, n)
    return large_scale * np.abs(small_scale) ** 2


# ============================================================================
# Shadowed-Rician fading
# ============================================================================


@dataclass(frozen=True)
class ShadowedRicianParams:
    """Shadowed-Rician parameters: severity ``m``, half multipath power ``b``, LoS power ``Omega``."""

    m: int
    b: float
    Omega: float

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ParameterError(f"m must be a positive integer, got {self.m}")
        if not self.b > 0:
            raise ParameterError(f"b must be positive, got {self.b}")
        if not self.Omega >= 0:
            raise ParameterError(f"Omega must be non-negative, got {self.Omega}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def a1(self) -> float:
        bm2 = 2.0 * self.b * self.m
        return (bm2 / (bm2 + self.Omega)) ** self.m / (2.0 * self.b)

    @property
    def a2(self) -> float:
        return self.Omega / (2.0 * self.b * (2.0 * self.b * self.m + self.Omega))

    @property
    def a3(self) -> float:
        return 1.0 / (2.0 * self.b) - self.a2

    def checked_a3(self) -> float:
        a3 = self.a3
        if not a3 > 0:
            raise ParameterError(f"a3 = {a3:g} <= 0; finite-sum CDF expansion invalid")
        return a3

    def mean_power(self) -> float:
        """``E[|rho|^2] = 2b + Omega``."""
        return 2.0 * self.b + self.Omega

    def power_weights(self) -> NDArray[np.float64]:
        """Weights of ``|rho|^2`` as a mixture of ``Gamma(p + 1, rate a3)``, ``p < m``.

        They are the ``a1 (1-m)_p (-a2)^p / (a3^(p+1) p!)`` coefficients of the
        CDF and sum to one.
        """
        a3 = self.checked_a3()
        orders = np.arange(self.m)
        return (
            self.a1
            * special.poch(1 - self.m, orders)
            * (-self.a2) ** orders
            / (a3 ** (orders + 1) * special.factorial(orders))
        )


def sr_pdf(x: ArrayLike, p: ShadowedRicianParams) -> Union[float, NDArray[np.float64]]:
    """Density of the shadowed-Rician amplitude ``|rho|``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ParameterError("sr_pdf requires x > 0")
    bm2 = 2.0 * p.b * p.m
    lead = (bm2 / (bm2 + p.Omega)) ** p.m * arr / p.b
    # exp(-x^2/2b) 1F1(m;1;a2 x^2) = exp(-a3 x^2) * scaled 1F1
    damping = np.exp(-p.a3 * arr * arr)
    with np.errstate(over="ignore", invalid="ignore"):
        value = lead * damping * np.asarray(hyp1f1(p.m, 1.0, p.a2 * arr * arr, scaled=True))
    # the polynomial may overflow far out in the tail where the damping is zero
    value = np.where(damping > 0, value, 0.0)
    return float(value) if value.ndim == 0 else value


def scaled_sr_cdf(
    x: ArrayLike, p: ShadowedRicianParams, phi: float
) -> Union[float, NDArray[np.float64]]:
    """CDF of ``phi * |rho|^2`` as a finite double sum."""
    if not phi > 0:
        raise ParameterError(f"scale phi must be positive, got {phi}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ParameterError("scaled_sr_cdf requires x >= 0")
    a3 = p.checked_a3()
    weights = p.power_weights()
    y = a3 * arr / phi
    tail = np.zeros_like(y)
    for order, weight in enumerate(weights):
        # e^{-y} sum_{n<=p} y^n/n! is the regularized upper incomplete gamma
        tail = tail + weight * special.gammaincc(order + 1, y)
    value = np.clip(1.0 - tail, 0.0, 1.0)
    return float(value) if value.ndim == 0 else value


def sr_cdf(x: ArrayLike, p: ShadowedRicianParams) -> Union[float, NDArray[np.float64]]:
    """CDF of the amplitude ``|rho|``."""
    arr = np.asarray(x, dtype=float)
    return scaled_sr_cdf(arr * arr, p, 1.0)


def _sr_complex(
    gen: np.random.Generator, m: int, b: float, omega: float, n: int
) -> NDArray[np.complex128]:
    if omega > 0:
        los = np.sqrt(gen.gamma(m, omega / m, size=n))
    else:
        los = np.zeros(n)
    phase = gen.uniform(0.0, 2.0 * math.pi, size=n)
    scatter = math.sqrt(b) * (gen.standard_normal(n) + 1j * gen.standard_normal(n))
    return los * np.exp(1j * phase) + scatter


def sr_sample_complex(
    rng: RngLike, p: ShadowedRicianParams, n: int
) -> NDArray[np.complex128]:
    """Complex shadowed-Rician fading coefficients ``rho``."""
    if n < 1:
        raise ParameterError(f"sample count must be >= 1, got {n}")
    return _sr_complex(as_generator(rng), p.m, p.b, p.Omega, n)


def sr_sample(rng: RngLike, p: ShadowedRicianParams, n: int) -> NDArray[np.float64]:
    """Shadowed-Rician amplitudes ``|A e^{j theta} + Z|``."""
    return np.abs(sr_sample_complex(rng, p, n))


# ============================================================================
# Beam geometry
# ============================================================================


def beam_gain(
    phi_kn: ArrayLike, phi3dB: float, gmax: float
) -> Union[float, NDArray[np.float64]]:
    """Bessel beam pattern normalized so that the boresight gain is ``gmax``."""
    if not phi3dB > 0:
        raise ParameterError(f"phi3dB must be positive, got {phi3dB}")
    phi = np.asarray(phi_kn, dtype=float)
    if np.any(phi < 0):
        raise ParameterError("off-axis angles must be non-negative")
    u = BEAM_3DB_U * np.sin(phi) / math.sin(phi3dB)

    small = u < 1e-4
    safe = np.where(small, 1.0, u)
    pattern = np.asarray(bessel_j(1, safe)) / (2.0 * safe) + 36.0 * np.asarray(
        bessel_j(3, safe)
    ) / safe**3
    if np.any(small):
        q = (u / 2.0) ** 2
        j1_term = 0.25 * (1.0 - q / 2.0 + q * q / 12.0 - q**3 / 144.0)
        j3_term = (1.0 / 48.0) * (1.0 - q / 4.0 + q * q / 40.0 - q**3 / 720.0)
        pattern = np.where(small, j1_term + 36.0 * j3_term, pattern)
    boresight = 0.25 + 36.0 / 48.0
    value = gmax * (pattern / boresight) ** 2
    return float(value) if value.ndim == 0 else value


@dataclass
class BeamGeometry:
    """Satellite/user/beam layout.

    Attributes:
        phi: ``K x N`` off-axis angles (radians) between user ``k`` and beam ``n``.
        phi3dB: One-sided half-power beamwidth (radians).
        gmax: Maximum beam gain (linear).
        d: Per-user slant distance (m).
        fc: Carrier frequency (Hz).
        GR: User receive gain (linear).
    """

    phi: NDArray[np.float64]
    phi3dB: float
    gmax: float
    d: NDArray[np.float64]
    fc: float
    GR: float
    beam_centers: Optional[NDArray[np.float64]] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if self.d.size == 1 and self.K > 1:
            self.d = np.full(self.K, float(self.d[0]))
        if np.any(self.phi < 0):
            raise ParameterError("off-axis angles must be non-negative")
        if self.d.shape != (self.K,) or np.any(self.d <= 0):
            raise ParameterError("need one positive slant distance per user")
        if not (self.phi3dB > 0 and self.gmax > 0 and self.fc > 0 and self.GR > 0):
            raise ParameterError("phi3dB, gmax, fc and GR must be positive")

    @property
    def K(self) -> int:
        return int(self.phi.shape[0])

    @property
    def N(self) -> int:
        return int(self.phi.shape[1])

    def path_amplitude(self) -> NDArray[np.float64]:
        """Free-space amplitude ``c / (4 pi fc d_k)`` per user."""
        return SPEED_OF_LIGHT / (4.0 * math.pi * self.fc * self.d)

    def gains(self) -> NDArray[np.float64]:
        return np.asarray(beam_gain(self.phi, self.phi3dB, self.gmax))


def _hex_lattice(count: int, spacing: float) -> NDArray[np.float64]:
    rings = 0
    while 3 * rings * (rings + 1) + 1 < count:
        rings += 1
    points = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            if abs(q + r) > rings:
                continue
            points.append((spacing * (q + 0.5 * r), spacing * r * math.sqrt(3) / 2))
    pts = np.asarray(points)
    order = np.lexsort((np.arctan2(pts[:, 1], pts[:, 0]), np.round(np.hypot(*pts.T), 12)))
    return pts[order[:count]]


def _directions(angles: NDArray[np.float64]) -> NDArray[np.float64]:
    vec = np.column_stack([np.tan(angles[:, 0]), np.tan(angles[:, 1]), np.ones(len(angles))])
    return vec / np.linalg.norm(vec, axis=1, keepdims=True)


def hexagonal_geometry(
    rng: RngLike,
    n_beams: int,
    n_users: int,
    phi3dB: float,
    gmax: float,
    fc: float,
    GR: float,
    distance: float,
    user_spread: float = 1.0,
) -> BeamGeometry:
    """Hexagonal beam layout with one random user drop per beam.

    Beam centres sit on a hexagonal lattice with spacing ``sqrt(3) phi3dB``.
    User ``k`` is dropped uniformly in a disc of angular radius
    ``user_spread * phi3dB`` around the centre of beam ``k mod N``.
    """
    if n_beams < 1 or n_users < 1:
        raise ParameterError("need at least one beam and one user")
    gen = as_generator(rng)
    centers = _hex_lattice(n_beams, math.sqrt(3.0) * phi3dB)
    radius = user_spread * phi3dB * np.sqrt(gen.uniform(size=n_users))
    theta = gen.uniform(0.0, 2.0 * math.pi, size=n_users)
    users = centers[np.arange(n_users) % n_beams] + np.column_stack(
        [radius * np.cos(theta), radius * np.sin(theta)]
    )
    u_dir = _directions(users)
    b_dir = _directions(centers)
    chord = np.linalg.norm(u_dir[:, None, :] - b_dir[None, :, :], axis=2)
    phi = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    logger.debug("hexagonal layout: %d beams, %d users", n_beams, n_users)
    return BeamGeometry(
        phi=phi,
        phi3dB=phi3dB,
        gmax=gmax,
        d=np.full(n_users, distance),
        fc=fc,
        GR=GR,
        beam_centers=centers,
    )


def steering_vector(
    geom: BeamGeometry, k: int, phased: bool = False
) -> NDArray[np.float64]:
    """Location/beam-pattern vector ``sqrt(GR) c/(4 pi fc d_k) g_k^(1/2)`` of user ``k``.

    With ``phased=True`` the propagation phase ``exp(-j 2 pi fc d_k / c)`` is
    applied; it is common to all elements, so beamformer SINRs are unchanged.
    """
    if not 0 <= k < geom.K:
        raise ParameterError(f"user index {k} outside [0, {geom.K})")
    amp = math.sqrt(geom.GR) * geom.path_amplitude()[k] * np.sqrt(geom.gains()[k])
    if phased:
        return amp * np.exp(-2j * math.pi * geom.fc * geom.d[k] / SPEED_OF_LIGHT)
    return amp


def steering_matrix(geom: BeamGeometry, phased: bool = False) -> NDArray[np.complex128]:
    """``N x K`` matrix whose columns are the user steering vectors."""
    return np.column_stack(
        [steering_vector(geom, k, phased=phased) for k in range(geom.K)]
    ).astype(complex)


def build_channel(
    rng: RngLike, geom: BeamGeometry, p: ShadowedRicianParams, k: int
) -> NDArray[np.complex128]:
    """One realization of ``h_k = sqrt(GR) rho_k g_k^(1/2) h~_k``."""
    rho = sr_sample_complex(rng, p, 1)[0]
    return rho * steering_vector(geom, k, phased=True)


def build_channels(
    rng: RngLike, geom: BeamGeometry, p: ShadowedRicianParams, n: int
) -> NDArray[np.complex128]:
    """``n`` independent channel matrices of shape ``(n, N, K)``."""
    gen = as_generator(rng)
    rho = _sr_complex(gen, p.m, p.b, p.Omega, n * geom.K).reshape(n, geom.K)
    return rho[:, None, :] * steering_matrix(geom, phased=True)[None, :, :]


def channel_sampler(
    rng: RngStream, geom: BeamGeometry, p: ShadowedRicianParams
) -> Callable[[int], NDArray[np.complex128]]:
    """Per-round channel draws for one-bit feedback measurements.

    Round ``r`` always yields the same ``N x K`` matrix for a given stream.
    """

    def draw(round_index: int) -> NDArray[np.complex128]:
        return build_channels(rng.child(round_index), geom, p, 1)[0]

    return draw
