"""Alamouti-STBC FSO feeder link: SNR, closed-form MGF and ergodic capacity C1."""

import functools
import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .channels import (
    MalagaParams,
    RngLike,
    as_generator,
    malaga_constants,
    malaga_pdf,
    malaga_sample,
)
from .constants import DEFAULT_SETTINGS, LN2, AccuracyWarning, ParameterError
from .specfun import MeijerParams1441, meijer_g_1441, phi_node

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FsoPathLoss:
    """Deterministic FSO path gain ``I^l = Gt Gr eta_p ell_s``."""

    Gt: float = 1.0
    Gr: float = 1.0
    eta_p: float = 1.0
    ell_s: float = 1.0

    def __post_init__(self) -> None:
        if not (self.Gt > 0 and self.Gr > 0):
            raise ParameterError("FSO transmitter and receiver gains must be positive")
        if not (0 < self.eta_p <= 1 and 0 < self.ell_s <= 1):
            raise ParameterError("pointing and free-space loss factors must lie in (0, 1]")

    @property
    def value(self) -> float:
        return self.Gt * self.Gr * self.eta_p * self.ell_s


@dataclass(frozen=True)
class Gateway:
    path_loss: FsoPathLoss
    turbulence: MalagaParams


@dataclass(frozen=True)
class FeederConfig:
    """Feeder link: transmit power ``P1`` (W), O/E coefficient ``eta``, noise ``N0`` (W)."""

    P1: float
    eta: float
    N0: float
    gateways: Tuple[Gateway, ...]

    def __post_init__(self) -> None:
        if not (self.P1 > 0 and self.eta > 0 and self.N0 > 0):
            raise ParameterError("P1, eta and N0 must be positive")
        object.__setattr__(self, "gateways", tuple(self.gateways))
        if len(self.gateways) not in (1, 2):
            raise ParameterError(f"need 1 or 2 gateways, got {len(self.gateways)}")

    def gamma_bar(self, i: int) -> float:
        """Average SNR ``P1 (eta I_i^l)^2 / N0`` of gateway ``i``."""
        path = self.gateways[i].path_loss.value
        return self.P1 * (self.eta * path) ** 2 / self.N0

    def with_power(self, P1: float) -> "FeederConfig":
        return replace(self, P1=P1)


@dataclass(frozen=True)
class QuadratureSpec:
    """Order ``T`` of the Gauss-Chebyshev MGF quadrature and its node scale.

    ``scale="auto"`` divides the nodes by the mean total SNR, which keeps the
    rule accurate at high SNR; ``scale=1.0`` gives the unscaled node set.
    """

    T: int = DEFAULT_SETTINGS["quadrature_order"]
    scale: Union[str, float] = DEFAULT_SETTINGS["quadrature_scale"]

    def __post_init__(self) -> None:
        if int(self.T) != self.T or self.T < 1:
            raise ParameterError(f"quadrature order must be a positive integer, got {self.T}")
        if self.scale != "auto" and not (isinstance(self.scale, (int, float)) and self.scale > 0):
            raise ParameterError(f"quadrature scale must be 'auto' or positive, got {self.scale!r}")

    def nodes(self, order: int = 0) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Nodes ``S_t`` and weights ``V_t`` of the unscaled rule."""
        T = order or self.T
        theta = (2.0 * np.arange(1, T + 1) - 1.0) * math.pi / (2.0 * T)
        arg = 0.25 * math.pi * np.cos(theta) + 0.25 * math.pi
        S = np.tan(arg)
        V = math.pi**2 * np.sin(theta) / (4.0 * T * np.cos(arg) ** 2)
        return S, V


@dataclass(frozen=True)
class FeederCapacity:
    """Closed-form C1 with quadrature metadata."""

    value: float
    T: int
    half_order_value: float
    scale: float
    single_gateway: bool

    @property
    def difference(self) -> float:
        """Relative change between orders T and T/2."""
        return abs(self.value - self.half_order_value) / max(abs(self.value), 1e-300)

    @property
    def converged(self) -> bool:
        return self.difference <= DEFAULT_SETTINGS["quadrature_tolerance"]


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    stderr: float
    samples: int

    @classmethod
    def from_samples(cls, values: NDArray[np.float64]) -> "McEstimate":
        n = int(values.size)
        return cls(
            mean=float(np.mean(values)),
            stderr=float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf,
            samples=n,
        )


def stbc_snr(
    I1: ArrayLike, I2: ArrayLike, cfg: FeederConfig
) -> Union[float, NDArray[np.float64]]:
    """Instantaneous Alamouti SNR ``P1 eta^2 (I1^2 + I2^2) / N0``."""
    i1 = np.asarray(I1, dtype=float)
    i2 = np.asarray(I2, dtype=float)
    if np.any(i1 < 0) or np.any(i2 < 0):
        raise ParameterError("irradiances must be non-negative")
    value = cfg.P1 * cfg.eta**2 * (i1 * i1 + i2 * i2) / cfg.N0
    return float(value) if value.ndim == 0 else value


@functools.lru_cache(maxsize=8192)
def _mgf_sum(s: float, gamma_bar: float, p: MalagaParams, lower: int) -> float:
    const = malaga_constants(p)
    a, beta = p.alpha, p.beta
    arg = ((p.g0 * beta + p.omega_prime) / (a * beta)) ** 2 * 16.0 * s * gamma_bar
    total = 0.0
    for j in range(1, beta + 1):
        cj = const.c[j - 1]
        if cj == 0.0:
            continue
        coef = 0.25 * const.A * cj * 2.0 ** (a + j) / (2.0 * math.pi)
        total += coef * meijer_g_1441(arg, MeijerParams1441.for_malaga(a, j, lower))
    return total


def _check(s: float, gamma_bar: float) -> None:
    if not s > 0:
        raise ParameterError(f"MGF argument must be positive, got {s}")
    if not gamma_bar > 0:
        raise ParameterError(f"average SNR must be positive, got {gamma_bar}")


def mgf_gamma1(s: float, gamma_bar: float, p: MalagaParams) -> float:
    """Closed-form MGF ``E[exp(-s gamma)]`` of ``gamma = gamma_bar (I^a)^2``."""
    _check(s, gamma_bar)
    return _mgf_sum(float(s), float(gamma_bar), p, 0)


def mgf_gamma1_deriv(s: float, gamma_bar: float, p: MalagaParams) -> float:
    """First derivative of :func:`mgf_gamma1` with respect to ``s``."""
    _check(s, gamma_bar)
    return -_mgf_sum(float(s), float(gamma_bar), p, 1) / s


def mgf_gamma1_quad(s: float, gamma_bar: float, p: MalagaParams) -> float:
    """MGF by adaptive quadrature over the Malaga irradiance density.

    Independent of the Meijer G evaluation; used as its oracle.
    """
    _check(s, gamma_bar)
    width = 1.0 / math.sqrt(s * gamma_bar)
    mean = p.mean()
    edges = sorted(
        {0.0}
        | {width * f for f in (0.01, 0.1, 1.0, 10.0)}
        | {mean * f for f in (0.01, 0.1, 1.0, 4.0, 20.0)}
    )

    def integrand(x: float) -> float:
        return math.exp(-s * gamma_bar * x * x) * malaga_pdf(x, p)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-15, epsrel=1e-11)
        total += value
    tail, _ = integrate.quad(integrand, edges[-1], np.inf, limit=200, epsabs=1e-15)
    return total + tail


def _c1_sum(cfg: FeederConfig, q: QuadratureSpec, order: int, scale: float, single: bool) -> float:
    S, V = q.nodes(order)
    S = S / scale
    V = V / scale
    links = [(cfg.gamma_bar(i), gw.turbulence) for i, gw in enumerate(cfg.gateways)]
    total = 0.0
    for s, v in zip(S, V):
        if single:
            g1, p1 = links[0]
            bracket = mgf_gamma1_deriv(s, g1, p1)
        else:
            (g1, p1), (g2, p2) = links
            bracket = mgf_gamma1(s, g1, p1) * mgf_gamma1_deriv(s, g2, p2) + mgf_gamma1(
                s, g2, p2
            ) * mgf_gamma1_deriv(s, g1, p1)
        total += v * float(phi_node(s)) * bracket
    return total / LN2


def mean_snr(cfg: FeederConfig, single_gateway: bool = False) -> float:
    """Mean of the instantaneous SNR, used as the auto node scale."""
    used = cfg.gateways[:1] if single_gateway else cfg.gateways
    return sum(cfg.gamma_bar(i) * gw.turbulence.second_moment() for i, gw in enumerate(used))


def feeder_capacity(
    cfg: FeederConfig,
    q: QuadratureSpec = QuadratureSpec(),
    single_gateway: bool = False,
) -> FeederCapacity:
    """Ergodic feeder capacity C1 (bits/s/Hz) from the MGF quadrature.

    Args:
        cfg: Feeder configuration; two gateways unless ``single_gateway``.
        q: Quadrature order and node scale.
        single_gateway: Use only the first gateway, replacing the product-rule
            bracket by the single-link MGF derivative.

    Returns:
        The capacity together with the order T/2 result used as a
        convergence estimate. An :class:`AccuracyWarning` is issued when the
        two differ by more than the configured tolerance.
    """
    if not single_gateway and len(cfg.gateways) != 2:
        raise ParameterError("STBC feeder capacity needs exactly two gateways")
    scale = mean_snr(cfg, single_gateway) if q.scale == "auto" else float(q.scale)
    value = _c1_sum(cfg, q, q.T, scale, single_gateway)
    half = _c1_sum(cfg, q, max(1, q.T // 2), scale, single_gateway)
    result = FeederCapacity(
        value=value,
        T=q.T,
        half_order_value=half,
        scale=scale,
        single_gateway=single_gateway,
    )
    if not result.converged:
        logger.warning(
            "C1 quadrature order %d not converged: relative change %.3g vs order %d",
            q.T, result.difference, max(1, q.T // 2),
        )
        warnings.warn(
            f"feeder capacity quadrature T={q.T} changed by {result.difference:.3g} "
            f"relative to T/2",
            AccuracyWarning,
            stacklevel=2,
        )
    return result


def feeder_capacity_mc(
    rng: RngLike, cfg: FeederConfig, n: int, single_gateway: bool = False
) -> McEstimate:
    """Monte Carlo ``E[log2(1 + gamma_1)]`` over independent Malaga draws."""
    if n < 10_000:
        raise ParameterError(f"feeder Monte Carlo needs n >= 1e4 samples, got {n}")
    gen = as_generator(rng)
    irradiance = []
    for gw in cfg.gateways[:1] if single_gateway else cfg.gateways:
        irradiance.append(gw.path_loss.value * malaga_sample(gen, gw.turbulence, n))
    second = irradiance[1] if len(irradiance) > 1 else np.zeros(n)
    snr = np.asarray(stbc_snr(irradiance[0], second, cfg))
    return McEstimate.from_samples(np.log2(1.0 + snr))
