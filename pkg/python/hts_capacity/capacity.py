"""User-link ergodic capacity C2 in closed form, end-to-end capacity, Monte Carlo oracles."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import special

from .beamforming import (
    AlgorithmConfig,
    BeamformerSet,
    BfProblem,
    ChannelSampler,
    ComplexMatrix,
    baseline_bf,
    run_algorithm1,
    sinr_all,
)
from .channels import RngLike, ShadowedRicianParams, as_generator, sr_sample_complex
from .constants import DEFAULT_SETTINGS, LN2, ConvergenceError, ParameterError
from .feeder import McEstimate
from .specfun import expint_ei, expn_scaled

logger = logging.getLogger(__name__)

METHODS = ("closed-form", "monte-carlo")


@dataclass(frozen=True)
class UserCapacityInputs:
    """Per-user scales and thresholds of ``X = phi_x |rho|^2`` and ``Y = phi_y |rho|^2``."""

    phi_x: float
    phi_y: float
    params: ShadowedRicianParams
    lambda_x: float = 0.0
    lambda_y: float = 0.0
    feasible: bool = True

    def __post_init__(self) -> None:
        if not (self.phi_x > self.phi_y >= 0):
            raise ParameterError(
                f"need phi_x > phi_y >= 0, got phi_x={self.phi_x}, phi_y={self.phi_y}"
            )
        if self.lambda_x < 0 or self.lambda_y < 0:
            raise ParameterError("thresholds must be non-negative")

    @property
    def signal(self) -> float:
        return self.phi_x - self.phi_y


@dataclass(frozen=True)
class UserLinkCapacity:
    total: float
    per_user: Tuple[float, ...]


@dataclass
class CapacityResult:
    """End-to-end capacity ``C = min(C1, C2)`` (bits/s/Hz) with its components."""

    C1: float
    C2: float
    C2_per_user: Tuple[float, ...] = ()
    C: float = field(init=False)
    method: str = "closed-form"
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.C1 < 0 or self.C2 < 0:
            raise ParameterError("capacities must be non-negative")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        self.C = min(self.C1, self.C2)


def _shifted_tail_integral(q: int, mu: float, shift: float) -> float:
    """``int_0^inf u^q exp(-mu u) / (u + shift) du`` for ``shift >= 1``."""
    z = mu * shift
    if z <= 1.0:
        # binomial/Ei branch form
        lead = math.exp(z) * float(expint_ei(-z))
        if q == 0:
            return -lead
        total = (-1.0) ** (q - 1) * shift**q * lead
        for l in range(1, q + 1):
            total += math.factorial(l - 1) * (-shift) ** (q - l) * mu ** (-l)
        return total
    # stable form for z > 1: q! mu^-q e^z E_{q+1}(z)
    return math.factorial(q) * mu ** (-q) * expn_scaled(q + 1, z)


def truncated_log_moment(
    p: ShadowedRicianParams, phi: float, Lambda: float, conditional: bool = False
) -> float:
    """``int_Lambda^inf ln(1 + x) f(x) dx`` for ``x = phi |rho|^2``.

    Split into the boundary term ``(1 - F(Lambda)) ln(1 + Lambda)`` and the
    tail integral ``int_Lambda^inf (1 - F(x)) / (1 + x) dx``, both finite sums
    over the gamma-mixture form of the CDF.

    Args:
        p: Shadowed-Rician parameters.
        phi: Scale of ``|rho|^2``; zero gives zero.
        Lambda: Lower truncation point.
        conditional: Divide by ``P(x >= Lambda)``, giving the conditional
            expectation instead of the truncated one.
    """
    a3 = p.checked_a3()
    if Lambda < 0:
        raise ParameterError(f"threshold must be non-negative, got {Lambda}")
    if phi < 0:
        raise ParameterError(f"scale must be non-negative, got {phi}")
    if phi == 0:
        return 0.0
    mu = a3 / phi
    weights = p.power_weights()
    decay = math.exp(-mu * Lambda)

    survival = 0.0
    tail = 0.0
    for order, weight in enumerate(weights):
        survival += weight * float(special.gammaincc(order + 1, mu * Lambda))
        for n in range(order + 1):
            inner = sum(
                math.comb(n, q) * Lambda ** (n - q) * _shifted_tail_integral(q, mu, 1.0 + Lambda)
                for q in range(n + 1)
            )
            tail += weight * mu**n / math.factorial(n) * decay * inner
    value = survival * math.log1p(Lambda) + tail
    if conditional:
        return value / survival if survival > 0 else 0.0
    return value


def user_capacity_inputs(
    prob: BfProblem,
    bf: BeamformerSet,
    p: ShadowedRicianParams,
    Lambda_th: float = 0.0,
) -> List[UserCapacityInputs]:
    """Scales and mapped thresholds for every selected user.

    ``{gamma_k >= Lambda}`` equals ``{|rho|^2 >= r}`` with
    ``r = Lambda / (phi_sig - Lambda phi_y)``, so the thresholds are
    ``phi_x r`` and ``phi_y r``. Users with ``phi_sig <= Lambda phi_y`` can
    never reach the threshold and are marked infeasible.
    """
    if Lambda_th < 0:
        raise ParameterError(f"threshold must be non-negative, got {Lambda_th}")
    users = list(bf.U)
    if not users:
        return []
    W = bf.W[:, users]
    A = prob.A[:, users]
    snr = prob.P[users] / prob.sigma2
    gains = np.abs(A.conj().T @ W) ** 2 * snr[None, :]
    out = []
    for i in range(len(users)):
        phi_x = float(gains[i].sum())
        phi_y = phi_x - float(gains[i, i])
        signal = phi_x - phi_y
        if Lambda_th == 0:
            out.append(UserCapacityInputs(phi_x, phi_y, p))
            continue
        margin = signal - Lambda_th * phi_y
        if margin <= 0:
            out.append(UserCapacityInputs(phi_x, phi_y, p, feasible=False))
            continue
        r = Lambda_th / margin
        out.append(UserCapacityInputs(phi_x, phi_y, p, phi_x * r, phi_y * r))
    return out


def _user_rate(x_term: float, y_term: float) -> float:
    """``(x_term - y_term) / ln 2``; a negative gap beyond round-off is an error."""
    gap = x_term - y_term
    if gap >= 0:
        return gap / LN2
    slack = 1e-10 * max(abs(x_term), abs(y_term)) + 1e-14
    if gap < -slack:
        logger.warning("negative user rate: log moments %.12g and %.12g", x_term, y_term)
        raise ConvergenceError(
            f"user rate {gap / LN2:.6g} bits/s/Hz is negative beyond round-off",
            {"x_term": x_term, "y_term": y_term, "slack": slack},
        )
    return 0.0


def user_link_capacity(
    inputs: Sequence[UserCapacityInputs], conditional: bool = False
) -> UserLinkCapacity:
    """Closed-form C2 (bits/s/Hz) with the per-user breakdown."""
    per_user = []
    for item in inputs:
        if not item.feasible:
            per_user.append(0.0)
            continue
        x_term = truncated_log_moment(item.params, item.phi_x, item.lambda_x, conditional)
        y_term = truncated_log_moment(item.params, item.phi_y, item.lambda_y, conditional)
        per_user.append(_user_rate(x_term, y_term))
    return UserLinkCapacity(total=float(sum(per_user)), per_user=tuple(per_user))


def ergodic_sum_rate(
    prob: BfProblem,
    W: ComplexMatrix,
    p: ShadowedRicianParams,
    Lambda_th: float = 0.0,
) -> float:
    """Closed-form C2 of beamformers ``W`` serving every user of ``prob``."""
    bf = BeamformerSet(W=W, mu=np.zeros((prob.K, prob.K)), U=tuple(range(prob.K)))
    return user_link_capacity(user_capacity_inputs(prob, bf, p, Lambda_th)).total


def capacity_objective(
    p: ShadowedRicianParams, Lambda_th: float = 0.0
) -> Callable[[BfProblem, ComplexMatrix], float]:
    """:func:`ergodic_sum_rate` as an iterate-selection objective for the beamforming loop."""

    def objective(prob: BfProblem, W: ComplexMatrix) -> float:
        return ergodic_sum_rate(prob, W, p, Lambda_th)

    return objective


def scheme_beamformers(
    prob: BfProblem,
    scheme: str,
    cfg: AlgorithmConfig,
    p: ShadowedRicianParams,
    sampler: Optional[ChannelSampler] = None,
    objective: str = "capacity",
) -> BeamformerSet:
    """Beamformers of one scheme: ``"proposed"`` runs the iteration, ``"zf"``/``"slnr"`` are baselines.

    If the iteration runs out of ``max_iters``, ``objective="capacity"``
    selects the proposed iterate by the closed-form C2 and ``"surrogate"`` by
    the sum rate on the steering matrix.
    """
    if scheme != "proposed":
        return baseline_bf(prob, scheme)
    if objective not in ("capacity", "surrogate"):
        raise ParameterError(f"unknown objective {objective!r}")
    score = capacity_objective(p, cfg.Lambda_th) if objective == "capacity" else None
    return run_algorithm1(prob, cfg, sampler, score, fading=p)


def end_to_end_capacity(
    c1: float,
    c2: float,
    per_user: Sequence[float] = (),
    method: str = "closed-form",
    diagnostics: Optional[Dict[str, Any]] = None,
) -> CapacityResult:
    """Buffer-aided decode-and-forward capacity ``min(C1, C2)``."""
    return CapacityResult(
        C1=float(c1),
        C2=float(c2),
        C2_per_user=tuple(float(v) for v in per_user),
        method=method,
        diagnostics=dict(diagnostics or {}),
    )


def user_link_capacity_mc(
    rng: RngLike,
    prob: BfProblem,
    bf: BeamformerSet,
    p: ShadowedRicianParams,
    Lambda_th: float,
    n: int,
) -> McEstimate:
    """Monte Carlo ``sum_k E[log2(1 + gamma_k) 1{gamma_k >= Lambda_th}]`` over ``k in U``.

    Channels are drawn as ``h_k = rho_k a_k`` with independent
    shadowed-Rician ``rho_k`` and the SINR evaluated directly.
    """
    if n < 10_000:
        raise ParameterError(f"user-link Monte Carlo needs n >= 1e4 samples, got {n}")
    users = list(bf.U)
    if not users:
        return McEstimate(mean=0.0, stderr=0.0, samples=n)
    gen = as_generator(rng)
    A = prob.A[:, users]
    W = bf.W[:, users]
    P = prob.P[users]
    chunk = int(DEFAULT_SETTINGS["mc_chunk"])
    rates: List[NDArray[np.float64]] = []
    done = 0
    while done < n:
        size = min(chunk, n - done)
        rho = sr_sample_complex(gen, p, size * len(users)).reshape(size, len(users))
        H = rho[:, None, :] * A[None, :, :]
        sinr = sinr_all(H, W, P, prob.sigma2)
        rates.append(np.sum(np.log2(1.0 + sinr) * (sinr >= Lambda_th), axis=1))
        done += size
    return McEstimate.from_samples(np.concatenate(rates))
