"""Average-virtual-SINR beamforming with one-bit-feedback user selection.

The beamformers use only the deterministic steering matrix ``A`` (user
locations and beam pattern), never instantaneous channel state. Gradients
use the Wirtinger convention ``g = 2 df/dw*`` so that the directional
derivative of a real objective along ``dw`` is ``Re(g^H dw)``.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .constants import (
    DEFAULT_SETTINGS,
    MU_FLOOR,
    BeamformingError,
    ClampedWeightWarning,
    IterationError,
    ParameterError,
)
from .channels import ShadowedRicianParams
from .specfun import expn_scaled

logger = logging.getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
Objective = Callable[["BfProblem", ComplexMatrix], float]
ChannelSampler = Callable[[int], ComplexMatrix]

INITIALIZERS = ("matched-filter", "random", "slnr")
FEEDBACK_MODES = ("expected", "measured")


@dataclass
class BfProblem:
    """Beamforming problem on the steering matrix.

    Attributes:
        A: ``N x K`` steering matrix, column ``k`` is ``a(phi_k)``.
        P: Per-user transmit powers ``P_{2,k}`` (W); a scalar is broadcast.
        sigma2: Noise variance (W).
        per_interferer_power: Weight interference terms by the interferer's
            power ``P_j`` instead of the user's own ``P_k``.
    """

    A: ComplexMatrix
    P: NDArray[np.float64]
    sigma2: float
    per_interferer_power: bool = False

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=complex)
        if self.A.ndim == 1:
            self.A = self.A[:, None]
        self.P = np.broadcast_to(np.asarray(self.P, dtype=float), (self.K,)).copy()
        if np.any(np.linalg.norm(self.A, axis=0) == 0):
            raise ParameterError("steering columns must be non-zero")
        if np.any(self.P <= 0):
            raise ParameterError("user powers must be positive")
        if not self.sigma2 > 0:
            raise ParameterError(f"noise variance must be positive, got {self.sigma2}")

    @property
    def N(self) -> int:
        return int(self.A.shape[0])

    @property
    def K(self) -> int:
        return int(self.A.shape[1])

    def subset(self, users: Sequence[int]) -> "BfProblem":
        idx = list(users)
        return BfProblem(self.A[:, idx], self.P[idx], self.sigma2, self.per_interferer_power)

    def interference_powers(self, k: int) -> NDArray[np.float64]:
        """Powers multiplying the weighted interference terms of user ``k``."""
        if self.per_interferer_power:
            return self.P.copy()
        return np.full(self.K, self.P[k])

    def cross_gains(self, W: ComplexMatrix) -> NDArray[np.float64]:
        """``G[j, l] = |a_j^H w_l|^2``."""
        return np.abs(self.A.conj().T @ W) ** 2


@dataclass
class AlgorithmConfig:
    """Stopping rule, SINR threshold (linear) and start point of the iteration."""

    epsilon: float = DEFAULT_SETTINGS["epsilon"]
    Lambda_th: float = 10.0 ** (DEFAULT_SETTINGS["threshold_db"] / 10.0)
    max_iters: int = DEFAULT_SETTINGS["max_iters"]
    initializer: str = DEFAULT_SETTINGS["initializer"]
    feedback: str = DEFAULT_SETTINGS["feedback"]
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.Lambda_th >= 0:
            raise ParameterError(f"Lambda_th must be non-negative, got {self.Lambda_th}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.initializer not in INITIALIZERS:
            raise ParameterError(f"unknown initializer {self.initializer!r}")
        if self.feedback not in FEEDBACK_MODES:
            raise ParameterError(f"unknown feedback mode {self.feedback!r}")


@dataclass
class BeamformerSet:
    """Unit-norm beamformers, interference weights and the selected users.

    ``W`` keeps a column for every user; columns of users outside ``U`` hold
    the beamformer from the round in which the user was dropped and do not
    transmit.
    """

    W: ComplexMatrix
    mu: NDArray[np.float64]
    U: Tuple[int, ...]
    iterations: int = 0
    converged: bool = True
    trace: List[float] = field(default_factory=list)
    clamped: int = 0
    max_residual: float = 0.0

    @property
    def active(self) -> ComplexMatrix:
        return self.W[:, list(self.U)]


@dataclass(frozen=True)
class WeightUpdateInfo:
    clamped: int
    residual: float
    raw: NDArray[np.float64]


def signal_and_interference(
    prob: BfProblem, W: ComplexMatrix
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``D_j = P_j |a_j^H w_j|^2`` and ``I_j = sigma^2 + sum_{l!=j} P_l |a_j^H w_l|^2``."""
    power = prob.cross_gains(W) * prob.P[None, :]
    D = np.diag(power).copy()
    I = prob.sigma2 + power.sum(axis=1) - D
    return D, I


def sum_rate_surrogate(prob: BfProblem, W: ComplexMatrix) -> float:
    """``sum_j log2(1 + D_j / I_j)`` on the steering matrix."""
    D, I = signal_and_interference(prob, W)
    return float(np.sum(np.log2(1.0 + D / I)))


def average_virtual_sinr(prob: BfProblem, W: ComplexMatrix, mu: ArrayLike) -> NDArray[np.float64]:
    """``P_k |a_k^H w_k|^2 / (sigma^2 + sum_{j!=k} pi_j mu_{k,j} |a_j^H w_k|^2)`` per user."""
    weights = np.asarray(mu, dtype=float)
    gains = prob.cross_gains(W)
    out = np.empty(prob.K)
    for k in range(prob.K):
        others = np.arange(prob.K) != k
        leak = prob.interference_powers(k) * weights[k] * gains[:, k]
        out[k] = prob.P[k] * gains[k, k] / (prob.sigma2 + float(np.sum(leak[others])))
    return out


def expected_sinr(
    prob: BfProblem, W: ComplexMatrix, fading: Optional[ShadowedRicianParams] = None
) -> NDArray[np.float64]:
    """``E[SINR_k]`` when user ``k`` sees the channel ``rho_k a_k``.

    The fading power ``|rho_k|^2`` is a mixture of ``Gamma(q + 1, a3)`` laws,
    and ``E[x / (x + c)] = n e^z E_{n+1}(z)`` with ``z = a3 c`` for
    ``x ~ Gamma(n, a3)``. Without ``fading`` the channel is ``A`` itself and
    the result is ``D / I``.
    """
    D, I = signal_and_interference(prob, W)
    if fading is None:
        return D / I
    weights = fading.power_weights()
    a3 = fading.checked_a3()
    interference = np.maximum(I - prob.sigma2, 0.0)
    out = np.empty(prob.K)
    for k in range(prob.K):
        if interference[k] == 0:
            out[k] = D[k] * fading.mean_power() / prob.sigma2
            continue
        z = a3 * prob.sigma2 / interference[k]
        mixture = sum(w * (q + 1) * expn_scaled(q + 2, z) for q, w in enumerate(weights))
        out[k] = D[k] / interference[k] * mixture
    return out


def _normalize_columns(W: ComplexMatrix) -> ComplexMatrix:
    return W / np.linalg.norm(W, axis=0, keepdims=True)


def virtual_sinr_weights(prob: BfProblem, mu: ArrayLike, k: int) -> NDArray[np.complex128]:
    """Maximizer of the average virtual SINR of user ``k`` for fixed weights.

    ``w_k`` is the normalized solution of
    ``(sigma^2 I + sum_{j!=k} P mu_{k,j} a_j a_j^H) w = a_k``.
    ``mu`` is either the full ``K x K`` weight matrix or row ``k``.
    """
    weights = np.asarray(mu, dtype=float)
    row = weights[k] if weights.ndim == 2 else weights
    others = [j for j in range(prob.K) if j != k]
    if np.any(row[others] < 0):
        raise ParameterError("interference weights must be non-negative")
    scaled = prob.interference_powers(k)[others] * row[others]
    A_o = prob.A[:, others]
    R = prob.sigma2 * np.eye(prob.N, dtype=complex) + (A_o * scaled) @ A_o.conj().T
    try:
        w = scipy.linalg.solve(R, prob.A[:, k], assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as err:
        raise BeamformingError(f"virtual-SINR system for user {k} is singular: {err}")
    norm = np.linalg.norm(w)
    if not (np.isfinite(norm) and norm > 0):
        raise BeamformingError(f"virtual-SINR solution for user {k} vanished")
    return w / norm


def _fixed_point_terms(
    prob: BfProblem, W: ComplexMatrix, k: int
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], List[int]]:
    D, I = signal_and_interference(prob, W)
    if np.any(D <= 0):
        raise ParameterError("every user needs positive signal power under W")
    others = [j for j in range(prob.K) if j != k]
    ratio = D[others] * (I[k] + D[k]) / (I[others] * (I[others] + D[others]))
    leak = prob.cross_gains(W)[others, k]
    return ratio, leak, D, others


def fixed_point_residual(
    prob: BfProblem, W: ComplexMatrix, mu_row: ArrayLike, k: int
) -> float:
    """Largest relative violation of the gradient-alignment condition for user ``k``.

    The condition reads ``r_j = mu_{k,j} pi_j D_k / (P_k S_k)`` for ``j != k``
    with ``r_j = D_j (I_k + D_k) / (I_j (I_j + D_j))`` and
    ``S_k = sigma^2 + sum_l pi_l mu_{k,l} |a_l^H w_k|^2``.
    """
    if prob.K == 1:
        return 0.0
    ratio, leak, D, others = _fixed_point_terms(prob, W, k)
    row = np.asarray(mu_row, dtype=float)
    mu = row[others] if row.size == prob.K else row
    pi = prob.interference_powers(k)[others]
    S = prob.sigma2 + float(np.sum(pi * mu * leak))
    rhs = mu * pi * D[k] / (prob.P[k] * S)
    return float(np.max(np.abs(rhs - ratio) / np.abs(ratio)))


def update_weights(
    prob: BfProblem,
    W: ComplexMatrix,
    k: int,
    full_output: bool = False,
) -> Union[NDArray[np.float64], Tuple[NDArray[np.float64], WeightUpdateInfo]]:
    """Solve ``sigma^2 1 = Q_k mu_k`` for the ``K - 1`` weights of user ``k``.

    ``Q_k = diag(pi_j D_k / (P_k r_j)) - 1 (pi_l |a_l^H w_k|^2)^T`` over
    ``j, l != k``. Non-positive solutions are clamped to ``MU_FLOOR``.

    Returns:
        The weights in user order with ``k`` skipped; with ``full_output``
        also a :class:`WeightUpdateInfo` holding the clamp count, the
        fixed-point residual of the unclamped solution and that solution.

    Raises:
        IterationError: ``Q_k`` is singular.
    """
    if prob.K == 1:
        empty = np.zeros(0)
        return (empty, WeightUpdateInfo(0, 0.0, empty)) if full_output else empty
    ratio, leak, D, others = _fixed_point_terms(prob, W, k)
    pi = prob.interference_powers(k)[others]
    Q = np.diag(pi * D[k] / (prob.P[k] * ratio)) - np.outer(np.ones(len(others)), pi * leak)
    rhs = np.full(len(others), prob.sigma2)
    try:
        raw = scipy.linalg.solve(Q, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as err:
        raise IterationError(
            f"Q_{k} is singular: {err}",
            {"user": k, "Q": Q.tolist(), "ratio": ratio.tolist()},
        )
    if not np.all(np.isfinite(raw)):
        raise IterationError(f"Q_{k} solve produced non-finite weights", {"user": k})

    mu = np.where(raw > 0, raw, MU_FLOOR)
    clamped = int(np.count_nonzero(raw <= 0))
    if not full_output:
        return mu
    residual = fixed_point_residual(prob, W, raw, k) if clamped == 0 else math.nan
    return mu, WeightUpdateInfo(clamped, residual, raw)


def update_all_weights(
    prob: BfProblem, W: ComplexMatrix
) -> Tuple[NDArray[np.float64], int, float]:
    """Weight matrix for all users; diagonal entries are zero."""
    mu = np.zeros((prob.K, prob.K))
    clamped = 0
    worst = 0.0
    for k in range(prob.K):
        row, info = update_weights(prob, W, k, full_output=True)
        others = [j for j in range(prob.K) if j != k]
        mu[k, others] = row
        clamped += info.clamped
        if not math.isnan(info.residual):
            worst = max(worst, info.residual)
    return mu, clamped, worst


@dataclass(frozen=True)
class InnerStep:
    """One Jacobi round: the new beamformers and the weights they solve for."""

    W: ComplexMatrix
    mu: NDArray[np.float64]
    change: float
    clamped: int = 0
    residual: float = 0.0


def inner_iterations(
    prob: BfProblem, W: ComplexMatrix, mu: Optional[ArrayLike] = None
) -> Iterator[InnerStep]:
    """Endless inner rounds starting from ``W``.

    Each round updates every weight row from the current beamformers, then
    every beamformer column from those weights. ``change`` is the largest
    column move. A given ``mu`` replaces the first weight update.
    """
    weights = None if mu is None else np.asarray(mu, dtype=float)
    while True:
        clamped, residual = 0, 0.0
        if weights is None:
            weights, clamped, residual = update_all_weights(prob, W)
        W_next = np.column_stack([virtual_sinr_weights(prob, weights, k) for k in range(prob.K)])
        change = float(np.max(np.linalg.norm(W_next - W, axis=0)))
        yield InnerStep(W_next, weights, change, clamped, residual)
        W, weights = W_next, None


def gradient_upper_bound(prob: BfProblem, W: ComplexMatrix, k: int) -> NDArray[np.complex128]:
    """Gradient of ``sum_j ln(1 + D_j / I_j)`` with respect to ``w_k``, divided by ``P_k``."""
    D, I = signal_and_interference(prob, W)
    w = W[:, k]
    proj = prob.A.conj().T @ w
    coef = -2.0 * D / (I * (I + D))
    coef[k] = 2.0 / (I[k] + D[k])
    return prob.A @ (coef * proj)


def gradient_avg_virtual_sinr(
    prob: BfProblem, W: ComplexMatrix, mu: ArrayLike, k: int
) -> NDArray[np.complex128]:
    """Gradient of the log average virtual SINR of user ``k``, divided by ``P_k``."""
    weights = np.asarray(mu, dtype=float)
    row = weights[k] if weights.ndim == 2 else weights
    D, _ = signal_and_interference(prob, W)
    w = W[:, k]
    proj = prob.A.conj().T @ w
    pi = prob.interference_powers(k)
    others = np.arange(prob.K) != k
    S = prob.sigma2 + float(np.sum((pi * row * np.abs(proj) ** 2)[others]))
    coef = np.where(others, -2.0 * row * pi / (prob.P[k] * S), 0.0)
    coef[k] = 2.0 / D[k]
    return prob.A @ (coef * proj)


def projected_gradient_angle(
    g1: NDArray[np.complex128], g2: NDArray[np.complex128], w: NDArray[np.complex128]
) -> float:
    """Angle between two gradients after projection onto the tangent space at ``w``."""
    p1 = g1 - np.real(np.vdot(w, g1)) * w
    p2 = g2 - np.real(np.vdot(w, g2)) * w
    n1, n2 = np.linalg.norm(p1), np.linalg.norm(p2)
    if n1 == 0 or n2 == 0:
        return math.nan
    return float(2.0 * np.arcsin(min(1.0, np.linalg.norm(p1 / n1 - p2 / n2) / 2.0)))


def instantaneous_sinr(
    H: ComplexMatrix, W: ComplexMatrix, P: ArrayLike, sigma2: float, k: int
) -> float:
    """SINR of user ``k`` for channel matrix ``H`` (column ``k`` is ``h_k``)."""
    return float(sinr_all(H, W, P, sigma2)[k])


def sinr_all(
    H: ComplexMatrix, W: ComplexMatrix, P: ArrayLike, sigma2: float
) -> NDArray[np.float64]:
    """SINR of every user; ``H`` may carry leading batch dimensions ``(..., N, K)``."""
    powers = np.asarray(P, dtype=float)
    gains = np.abs(np.einsum("...nk,nl->...kl", H.conj(), W)) ** 2
    received = gains * np.broadcast_to(powers, (W.shape[1],))
    signal = np.diagonal(received, axis1=-2, axis2=-1)
    interference = received.sum(axis=-1) - signal
    return signal / (interference + sigma2)


def initial_beamformers(prob: BfProblem, cfg: AlgorithmConfig) -> ComplexMatrix:
    """Start point ``W^0`` of the iteration."""
    if cfg.initializer == "matched-filter":
        return _normalize_columns(prob.A.copy())
    if cfg.initializer == "slnr":
        return baseline_bf(prob, "slnr").W
    gen = np.random.default_rng(cfg.seed)
    draw = gen.standard_normal((prob.N, prob.K)) + 1j * gen.standard_normal((prob.N, prob.K))
    return _normalize_columns(draw)


def _feedback_sinr(
    prob: BfProblem,
    W: ComplexMatrix,
    cfg: AlgorithmConfig,
    users: List[int],
    sampler: Optional[ChannelSampler],
    round_index: int,
    fading: Optional[ShadowedRicianParams],
) -> NDArray[np.float64]:
    if cfg.feedback == "measured":
        if sampler is None:
            raise ParameterError("measured feedback needs a channel sampler")
        H = sampler(round_index)[:, users]
        return sinr_all(H, W, prob.P, prob.sigma2)
    return expected_sinr(prob, W, fading)


def run_algorithm1(
    prob: BfProblem,
    cfg: AlgorithmConfig = AlgorithmConfig(),
    sampler: Optional[ChannelSampler] = None,
    objective: Optional[Objective] = None,
    fading: Optional[ShadowedRicianParams] = None,
) -> BeamformerSet:
    """Alternate weight updates and virtual-SINR beamformers, then select users.

    Each inner round updates all weight rows from the current beamformers and
    then all beamformer columns (Jacobi order), until the largest column
    change is at most ``epsilon``; the converged beamformers are kept. If
    ``max_iters`` runs out first, the iterate with the best ``objective``
    (default :func:`sum_rate_surrogate`) is kept instead. The start point is
    never a candidate. Users whose feedback SINR falls below ``Lambda_th``
    are removed and the iteration restarts on the remaining users, until no
    user fails or none is left.

    Args:
        prob: Beamforming problem over all ``K`` users.
        cfg: Algorithm settings.
        sampler: ``round -> N x K`` channel draw, required for measured feedback.
        objective: Score used to pick an iterate when ``max_iters`` is reached.
        fading: Shadowed-Rician law behind the expected feedback SINR; without
            it the channel is taken as ``A``.
    """
    score = objective or sum_rate_surrogate
    K = prob.K
    W_all = _normalize_columns(prob.A.copy())
    mu_all = np.zeros((K, K))
    users = list(range(K))
    trace: List[float] = []
    iterations = 0
    converged = True
    clamped = 0
    worst = 0.0
    round_index = 0

    while users:
        sub = prob.subset(users)
        steps = inner_iterations(sub, initial_beamformers(sub, cfg))
        best: Optional[Tuple[ComplexMatrix, NDArray[np.float64], float]] = None
        round_converged = False
        for _ in range(cfg.max_iters):
            step = next(steps)
            clamped += step.clamped
            worst = max(worst, step.residual)
            W, mu = step.W, step.mu
            iterations += 1
            value = score(sub, W)
            trace.append(value)
            logger.debug(
                "round %d iter %d: objective %.10g change %.3g",
                round_index, iterations, value, step.change,
            )
            if step.change <= cfg.epsilon:
                round_converged = True
                break
            if best is None or value > best[2]:
                best = (W, mu, value)
        if not round_converged:
            assert best is not None
            W, mu = best[0], best[1]
            converged = False
            logger.warning(
                "beamforming iteration hit max_iters=%d without reaching epsilon=%g",
                cfg.max_iters, cfg.epsilon,
            )

        W_all[:, users] = W
        mu_all[np.ix_(users, users)] = mu
        sinr = _feedback_sinr(sub, W, cfg, users, sampler, round_index, fading)
        failing = [u for u, g in zip(users, sinr) if g < cfg.Lambda_th]
        if not failing:
            break
        logger.info("one-bit feedback removed users %s", failing)
        users = [u for u in users if u not in failing]
        round_index += 1

    if clamped:
        logger.warning("%d interference weights were negative and clamped", clamped)
        warnings.warn(
            f"{clamped} interference weights clamped to {MU_FLOOR:g}",
            ClampedWeightWarning,
            stacklevel=2,
        )
    return BeamformerSet(
        W=W_all,
        mu=mu_all,
        U=tuple(users),
        iterations=iterations,
        converged=converged,
        trace=trace,
        clamped=clamped,
        max_residual=worst,
    )


def zero_forcing(prob: BfProblem) -> ComplexMatrix:
    """Normalized columns of ``A (A^H A)^{-1}``."""
    if prob.N < prob.K or np.linalg.matrix_rank(prob.A) < prob.K:
        raise BeamformingError(
            f"zero forcing needs full column rank (N={prob.N}, K={prob.K})"
        )
    gram = prob.A.conj().T @ prob.A
    try:
        inv = scipy.linalg.solve(gram, np.eye(prob.K, dtype=complex), assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as err:
        raise BeamformingError(f"zero forcing Gram matrix is singular: {err}")
    return _normalize_columns(prob.A @ inv)


def baseline_bf(prob: BfProblem, kind: str) -> BeamformerSet:
    """Zero-forcing (``"zf"``) or SLNR (``"slnr"``, all weights one) beamformers."""
    key = kind.lower()
    ones = np.ones((prob.K, prob.K)) - np.eye(prob.K)
    if key == "zf":
        W = zero_forcing(prob)
    elif key == "slnr":
        W = np.column_stack([virtual_sinr_weights(prob, ones, k) for k in range(prob.K)])
    else:
        raise ParameterError(f"unknown baseline {kind!r}; expected 'zf' or 'slnr'")
    return BeamformerSet(W=W, mu=ones, U=tuple(range(prob.K)))
