"""Special functions required by the closed-form capacity expressions.

Bessel, confluent hypergeometric and exponential-integral functions delegate
to :mod:`scipy.special`. The Meijer G functions that have no closed reduction
are evaluated by numerical Mellin-Barnes integration along a vertical
contour (:func:`mellin_barnes`).

All functions are pure; none keeps mutable module state apart from the
cached Gauss-Legendre rules.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .constants import DEFAULT_SETTINGS, ConvergenceError, ParameterError

logger = logging.getLogger(__name__)

FloatOrArray = Union[float, NDArray[np.float64]]


def _as_output(value: NDArray[np.float64]) -> FloatOrArray:
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class MeijerParams2002:
    """Lower-row parameters ``(a, b)`` of ``G^{2,0}_{0,2}[x | -; a, b]``."""

    a: float
    b: float


@dataclass(frozen=True)
class MeijerParams1441:
    """Parameters of ``G^{1,4}_{4,1}[x | a1..a4; b]``.

    The upper row holds exactly four entries, the lower row one.
    """

    upper: Tuple[float, float, float, float]
    lower: float

    def __post_init__(self) -> None:
        if len(self.upper) != 4:
            raise ParameterError(
                f"G^(1,4)_(4,1) needs 4 upper parameters, got {len(self.upper)}"
            )

    @classmethod
    def for_malaga(cls, alpha: float, j: int, lower: float = 0.0) -> "MeijerParams1441":
        """Parameter rows produced by the Malaga MGF (lower 0) and its derivative (lower 1)."""
        return cls(
            upper=(
                (2.0 - alpha) / 2.0,
                (1.0 - alpha) / 2.0,
                (2.0 - j) / 2.0,
                (1.0 - j) / 2.0,
            ),
            lower=float(lower),
        )


def bessel_j(n: int, x: ArrayLike) -> FloatOrArray:
    """First-kind Bessel function ``J_n(x)`` for a non-negative integer order."""
    if int(n) != n or n < 0:
        raise ParameterError(f"order must be a non-negative integer, got {n!r}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError("bessel_j argument must be finite")
    return _as_output(special.jv(int(n), arr))


def hyp1f1(a: float, b: float, x: ArrayLike, scaled: bool = False) -> FloatOrArray:
    """Confluent hypergeometric function ``1F1(a; b; x)``.

    Args:
        a: Upper parameter.
        b: Lower parameter; non-positive integers are rejected.
        x: Argument.
        scaled: Return ``exp(-x) * 1F1(a; b; x)`` instead, which stays finite
            for the large arguments met in shadowed-Rician densities.

    Returns:
        The function value, a float for scalar ``x``.

    Raises:
        ParameterError: ``b`` is zero or a negative integer.
    """
    if b <= 0 and float(b).is_integer():
        raise ParameterError(f"1F1 undefined for non-positive integer b={b}")
    arr = np.asarray(x, dtype=float)
    if b == 1 and a >= 1 and float(a).is_integer():
        # Kummer transformation: 1F1(m;1;x) = e^x L_{m-1}(-x), a finite sum
        m = int(a)
        poly = np.zeros_like(arr)
        term = np.ones_like(arr)
        for p in range(m):
            if p > 0:
                term = term * arr * (m - p) / (p * p)
            poly = poly + term
        if scaled:
            value = poly
        else:
            with np.errstate(over="ignore"):
                value = np.exp(arr) * poly
    else:
        value = special.hyp1f1(a, b, arr)
        if scaled:
            value = value * np.exp(-arr)
    return _as_output(value)


def expint_ei(x: ArrayLike) -> FloatOrArray:
    """Exponential integral ``Ei(x)`` for negative real ``x``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr < 0)):
        raise ParameterError("expint_ei is only defined here for x < 0")
    return _as_output(special.expi(arr))


def expn_scaled(n: int, x: float) -> float:
    """Return ``exp(x) * E_n(x)`` for ``x > 0`` without overflow.

    Uses the modified Lentz continued fraction for ``x > 1`` and scipy's
    ``expn`` below that.
    """
    if n < 0 or int(n) != n:
        raise ParameterError(f"E_n order must be a non-negative integer, got {n!r}")
    if not x > 0:
        raise ParameterError(f"E_n argument must be positive, got {x}")
    if n == 0:
        return 1.0 / x
    if x <= 1.0:
        return math.exp(x) * float(special.expn(n, x))

    tiny = 1e-300
    b = x + n
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (n - 1 + i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ConvergenceError("E_n continued fraction did not converge", {"n": n, "x": x})


def meijer_g_2002(x: ArrayLike, p: MeijerParams2002) -> FloatOrArray:
    """``G^{2,0}_{0,2}[x | -; a, b] = 2 x^{(a+b)/2} K_{a-b}(2 sqrt(x))``.

    Evaluated in log space with the exponentially scaled Bessel function;
    the small-argument limit of ``K`` takes over where ``kve`` overflows.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ParameterError("meijer_g_2002 requires x > 0")
    nu = abs(p.a - p.b)
    z = 2.0 * np.sqrt(arr)
    with np.errstate(over="ignore", divide="ignore"):
        log_k = np.log(special.kve(nu, z)) - z
    bad = ~np.isfinite(log_k)
    if np.any(bad):
        zb = z[bad] if np.ndim(z) else z
        if nu > 0:
            fallback = special.gammaln(nu) - math.log(2.0) + nu * np.log(2.0 / zb)
        else:
            fallback = np.log(-np.log(zb / 2.0) - np.euler_gamma)
        if np.ndim(log_k):
            log_k[bad] = fallback
        else:
            log_k = fallback
    value = np.exp(math.log(2.0) + 0.5 * (p.a + p.b) * np.log(arr) + log_k)
    return _as_output(value)


@functools.lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _contour_abscissa(x: float, left: float, right: float) -> Tuple[float, float]:
    """Pick the contour abscissa and its distance to the nearest pole."""
    if math.isfinite(left) and math.isfinite(right):
        delta = min(0.25, (right - left) / 4.0)
        c = left + delta if x >= 1.0 else right - delta
        return c, delta
    if math.isfinite(left):
        # no right-hand poles: move towards the saddle of z^v
        c = max(left + 0.5, min(1.0 / x, 100.0))
        return c, c - left
    if math.isfinite(right):
        c = min(right - 0.5, -min(math.sqrt(x), 100.0))
        return c, right - c
    return 0.0, 0.5


def mellin_barnes(
    x: float,
    an: Sequence[float] = (),
    ap: Sequence[float] = (),
    bm: Sequence[float] = (),
    bq: Sequence[float] = (),
) -> float:
    """Evaluate ``G^{m,n}_{p,q}[x | an, ap; bm, bq]`` by contour integration.

    The contour is the vertical line ``Re v = c`` separating the poles of
    ``Gamma(b_j - v)`` (right) from those of ``Gamma(1 - a_j + v)`` (left).
    For ``x >= 1`` it sits just right of the left pole set, otherwise just
    left of the right pole set. Coincident poles on the same side do not
    affect the integral, so integer parameters need no perturbation.

    The integral is truncated where the integrand has decayed by
    ``exp(-mb_decay)`` relative to its peak and integrated with graded
    Gauss-Legendre panels.

    :param x: positive argument
    :param an: upper parameters paired with ``Gamma(1 - a + v)``
    :param ap: upper parameters paired with ``1 / Gamma(a - v)``
    :param bm: lower parameters paired with ``Gamma(b - v)``
    :param bq: lower parameters paired with ``1 / Gamma(1 - b + v)``
    :raises ParameterError: for ``x <= 0`` or inseparable pole sets
    :raises ConvergenceError: when the integrand does not decay
    """
    if not x > 0:
        raise ParameterError(f"Meijer G argument must be positive, got {x}")
    a_n = np.asarray(an, dtype=float)
    a_p = np.asarray(ap, dtype=float)
    b_m = np.asarray(bm, dtype=float)
    b_q = np.asarray(bq, dtype=float)

    left = float(np.max(a_n) - 1.0) if a_n.size else -math.inf
    right = float(np.min(b_m)) if b_m.size else math.inf
    if not left < right:
        raise ParameterError(
            f"pole sets overlap (left {left}, right {right}); no separating contour"
        )
    c, gap = _contour_abscissa(x, left, right)
    log_z = math.log(x)

    def log_integrand(t: NDArray[np.float64]) -> NDArray[np.complex128]:
        v = c + 1j * t
        out = v * log_z
        for b in b_m:
            out = out + special.loggamma(b - v)
        for a in a_n:
            out = out + special.loggamma(1.0 - a + v)
        for b in b_q:
            out = out - special.loggamma(1.0 - b + v)
        for a in a_p:
            out = out - special.loggamma(a - v)
        return out

    limit = DEFAULT_SETTINGS["mb_scan_limit"]
    step = DEFAULT_SETTINGS["mb_scan_step"]
    decay = DEFAULT_SETTINGS["mb_decay"]

    scan = np.arange(0.0, limit + step, step)
    log_mag = log_integrand(scan).real
    # a reciprocal Gamma pole on the scan grid is a zero of the integrand
    log_mag = np.where(np.isfinite(log_mag), log_mag, -np.inf)
    peak = float(np.max(log_mag))
    alive = np.nonzero(log_mag >= peak - decay)[0]
    last = int(alive[-1])
    diagnostics = {"x": x, "c": c, "left": left, "right": right, "peak": peak}
    if last >= scan.size - 1:
        raise ConvergenceError(
            "Mellin-Barnes integrand does not decay along the contour", diagnostics
        )
    height = float(scan[last]) + 1.0

    max_width = 0.5
    if abs(log_z) > 16.0:
        max_width = max(0.05, 8.0 / abs(log_z))
    min_width = max(1e-3, min(gap, max_width))
    edges = [0.0]
    while edges[-1] < height:
        t = edges[-1]
        width = min(max_width, max(min_width, 0.5 * t))
        edges.append(min(t + width, height))
    lo = np.asarray(edges[:-1])
    hi = np.asarray(edges[1:])

    nodes, weights = _gauss_legendre(int(DEFAULT_SETTINGS["mb_nodes"]))
    half = 0.5 * (hi - lo)
    t_nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    w_nodes = half[:, None] * weights[None, :]

    values = np.exp(log_integrand(t_nodes.ravel()) - peak).real
    total = float(np.dot(w_nodes.ravel(), values))
    result = math.exp(peak) * total / math.pi

    logger.debug(
        "mellin_barnes x=%.6g c=%.4f height=%.2f panels=%d -> %.12g",
        x, c, height, lo.size, result,
    )
    if not math.isfinite(result):
        diagnostics.update(height=height, panels=int(lo.size))
        raise ConvergenceError("Mellin-Barnes integral is not finite", diagnostics)
    return result


def meijer_g_1441(x: float, p: MeijerParams1441) -> float:
    """``G^{1,4}_{4,1}[x | a1..a4; b]`` by Mellin-Barnes integration."""
    if not x > 0:
        raise ParameterError(f"meijer_g_1441 requires x > 0, got {x}")
    return mellin_barnes(x, an=p.upper, bm=(p.lower,))


def meijer_g_0221(x: float) -> float:
    """``G^{0,2}_{2,1}[x | 1, 1; 0]`` by Mellin-Barnes integration."""
    return mellin_barnes(x, an=(1.0, 1.0), bq=(0.0,))


def phi_node(s: ArrayLike) -> FloatOrArray:
    """Kernel ``phi(s) = -G^{0,2}_{2,1}[1/s | 1, 1; 0]`` of the capacity quadrature.

    The Meijer G function reduces to ``E_1(1/x)``, so ``phi(s) = Ei(-s)``.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr > 0)):
        raise ParameterError("phi_node requires s > 0")
    return expint_ei(-arr)
