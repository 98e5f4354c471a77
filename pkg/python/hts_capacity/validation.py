"""Oracle suite: every closed form checked against quadrature or Monte Carlo.

Each check is independent; a failing or raising check is recorded and the
suite moves on, so the report always lists every check.
"""

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Set, Tuple, TypeVar

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, stats

from .beamforming import (
    BfProblem,
    baseline_bf,
    gradient_avg_virtual_sinr,
    gradient_upper_bound,
    projected_gradient_angle,
    signal_and_interference,
    update_weights,
)
from .capacity import (
    scheme_beamformers,
    user_capacity_inputs,
    user_link_capacity,
    user_link_capacity_mc,
)
from .channels import (
    BeamGeometry,
    MalagaParams,
    RngStream,
    ShadowedRicianParams,
    beam_gain,
    channel_sampler,
    hexagonal_geometry,
    malaga_cdf,
    malaga_pdf,
    malaga_sample,
    sr_cdf,
    sr_pdf,
    sr_sample,
    steering_matrix,
)
from .config import ScenarioConfig, load_presets
from .constants import DEFAULT_SETTINGS, HtsCapacityError
from .feeder import (
    FeederConfig,
    FsoPathLoss,
    Gateway,
    QuadratureSpec,
    feeder_capacity,
    feeder_capacity_mc,
    mgf_gamma1,
    mgf_gamma1_quad,
)

logger = logging.getLogger(__name__)

_T = TypeVar("_T")


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    @property
    def status(self) -> str:
        if self.detail.startswith("error:"):
            return "ERROR"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        text = (
            f"check={self.name} status={self.status} value={self.value:.6g} "
            f"tolerance={self.tolerance:.3g} seconds={self.seconds:.2f}"
        )
        if self.detail:
            text += f" detail={self.detail.replace(' ', '_')}"
        return text


@dataclass
class ValidationReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def lines(self) -> Iterator[str]:
        for check in self.checks:
            yield check.line()
        yield (
            f"summary status={'PASS' if self.passed else 'FAIL'} total={len(self.checks)} "
            f"failed={len(self.failed)}"
        )


@dataclass(frozen=True)
class SuiteSettings:
    """Sample sizes and instance counts of one validation run."""

    samples: int = 1_000_000
    gof_samples: int = 100_000
    mgf_points: int = 20
    c2_scenarios: int = 20
    instances: int = 100
    fd_instances: int = 50

    @classmethod
    def quick(cls) -> "SuiteSettings":
        return cls(
            samples=100_000,
            gof_samples=100_000,
            mgf_points=5,
            c2_scenarios=1,
            instances=10,
            fd_instances=5,
        )


# ============================================================================
# Helpers
# ============================================================================


def _relative(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


def _integrate_density(pdf: Callable[[float], float], scale: float) -> float:
    edges = [0.0] + [scale * f for f in (1e-3, 1e-2, 0.1, 1.0, 4.0, 20.0)]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(pdf, lo, hi, limit=200, epsabs=1e-14)[0]
    return total + integrate.quad(pdf, edges[-1], np.inf, limit=200, epsabs=1e-14)[0]


def _chi_square_pvalue(
    sample: NDArray[np.float64],
    pilot: NDArray[np.float64],
    cdf: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    bins: int,
) -> float:
    """Chi-square p-value with equiprobable-by-pilot bin edges."""
    edges = np.unique(np.quantile(pilot, np.linspace(0.0, 1.0, bins + 1)[1:-1]))
    probs = np.diff(np.concatenate([[0.0], np.asarray(cdf(edges), dtype=float), [1.0]]))
    probs = np.clip(probs, 1e-300, None)
    observed = np.bincount(np.searchsorted(edges, sample, side="right"), minlength=probs.size)
    expected = probs / probs.sum() * sample.size
    return float(stats.chisquare(observed, expected).pvalue)


def _feeder_for_snr(snr_db: float, p: MalagaParams, gateways: int = 2) -> FeederConfig:
    gw = Gateway(FsoPathLoss(), p)
    return FeederConfig(P1=10.0 ** (snr_db / 10.0), eta=1.0, N0=1.0, gateways=(gw,) * gateways)


def _random_problems(
    scenario: ScenarioConfig, rng: RngStream, count: int
) -> Iterator[Tuple[BfProblem, BeamGeometry, np.random.Generator]]:
    """Beamforming problems on random user drops with 3..N users."""
    ul = scenario.userlink
    for i in range(count):
        stream = rng.child(i)
        gen = stream.generator()
        users = int(gen.integers(3, max(3, ul.n_beams) + 1))
        geom = hexagonal_geometry(
            stream.child(0), ul.n_beams, users, ul.phi3dB, ul.gmax, ul.fc, ul.GR,
            ul.distance, ul.user_spread,
        )
        prob = BfProblem(
            A=steering_matrix(geom, phased=ul.phased),
            P=np.resize(np.asarray(ul.powers), users),
            sigma2=ul.sigma2,
            per_interferer_power=ul.per_interferer_power,
        )
        yield prob, geom, gen


# ============================================================================
# Checks
# ============================================================================


class ValidationSuite:
    """Runs the oracle checks of one scenario and collects a report."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        seed: int = 0,
        settings: Optional[SuiteSettings] = None,
    ):
        self.scenario = scenario
        self.settings = settings or SuiteSettings()
        self.rng = RngStream(seed)
        self.presets = load_presets()
        self.report = ValidationReport()
        self._broken: Set[str] = set()

    def _record(self, name: str, fn: Callable[[], Tuple[float, float, str]]) -> None:
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                value, tolerance, detail = fn()
            passed = bool(value <= tolerance)
        except HtsCapacityError as err:
            value, tolerance, detail, passed = math.nan, math.nan, f"error: {err}", False
        except Exception as err:
            logger.exception("check %s crashed", name)
            value, tolerance, detail = math.nan, math.nan, f"error: {type(err).__name__}: {err}"
            passed = False
        seconds = time.perf_counter() - start
        result = CheckResult(name, passed, value, tolerance, detail, seconds)
        logger.info("%s", result.line())
        self.report.checks.append(result)

    def _build(self, check: str, factory: Callable[[], _T]) -> Optional[_T]:
        """Build a shipped preset; a broken one is reported once and skipped."""
        try:
            return factory()
        except (TypeError, HtsCapacityError) as err:
            if check not in self._broken:
                self._broken.add(check)
                logger.error("%s is invalid: %s", check, err)
                self.report.checks.append(CheckResult(check, False, math.nan, math.nan, f"error: {err}"))
            return None

    def _turbulence(self) -> Iterator[Tuple[str, MalagaParams]]:
        """Shipped turbulence presets, then the scenario's own if it differs."""
        known: List[MalagaParams] = []
        for name, params in self.presets["turbulence"].items():
            p = self._build(f"preset.turbulence.{name}", lambda params=params: MalagaParams(**params))
            if p is None:
                continue
            known.append(p)
            yield name, p
        for i, gw in enumerate(self.scenario.feeder.gateways):
            if gw.turbulence not in known:
                known.append(gw.turbulence)
                yield f"scenario{i}", gw.turbulence

    def _shadowing(self) -> Iterator[Tuple[str, ShadowedRicianParams]]:
        shadows: List[ShadowedRicianParams] = []
        for name, params in self.presets["shadowing"].items():
            q = self._build(f"preset.shadowing.{name}", lambda params=params: ShadowedRicianParams(**params))
            if q is None:
                continue
            shadows.append(q)
            yield name, q
        if self.scenario.userlink.shadowing not in shadows:
            yield "scenario", self.scenario.userlink.shadowing

    # ---- channel models -------------------------------------------------

    def pdf_normalization(self) -> None:
        for name, p in self._turbulence():

            def run_m(p: MalagaParams = p) -> Tuple[float, float, str]:
                total = _integrate_density(lambda x: float(malaga_pdf(x, p)), p.mean())
                return abs(total - 1.0), 1e-6, ""

            self._record(f"pdf_norm.malaga.{name}", run_m)
        for name, q in self._shadowing():

            def run_s(q: ShadowedRicianParams = q) -> Tuple[float, float, str]:
                total = _integrate_density(lambda x: float(sr_pdf(x, q)), math.sqrt(q.mean_power()))
                return abs(total - 1.0), 1e-6, ""

            self._record(f"pdf_norm.sr.{name}", run_s)

    def sr_origin_identity(self) -> None:
        def run() -> Tuple[float, float, str]:
            base = ShadowedRicianParams(**self.presets["shadowing"]["average"])
            worst = 0.0
            for m in range(1, 11):
                q = ShadowedRicianParams(m=m, b=base.b, Omega=base.Omega)
                worst = max(worst, abs(float(np.sum(q.power_weights())) - 1.0))
                worst = max(worst, abs(float(sr_cdf(0.0, q))))
            return worst, 1e-12, "m=1..10"

        self._record("sr_cdf_origin", run)

    def sampler_fit(self) -> None:
        bins = int(DEFAULT_SETTINGS["gof_bins"])
        n = self.settings.gof_samples
        threshold = float(DEFAULT_SETTINGS["gof_pvalue"])
        base = self.rng.child(1)

        for i, (name, p) in enumerate(self._turbulence()):

            def run_m(p: MalagaParams = p, i: int = i) -> Tuple[float, float, str]:
                sample = malaga_sample(base.child(i, 0), p, n)
                pilot = malaga_sample(base.child(i, 1), p, n)
                cdf = np.vectorize(lambda x: malaga_cdf(float(x), p))
                pvalue = _chi_square_pvalue(sample, pilot, cdf, bins)
                return 1.0 - pvalue, 1.0 - threshold, f"p={pvalue:.4g}"

            self._record(f"gof.malaga.{name}", run_m)

        for i, (name, q) in enumerate(self._shadowing()):

            def run_s(q: ShadowedRicianParams = q, i: int = i) -> Tuple[float, float, str]:
                sample = sr_sample(base.child(10 + i, 0), q, n)
                pilot = sr_sample(base.child(10 + i, 1), q, n)
                pvalue = _chi_square_pvalue(sample, pilot, lambda x: np.asarray(sr_cdf(x, q)), bins)
                return 1.0 - pvalue, 1.0 - threshold, f"p={pvalue:.4g}"

            self._record(f"gof.sr.{name}", run_s)

    def beam_boresight(self) -> None:
        ul = self.scenario.userlink

        def run() -> Tuple[float, float, str]:
            return _relative(float(beam_gain(0.0, ul.phi3dB, ul.gmax)), ul.gmax), 1e-9, ""

        self._record("beam_gain.boresight", run)

    # ---- feeder link ------------------------------------------------------

    def mgf_closed_form(self) -> None:
        s_values = np.logspace(-2.0, 2.0, self.settings.mgf_points)
        for name, p in self._turbulence():

            def run(p: MalagaParams = p) -> Tuple[float, float, str]:
                worst = max(_relative(mgf_gamma1(s, 1.0, p), mgf_gamma1_quad(s, 1.0, p)) for s in s_values)
                return worst, 1e-6, f"points={s_values.size}"

            self._record(f"mgf.quadrature.{name}", run)

        base = self.rng.child(2)
        for i, (name, p) in enumerate(self._turbulence()):

            def run_mc(p: MalagaParams = p, i: int = i) -> Tuple[float, float, str]:
                irradiance = malaga_sample(base.child(i), p, self.settings.samples)
                estimate = float(np.mean(np.exp(-(irradiance**2))))
                return _relative(mgf_gamma1(1.0, 1.0, p), estimate), 1e-2, "s=1"

            self._record(f"mgf.monte_carlo.{name}", run_mc)

    def feeder_capacity_mc(self) -> None:
        base = self.rng.child(3)
        order = self.scenario.sweep.quadrature_order
        for i, (name, p) in enumerate(self._turbulence()):
            for j, snr_db in enumerate((10.0, 20.0, 30.0)):

                def run(p: MalagaParams = p, snr_db: float = snr_db, i: int = i, j: int = j) -> Tuple[float, float, str]:
                    cfg = _feeder_for_snr(snr_db, p)
                    closed = feeder_capacity(cfg, QuadratureSpec(T=order)).value
                    mc = feeder_capacity_mc(base.child(i, j), cfg, self.settings.samples)
                    return _relative(closed, mc.mean), 1e-2, f"cf={closed:.6g} mc={mc.mean:.6g}"

                self._record(f"c1.monte_carlo.{name}.{int(snr_db)}dB", run)

    def stbc_ordering(self) -> None:
        def run() -> Tuple[float, float, str]:
            worst = -math.inf
            for _, p in self._turbulence():
                for snr_db in (0.0, 10.0, 20.0, 30.0):
                    stbc = feeder_capacity(_feeder_for_snr(snr_db, p)).value
                    single = feeder_capacity(_feeder_for_snr(snr_db, p, 1), single_gateway=True).value
                    worst = max(worst, single - stbc)
            return worst, 0.0, "single minus STBC"

        self._record("c1.stbc_vs_single", run)

    # ---- user link ---------------------------------------------------------

    def user_capacity_mc(self) -> None:
        base = self.rng.child(4)
        algo = self.scenario.algorithm
        for i, (name, q) in enumerate(self._shadowing()):

            def run(q: ShadowedRicianParams = q, i: int = i) -> Tuple[float, float, str]:
                worst = 0.0
                problems = _random_problems(self.scenario, base.child(i), self.settings.c2_scenarios)
                for n, (prob, geom, _) in enumerate(problems):
                    stream = base.child(i, 100 + n)
                    sampler = None
                    if algo.feedback == "measured":
                        sampler = channel_sampler(stream.child(0), geom, q)
                    bf = scheme_beamformers(prob, "proposed", algo, q, sampler, self.scenario.objective)
                    closed = user_link_capacity(
                        user_capacity_inputs(prob, bf, q, algo.Lambda_th)
                    ).total
                    mc = user_link_capacity_mc(
                        stream.child(1), prob, bf, q, algo.Lambda_th, self.settings.samples
                    )
                    if closed == 0.0 and mc.mean == 0.0:
                        continue
                    worst = max(worst, _relative(closed, mc.mean))
                return worst, 2e-2, f"scenarios={self.settings.c2_scenarios}"

            self._record(f"c2.monte_carlo.{name}", run)

    def log_split_identity(self) -> None:
        def run() -> Tuple[float, float, str]:
            q = ShadowedRicianParams(**self.presets["shadowing"]["average"])
            gen = self.rng.child(5).generator()
            rho2 = sr_sample(gen, q, 10_000) ** 2
            phi_x, phi_y = 8.0, 3.0
            X, Y = phi_x * rho2, phi_y * rho2
            gamma = (X - Y) / (1.0 + Y)
            diff = np.abs(np.log1p(gamma) - (np.log1p(X) - np.log1p(Y)))
            return float(diff.max()), 1e-12, ""

        self._record("c2.log_split", run)

    def fixed_point(self) -> None:
        def run() -> Tuple[float, float, str]:
            worst = 0.0
            checked = 0
            for prob, _, _ in _random_problems(self.scenario, self.rng.child(6), self.settings.instances):
                W = baseline_bf(prob, "slnr").W
                for k in range(prob.K):
                    _, info = update_weights(prob, W, k, full_output=True)
                    if info.clamped:
                        continue
                    checked += 1
                    worst = max(worst, info.residual)
            if not checked:
                return math.inf, 1e-8, "no unclamped weight update"
            return worst, 1e-8, f"updates={checked}"

        self._record("beamforming.fixed_point_residual", run)

    def gradient_alignment(self) -> None:
        def run() -> Tuple[float, float, str]:
            worst = 0.0
            checked = 0
            for prob, _, _ in _random_problems(self.scenario, self.rng.child(7), self.settings.instances):
                W = baseline_bf(prob, "slnr").W
                for k in range(prob.K):
                    row, info = update_weights(prob, W, k, full_output=True)
                    if info.clamped:
                        continue
                    mu = np.zeros(prob.K)
                    mu[np.arange(prob.K) != k] = row
                    angle = projected_gradient_angle(
                        gradient_upper_bound(prob, W, k),
                        gradient_avg_virtual_sinr(prob, W, mu, k),
                        W[:, k],
                    )
                    if math.isnan(angle):
                        continue
                    checked += 1
                    worst = max(worst, angle)
            if not checked:
                return math.inf, 1e-6, "no aligned pair"
            return worst, 1e-6, f"pairs={checked}"

        self._record("beamforming.gradient_alignment", run)

    def gradient_finite_differences(self) -> None:
        def run() -> Tuple[float, float, str]:
            worst = 0.0
            for prob, _, gen in _random_problems(self.scenario, self.rng.child(8), self.settings.fd_instances):
                W = baseline_bf(prob, "slnr").W
                mu = np.abs(gen.standard_normal((prob.K, prob.K))) + 0.1
                k = int(gen.integers(prob.K))
                dw = gen.standard_normal(prob.N) + 1j * gen.standard_normal(prob.N)
                worst = max(worst, _fd_error(prob, W, mu, k, dw))
            return worst, 1e-5, f"instances={self.settings.fd_instances}"

        self._record("beamforming.gradient_fd", run)

    def run(self) -> ValidationReport:
        """Run every check once, in a fixed order."""
        for step in (
            self.pdf_normalization,
            self.sr_origin_identity,
            self.sampler_fit,
            self.beam_boresight,
            self.mgf_closed_form,
            self.feeder_capacity_mc,
            self.stbc_ordering,
            self.user_capacity_mc,
            self.log_split_identity,
            self.fixed_point,
            self.gradient_alignment,
            self.gradient_finite_differences,
        ):
            step()
        return self.report


def _fd_error(
    prob: BfProblem, W: NDArray[np.complex128], mu: NDArray[np.float64], k: int, dw: NDArray[np.complex128]
) -> float:
    """Largest relative gap between analytic and central-difference directional derivatives."""
    h = 1e-6
    pi = prob.interference_powers(k)
    others = np.arange(prob.K) != k

    def upper(Wt: NDArray[np.complex128]) -> float:
        D, I = signal_and_interference(prob, Wt)
        return float(np.sum(np.log1p(D / I)))

    def virtual(Wt: NDArray[np.complex128]) -> float:
        proj = np.abs(prob.A.conj().T @ Wt[:, k]) ** 2
        S = prob.sigma2 + float(np.sum((pi * mu[k] * proj)[others]))
        return math.log(prob.P[k] * proj[k] / S)

    def shifted(step: float) -> NDArray[np.complex128]:
        Wt = W.copy()
        Wt[:, k] = W[:, k] + step * dw
        return Wt

    worst = 0.0
    pairs = (
        (upper, gradient_upper_bound(prob, W, k)),
        (virtual, gradient_avg_virtual_sinr(prob, W, mu, k)),
    )
    for fn, grad in pairs:
        numeric = (fn(shifted(h)) - fn(shifted(-h))) / (2.0 * h)
        analytic = prob.P[k] * float(np.real(np.vdot(grad, dw)))
        worst = max(worst, _relative(analytic, numeric))
    return worst


def validate_models(
    scenario: ScenarioConfig, seed: int = 0, quick: bool = False, samples: Optional[int] = None
) -> ValidationReport:
    """Run the full oracle suite for ``scenario``."""
    settings = SuiteSettings.quick() if quick else SuiteSettings()
    if samples is not None:
        settings = SuiteSettings(
            samples=samples,
            gof_samples=settings.gof_samples,
            mgf_points=settings.mgf_points,
            c2_scenarios=settings.c2_scenarios,
            instances=settings.instances,
            fd_instances=settings.fd_instances,
        )
    logger.info("validation: %s samples, seed %d", settings.samples, seed)
    return ValidationSuite(scenario, seed, settings).run()
