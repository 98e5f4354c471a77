"""Command-line entry point ``hts-capacity``.

Subcommands ``feeder``, ``userlink``, ``e2e``, ``sweep`` and ``validate``.
Results are printed as ``key=value`` records; sweeps write CSV.

Exit codes: 0 success, 1 validation failure, 2 configuration, parameter or
I/O error.
"""

import argparse
import csv
import io
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, TextIO

from .capacity import (
    end_to_end_capacity,
    scheme_beamformers,
    user_capacity_inputs,
    user_link_capacity,
    user_link_capacity_mc,
)
from .channels import RngStream, channel_sampler
from .config import SCHEMES, ScenarioConfig
from .constants import BeamformingError, HtsCapacityError
from .feeder import QuadratureSpec, feeder_capacity, feeder_capacity_mc
from .validation import validate_models

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ERROR = 2


# ============================================================================
# Sweep
# ============================================================================


@dataclass
class SchemeResult:
    c2_cf: float = math.nan
    c2_mc: float = math.nan
    c2_mc_se: float = math.nan
    c: float = math.nan
    users: float = math.nan


@dataclass
class SweepRow:
    """One grid point of a sweep; see README.md for the CSV columns."""

    value: Any
    c1_cf: float
    c1_single_cf: float
    c1_mc: float
    c1_mc_se: float
    schemes: Dict[str, SchemeResult] = field(default_factory=dict)

    @staticmethod
    def header(schemes: Sequence[str]) -> List[str]:
        cols = ["value", "c1_cf", "c1_single_cf", "c1_mc", "c1_mc_se"]
        for s in schemes:
            cols += [f"c2_{s}_cf", f"c2_{s}_mc", f"c2_{s}_mc_se", f"c_{s}", f"users_{s}"]
        return cols

    def cells(self, schemes: Sequence[str]) -> List[str]:
        values: List[Any] = [self.c1_cf, self.c1_single_cf, self.c1_mc, self.c1_mc_se]
        for s in schemes:
            r = self.schemes[s]
            values += [r.c2_cf, r.c2_mc, r.c2_mc_se, r.c, r.users]
        return [_fmt(self.value)] + [_fmt(v) for v in values]


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".10g")
    return str(value)


def evaluate_point(
    scenario: ScenarioConfig, base: RngStream, index: int, value: Any = ""
) -> SweepRow:
    """All columns of one grid point.

    Stream layout under ``base``: ``child(0)`` places the users (shared by
    every point), ``child(index + 1)`` feeds the point, and below it
    ``child(1)`` the feeder draws, ``child(2)`` the user-link draws shared by
    all schemes and ``child(3)`` the feedback measurements.
    """
    start = time.perf_counter()
    sw = scenario.sweep
    point = base.child(index + 1)
    feeder = scenario.feeder
    quad = QuadratureSpec(T=sw.quadrature_order)

    single = feeder_capacity(feeder, quad, single_gateway=True).value
    c1 = single if len(feeder.gateways) == 1 else feeder_capacity(feeder, quad).value
    c1_mc = feeder_capacity_mc(point.child(1), feeder, sw.samples)

    ul = scenario.userlink
    geom = ul.geometry(base.child(0))
    prob = ul.problem(geom)
    sampler = channel_sampler(point.child(3), geom, ul.shadowing)
    row = SweepRow(value, c1, single, c1_mc.mean, c1_mc.stderr)
    for scheme in sw.schemes:
        try:
            bf = scheme_beamformers(
                prob, scheme, scenario.algorithm, ul.shadowing, sampler, scenario.objective
            )
        except BeamformingError as err:
            logger.warning("scheme %s failed at point %d: %s", scheme, index, err)
            row.schemes[scheme] = SchemeResult()
            continue
        c2 = user_link_capacity(
            user_capacity_inputs(prob, bf, ul.shadowing, scenario.algorithm.Lambda_th)
        ).total
        mc = user_link_capacity_mc(
            point.child(2), prob, bf, ul.shadowing, scenario.algorithm.Lambda_th, sw.samples
        )
        row.schemes[scheme] = SchemeResult(
            c2_cf=c2,
            c2_mc=mc.mean,
            c2_mc_se=mc.stderr,
            c=end_to_end_capacity(c1, c2).C,
            users=len(bf.U),
        )
    logger.debug("point %d done in %.2fs", index, time.perf_counter() - start)
    return row


def run_sweep(scenario: ScenarioConfig, output: TextIO, jobs: Optional[int] = None) -> List[SweepRow]:
    """Evaluate every grid point and write the CSV to ``output``.

    Points run on a thread pool; rows are written in grid order.
    """
    sw = scenario.sweep
    base = RngStream(sw.seed)
    points = [scenario.with_value(sw.variable, value) for value in sw.grid]
    workers = jobs or sw.jobs
    logger.info("sweep %s over %d points with %d worker(s)", sw.variable, len(points), workers)

    def task(index: int) -> SweepRow:
        row = evaluate_point(points[index], base, index, sw.grid[index])
        logger.info("point %d/%d %s=%s", index + 1, len(points), sw.variable, sw.grid[index])
        return row

    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(task, range(len(points))))

    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(SweepRow.header(sw.schemes))
    for row in rows:
        writer.writerow(row.cells(sw.schemes))
    return rows


def ordering_violations(rows: Sequence[SweepRow], better: str, worse: str) -> List[int]:
    """Grid indices where closed-form C2 of ``better`` falls below ``worse``."""
    bad = []
    for i, row in enumerate(rows):
        a, b = row.schemes.get(better), row.schemes.get(worse)
        if a is None or b is None or math.isnan(a.c2_cf) or math.isnan(b.c2_cf):
            continue
        if a.c2_cf < b.c2_cf * (1.0 - 1e-9):
            bad.append(i)
    return bad


# ============================================================================
# Subcommands
# ============================================================================


def _emit(out: TextIO, **fields: Any) -> None:
    out.write(" ".join(f"{k}={_fmt(v)}" for k, v in fields.items()) + "\n")


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    scenario = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig.from_dict({})
    if args.preset:
        scenario = scenario.with_presets(args.preset)
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.samples is not None:
        overrides["samples"] = args.samples
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if args.scheme:
        overrides["schemes"] = [args.scheme]
    for key, value in overrides.items():
        scenario = scenario.with_value(f"sweep.{key}", value)
    return scenario


def cmd_feeder(args: argparse.Namespace, out: TextIO) -> int:
    scenario = _scenario(args)
    sw = scenario.sweep
    quad = QuadratureSpec(T=sw.quadrature_order)
    stream = RngStream(sw.seed).child(1)
    if len(scenario.feeder.gateways) == 2:
        stbc = feeder_capacity(scenario.feeder, quad)
        mc = feeder_capacity_mc(stream, scenario.feeder, sw.samples)
        _emit(out, link="feeder", mode="stbc", c1_cf=stbc.value, converged=stbc.converged,
              c1_mc=mc.mean, c1_mc_se=mc.stderr)
    single = feeder_capacity(scenario.feeder, quad, single_gateway=True)
    mc = feeder_capacity_mc(stream.child(0), scenario.feeder, sw.samples, single_gateway=True)
    _emit(out, link="feeder", mode="single", c1_cf=single.value, converged=single.converged,
          c1_mc=mc.mean, c1_mc_se=mc.stderr)
    return EXIT_OK


def cmd_userlink(args: argparse.Namespace, out: TextIO, with_feeder: bool = False) -> int:
    scenario = _scenario(args)
    row = evaluate_point(scenario, RngStream(scenario.sweep.seed), 0)
    for scheme in scenario.sweep.schemes:
        r = row.schemes[scheme]
        fields: Dict[str, Any] = {
            "link": "e2e" if with_feeder else "userlink",
            "scheme": scheme,
            "c2_cf": r.c2_cf,
            "c2_mc": r.c2_mc,
            "c2_mc_se": r.c2_mc_se,
            "users": r.users,
        }
        if with_feeder:
            fields.update(c1_cf=row.c1_cf, c=r.c)
        _emit(out, **fields)
    return EXIT_OK


def cmd_e2e(args: argparse.Namespace, out: TextIO) -> int:
    return cmd_userlink(args, out, with_feeder=True)


def cmd_sweep(args: argparse.Namespace, out: TextIO) -> int:
    scenario = _scenario(args)
    if args.output and args.output != "-":
        buffer = io.StringIO()
        rows = run_sweep(scenario, buffer, args.jobs)
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            fh.write(buffer.getvalue())
    else:
        rows = run_sweep(scenario, out, args.jobs)
    bad = ordering_violations(rows, "proposed", "slnr")
    if bad:
        logger.warning("proposed C2 below SLNR at grid indices %s", bad)
    _emit(sys.stderr if out is sys.stdout else out, sweep="done", points=len(rows),
          proposed_ge_slnr=not bad)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, out: TextIO) -> int:
    scenario = _scenario(args)
    report = validate_models(scenario, seed=scenario.sweep.seed, quick=args.quick, samples=args.samples)
    for line in report.lines():
        out.write(line + "\n")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hts-capacity",
        description="Ergodic capacity of an FSO-feeder, RF-multibeam satellite forward link.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file (built-in defaults if omitted)")
    common.add_argument("--seed", type=int, help="override sweep.seed")
    common.add_argument("--samples", type=int, help="Monte Carlo sample count")
    common.add_argument("--scheme", choices=SCHEMES, help="restrict to one beamforming scheme")
    common.add_argument(
        "--preset", action="append", default=[], help="turbulence or shadowing preset name (repeatable)"
    )
    common.add_argument("--jobs", type=int, help="worker threads for grid points")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("feeder", parents=[common], help="feeder-link capacity C1").set_defaults(func=cmd_feeder)
    sub.add_parser("userlink", parents=[common], help="user-link capacity C2").set_defaults(func=cmd_userlink)
    sub.add_parser("e2e", parents=[common], help="end-to-end capacity min(C1, C2)").set_defaults(func=cmd_e2e)
    sweep = sub.add_parser("sweep", parents=[common], help="run the configured sweep to CSV")
    sweep.add_argument("--output", "-o", default="-", help="CSV path ('-' for stdout)")
    sweep.set_defaults(func=cmd_sweep)
    validate = sub.add_parser("validate", parents=[common], help="run the oracle suite")
    validate.add_argument("--quick", action="store_true", help="reduced sample and instance counts")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args, out or sys.stdout))
    except HtsCapacityError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_ERROR
    except OSError as err:
        sys.stderr.write(f"error: {err}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
