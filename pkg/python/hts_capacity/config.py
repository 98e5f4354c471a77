"""Scenario configuration: TOML schema, unit conversion and parameter presets.

Keys carry their unit in the name (``power_dbm``, ``freq_ghz``,
``threshold_db``); everything is converted to linear SI values here and
nowhere else. Every error names the dotted path of the offending key.
"""

import copy
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .beamforming import FEEDBACK_MODES, INITIALIZERS, AlgorithmConfig, BfProblem
from .channels import (
    BeamGeometry,
    MalagaParams,
    RngStream,
    ShadowedRicianParams,
    hexagonal_geometry,
    steering_matrix,
)
from .constants import DEFAULT_SETTINGS, ConfigError, ParameterError
from .feeder import FeederConfig, FsoPathLoss, Gateway

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

SCHEMES = ("proposed", "zf", "slnr")


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def load_presets() -> Dict[str, Dict[str, Any]]:
    """Presets shipped with the package (``presets.toml``)."""
    text = resources.files("hts_capacity").joinpath("presets.toml").read_text("utf-8")
    return tomllib.loads(text)


DEFAULT_SCENARIO: Dict[str, Dict[str, Any]] = {
    "feeder": {
        "power_dbm": 20.0,
        "eta": 0.5,
        "noise_dbm": -10.0,
        "path_gain_db": 0.0,
        "turbulence": "strong",
        "gateways": 2,
    },
    "userlink": {
        "beams": 7,
        "users": 4,
        "phi3db_deg": 0.4,
        "gmax_dbi": 52.0,
        "freq_ghz": 20.0,
        "gain_dbi": 41.7,
        "distance_km": 35786.0,
        "noise_dbm": -88.4,
        "power_dbm": 40.0,
        "shadowing": "average",
        "threshold_db": DEFAULT_SETTINGS["threshold_db"],
        "user_spread": 1.0,
        "phased": False,
        "per_interferer_power": False,
    },
    "algorithm": {
        "epsilon": DEFAULT_SETTINGS["epsilon"],
        "max_iters": DEFAULT_SETTINGS["max_iters"],
        "initializer": DEFAULT_SETTINGS["initializer"],
        "feedback": "expected",
        "objective": "capacity",
    },
    "sweep": {
        "variable": "userlink.power_dbm",
        "grid": [30.0, 35.0, 40.0, 45.0, 50.0],
        "samples": DEFAULT_SETTINGS["mc_samples"],
        "seed": 2024,
        "quadrature_order": DEFAULT_SETTINGS["quadrature_order"],
        "schemes": list(SCHEMES),
        "jobs": 1,
    },
}
"""Scenario used when no file is given; files override it key by key."""


class _Section:
    """Typed accessor over one TOML table that remembers the consumed keys."""

    def __init__(self, name: str, data: Mapping[str, Any]):
        self.name = name
        self.data = dict(data)
        self.seen: set = set()

    def path(self, key: str) -> str:
        return f"{self.name}.{key}"

    def raw(self, key: str) -> Any:
        self.seen.add(key)
        if key not in self.data:
            raise ConfigError("missing required key", self.path(key))
        return self.data[key]

    def number(self, key: str, minimum: Optional[float] = None, positive: bool = False) -> float:
        value = self.raw(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", self.path(key))
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError("must be finite", self.path(key))
        if positive and value <= 0:
            raise ConfigError(f"must be positive, got {value}", self.path(key))
        if minimum is not None and value < minimum:
            raise ConfigError(f"must be >= {minimum}, got {value}", self.path(key))
        return value

    def integer(self, key: str, minimum: int = 0) -> int:
        value = self.raw(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", self.path(key))
        if value < minimum:
            raise ConfigError(f"must be >= {minimum}, got {value}", self.path(key))
        return value

    def flag(self, key: str) -> bool:
        value = self.raw(key)
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", self.path(key))
        return value

    def choice(self, key: str, options: Sequence[str]) -> str:
        value = self.raw(key)
        if value not in options:
            raise ConfigError(f"expected one of {list(options)}, got {value!r}", self.path(key))
        return str(value)

    def numbers(self, key: str, count: int, positive: bool = False) -> List[float]:
        """A scalar broadcast to ``count`` entries, or a list of exactly ``count``."""
        value = self.raw(key)
        items = value if isinstance(value, list) else [value] * count
        if len(items) != count:
            raise ConfigError(f"expected {count} values, got {len(items)}", self.path(key))
        out = []
        for item in items:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"expected numbers, got {item!r}", self.path(key))
            if positive and item <= 0:
                raise ConfigError(f"values must be positive, got {item}", self.path(key))
            out.append(float(item))
        return out

    def finish(self) -> None:
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}", self.path(unknown[0]))


def _preset(
    kind: str, value: Any, path: str, presets: Mapping[str, Mapping[str, Any]]
) -> Union[MalagaParams, ShadowedRicianParams]:
    table = presets.get(kind, {})
    if isinstance(value, str):
        if value not in table:
            raise ConfigError(f"unknown {kind} preset {value!r}; known: {sorted(table)}", path)
        params = dict(table[value])
    elif isinstance(value, dict):
        params = dict(value)
    else:
        raise ConfigError(f"expected a preset name or table, got {value!r}", path)
    cls = MalagaParams if kind == "turbulence" else ShadowedRicianParams
    try:
        return cls(**params)
    except TypeError as err:
        raise ConfigError(f"bad {kind} parameters: {err}", path)
    except ParameterError as err:
        raise ConfigError(f"parameter error: {err}", path)


@dataclass(frozen=True)
class UserLinkSection:
    n_beams: int
    n_users: int
    phi3dB: float
    gmax: float
    fc: float
    GR: float
    distance: float
    sigma2: float
    powers: Tuple[float, ...]
    shadowing: ShadowedRicianParams
    Lambda_th: float
    user_spread: float
    phased: bool
    per_interferer_power: bool

    def geometry(self, rng: RngStream) -> BeamGeometry:
        return hexagonal_geometry(
            rng,
            self.n_beams,
            self.n_users,
            self.phi3dB,
            self.gmax,
            self.fc,
            self.GR,
            self.distance,
            self.user_spread,
        )

    def problem(self, geom: BeamGeometry) -> BfProblem:
        return BfProblem(
            A=steering_matrix(geom, phased=self.phased),
            P=list(self.powers),
            sigma2=self.sigma2,
            per_interferer_power=self.per_interferer_power,
        )


@dataclass(frozen=True)
class SweepSection:
    variable: str
    grid: Tuple[float, ...]
    samples: int
    seed: int
    quadrature_order: int
    schemes: Tuple[str, ...]
    jobs: int


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: feeder, user link, algorithm and sweep settings."""

    feeder: FeederConfig
    turbulence: Tuple[str, ...]
    userlink: UserLinkSection
    algorithm: AlgorithmConfig
    objective: str
    sweep: SweepSection
    raw: Dict[str, Any] = field(repr=False, compare=False)

    @classmethod
    def from_dict(
        cls,
        data: Mapping[str, Any],
        presets: Optional[Mapping[str, Mapping[str, Any]]] = None,
    ) -> "ScenarioConfig":
        presets = load_presets() if presets is None else presets
        merged = copy.deepcopy(DEFAULT_SCENARIO)
        for name, table in data.items():
            if name not in merged:
                raise ConfigError("unknown section", name)
            if not isinstance(table, dict):
                raise ConfigError("expected a table", name)
            merged[name].update(copy.deepcopy(table))

        feeder, turbulence = _parse_feeder(_Section("feeder", merged["feeder"]), presets)
        userlink = _parse_userlink(_Section("userlink", merged["userlink"]), presets)
        algorithm, objective = _parse_algorithm(
            _Section("algorithm", merged["algorithm"]), userlink.Lambda_th
        )
        sweep = _parse_sweep(_Section("sweep", merged["sweep"]), merged)
        return cls(feeder, turbulence, userlink, algorithm, objective, sweep, merged)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ScenarioConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"invalid TOML in {path}: {err}")
        logger.info("loaded scenario %s", path)
        return cls.from_dict(data)

    def with_value(self, dotted: str, value: Any) -> "ScenarioConfig":
        """Copy of this scenario with ``section.key`` set to ``value``."""
        section, _, key = dotted.partition(".")
        if section not in self.raw or not key:
            raise ConfigError("sweep variable must be 'section.key'", dotted)
        data = copy.deepcopy(self.raw)
        data[section][key] = value
        return ScenarioConfig.from_dict(data)

    def with_presets(self, names: Sequence[str]) -> "ScenarioConfig":
        """Apply ``--preset`` names: turbulence names to the feeder, shadowing names to the user link."""
        presets = load_presets()
        data = copy.deepcopy(self.raw)
        for name in names:
            if name in presets.get("turbulence", {}):
                data["feeder"]["turbulence"] = name
            elif name in presets.get("shadowing", {}):
                data["userlink"]["shadowing"] = name
            else:
                raise ConfigError(f"unknown preset {name!r}", "preset")
        return ScenarioConfig.from_dict(data)


def _parse_feeder(
    sec: _Section, presets: Mapping[str, Mapping[str, Any]]
) -> Tuple[FeederConfig, Tuple[str, ...]]:
    count = sec.integer("gateways", minimum=1)
    if count > 2:
        raise ConfigError("at most two gateways", sec.path("gateways"))
    gains = sec.numbers("path_gain_db", count)
    raw_turb = sec.raw("turbulence")
    turb_items = raw_turb if isinstance(raw_turb, list) else [raw_turb] * count
    if len(turb_items) != count:
        raise ConfigError(f"expected {count} turbulence entries", sec.path("turbulence"))
    gateways = []
    names = []
    for gain_db, item in zip(gains, turb_items):
        params = _preset("turbulence", item, sec.path("turbulence"), presets)
        gain = db_to_linear(gain_db)
        try:
            # the lumped path gain is carried by Gt; loss factors stay at 1
            path = FsoPathLoss(Gt=gain)
        except ParameterError as err:
            raise ConfigError(str(err), sec.path("path_gain_db"))
        gateways.append(Gateway(path, params))  # type: ignore[arg-type]
        names.append(item if isinstance(item, str) else "custom")
    try:
        cfg = FeederConfig(
            P1=dbm_to_watt(sec.number("power_dbm")),
            eta=sec.number("eta", positive=True),
            N0=dbm_to_watt(sec.number("noise_dbm")),
            gateways=tuple(gateways),
        )
    except ParameterError as err:
        raise ConfigError(str(err), "feeder")
    sec.finish()
    return cfg, tuple(names)


def _threshold(sec: _Section) -> float:
    # "off" disables one-bit feedback selection (Lambda_th = 0)
    if sec.raw("threshold_db") == "off":
        return 0.0
    return db_to_linear(sec.number("threshold_db"))


def _parse_userlink(
    sec: _Section, presets: Mapping[str, Mapping[str, Any]]
) -> UserLinkSection:
    users = sec.integer("users", minimum=1)
    shadowing = _preset("shadowing", sec.raw("shadowing"), sec.path("shadowing"), presets)
    section = UserLinkSection(
        n_beams=sec.integer("beams", minimum=1),
        n_users=users,
        phi3dB=math.radians(sec.number("phi3db_deg", positive=True)),
        gmax=db_to_linear(sec.number("gmax_dbi")),
        fc=sec.number("freq_ghz", positive=True) * 1e9,
        GR=db_to_linear(sec.number("gain_dbi")),
        distance=sec.number("distance_km", positive=True) * 1e3,
        sigma2=dbm_to_watt(sec.number("noise_dbm")),
        powers=tuple(dbm_to_watt(v) for v in sec.numbers("power_dbm", users)),
        shadowing=shadowing,  # type: ignore[arg-type]
        Lambda_th=_threshold(sec),
        user_spread=sec.number("user_spread", minimum=0.0),
        phased=sec.flag("phased"),
        per_interferer_power=sec.flag("per_interferer_power"),
    )
    sec.finish()
    return section


def _parse_algorithm(sec: _Section, Lambda_th: float) -> Tuple[AlgorithmConfig, str]:
    try:
        cfg = AlgorithmConfig(
            epsilon=sec.number("epsilon", positive=True),
            Lambda_th=Lambda_th,
            max_iters=sec.integer("max_iters", minimum=1),
            initializer=sec.choice("initializer", INITIALIZERS),
            feedback=sec.choice("feedback", FEEDBACK_MODES),
        )
    except ParameterError as err:
        raise ConfigError(str(err), "algorithm")
    objective = sec.choice("objective", ("capacity", "surrogate"))
    sec.finish()
    return cfg, objective


def _parse_sweep(sec: _Section, merged: Mapping[str, Any]) -> SweepSection:
    variable = sec.raw("variable")
    section, _, key = str(variable).partition(".")
    if section not in ("feeder", "userlink", "algorithm") or key not in merged.get(section, {}):
        raise ConfigError(f"unknown sweep variable {variable!r}", sec.path("variable"))
    grid = sec.raw("grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("grid must be a non-empty list", sec.path("grid"))
    schemes = sec.raw("schemes")
    if not isinstance(schemes, list) or not schemes or any(s not in SCHEMES for s in schemes):
        raise ConfigError(f"schemes must be a non-empty subset of {list(SCHEMES)}", sec.path("schemes"))
    out = SweepSection(
        variable=str(variable),
        grid=tuple(grid),
        samples=sec.integer("samples", minimum=10_000),
        seed=sec.integer("seed", minimum=0),
        quadrature_order=sec.integer("quadrature_order", minimum=1),
        schemes=tuple(schemes),
        jobs=sec.integer("jobs", minimum=1),
    )
    sec.finish()
    return out
