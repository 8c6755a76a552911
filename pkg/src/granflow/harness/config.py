"""Scenario files: INI text with one scenario per file.

Schema::

    [scenario]
    id = cubic_converge          ; used for output file names
    experiment = converge        ; converge | contract_pair | wj_probe | counterexample | stationary_only
    seeds = 0 1 2                ; optional, default 0

    [potentials]
    V = zero                     ; catalog name
    V_params =                   ; space separated floats
    W = cubic_abs
    W_params =

    [grid]
    lo = -12
    hi = 12
    m = 800

    [solver]
    dt = 1e-3
    t_end = 5
    record_every = 10
    scheme = semi_implicit

    [initial]
    data = gaussian(0, 0.3); uniform(-1, 1); bimodal(-1.5, 1.5, 0.5)

    [experiment]                 ; free-form experiment options, see experiments.py
    floor = 1e-6

Initial data: ``gaussian(mean, std)``, ``uniform(a, b)`` and
``bimodal(m1, m2, std[, weight1])`` (two Gaussians).
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..dynamics import SolverConfig
from ..measures import GridMeasure
from ..potentials import PotentialSpec, builtin

EXPERIMENTS = ("converge", "contract_pair", "wj_probe", "counterexample", "stationary_only")

_DATUM = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*$")
_ARITY = {"gaussian": (2, 2), "uniform": (2, 2), "bimodal": (3, 4)}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialDatum:
    kind: str
    args: tuple[float, ...]

    @classmethod
    def parse(cls, text: str) -> "InitialDatum":
        m = _DATUM.match(text)
        if not m:
            raise ConfigError(f"cannot parse initial datum {text!r}")
        kind = m.group(1)
        if kind not in _ARITY:
            raise ConfigError(f"unknown initial datum kind {kind!r}; expected one of {', '.join(_ARITY)}")
        try:
            args = tuple(float(a) for a in m.group(2).split(",") if a.strip())
        except ValueError as e:
            raise ConfigError(f"bad number in {text!r}") from e
        lo, hi = _ARITY[kind]
        if not lo <= len(args) <= hi:
            raise ConfigError(f"{kind} takes {lo}..{hi} arguments, got {len(args)}")
        return cls(kind, args)

    @property
    def label(self) -> str:
        return f"{self.kind}({', '.join(f'{a:g}' for a in self.args)})"

    def build(self, lo: float, hi: float, m: int) -> GridMeasure:
        a = self.args
        if self.kind == "gaussian":
            return GridMeasure.gaussian(a[0], a[1], lo, hi, m)
        if self.kind == "uniform":
            return GridMeasure.uniform(a[0], a[1], lo, hi, m)
        w = a[3] if len(a) == 4 else 0.5
        if not 0 < w < 1:
            raise ConfigError("bimodal weight must lie in (0, 1)")
        return GridMeasure.mixture([
            (w, GridMeasure.gaussian(a[0], a[2], lo, hi, m)),
            (1 - w, GridMeasure.gaussian(a[1], a[2], lo, hi, m)),
        ])


@dataclass
class Scenario:
    id: str
    experiment: str
    V_name: str
    V_params: tuple[float, ...]
    W_name: str
    W_params: tuple[float, ...]
    grid: tuple[float, float, int]
    solver: SolverConfig
    initial_data: list[InitialDatum]
    seeds: list[int] = field(default_factory=lambda: [0])
    options: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {', '.join(EXPERIMENTS)}")
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", self.id):
            raise ConfigError(f"scenario id {self.id!r} must be a plain file-name token")
        # resolve now so that unknown catalog entries fail at load time
        self.V
        self.W
        need = {"contract_pair": 2, "counterexample": 1, "converge": 1}
        n = need.get(self.experiment, 0)
        if self.experiment == "contract_pair" and len(self.initial_data) != 2:
            raise ConfigError("contract_pair needs exactly two initial data")
        if len(self.initial_data) < n:
            raise ConfigError(f"{self.experiment} needs at least {n} initial datum")
        if self.experiment == "counterexample" and "m_values" not in self.options:
            raise ConfigError("counterexample needs m_values in [experiment]")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be unsigned")

    @property
    def V(self) -> PotentialSpec:
        return builtin(self.V_name, self.V_params)

    @property
    def W(self) -> PotentialSpec:
        return builtin(self.W_name, self.W_params)

    def measures(self) -> list[GridMeasure]:
        return [d.build(*self.grid) for d in self.initial_data]

    def opt_float(self, key: str, default: float | None = None) -> float | None:
        v = self.options.get(key)
        return default if v is None or v == "" else float(v)

    def opt_int(self, key: str, default: int | None = None) -> int | None:
        v = self.options.get(key)
        return default if v is None or v == "" else int(v)

    def opt_floats(self, key: str, default: list[float] | None = None) -> list[float] | None:
        v = self.options.get(key)
        return default if v is None or v.strip() == "" else _floats(v)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError as e:
        raise ConfigError(f"expected numbers, got {text!r}") from e


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from e

    def get(section, key, fallback=None):
        if cp.has_option(section, key):
            return cp.get(section, key)
        if fallback is None:
            raise ConfigError(f"missing [{section}] {key}")
        return fallback

    try:
        grid = (float(get("grid", "lo")), float(get("grid", "hi")), int(get("grid", "m")))
        solver = SolverConfig(
            dt=float(get("solver", "dt")),
            t_end=float(get("solver", "t_end")),
            record_every=int(get("solver", "record_every", "1")),
            scheme=get("solver", "scheme", "semi_implicit"),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
    data_text = get("initial", "data", "")
    data = [InitialDatum.parse(d) for d in data_text.split(";") if d.strip()]
    seeds = [int(s) for s in get("scenario", "seeds", "0").replace(",", " ").split()]
    options = dict(cp.items("experiment")) if cp.has_section("experiment") else {}
    try:
        return Scenario(
            id=get("scenario", "id"),
            experiment=get("scenario", "experiment"),
            V_name=get("potentials", "V"),
            V_params=_floats(get("potentials", "V_params", "")),
            W_name=get("potentials", "W"),
            W_params=_floats(get("potentials", "W_params", "")),
            grid=grid,
            solver=solver,
            initial_data=data,
            seeds=seeds,
            options=options,
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())
