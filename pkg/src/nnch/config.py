"""Run configuration: INI-style ``[section]`` files read with :mod:`configparser`.

Every key has a documented default, unknown sections or keys are rejected and
all violations are collected before reporting.  Length-valued mollification
radii accept a grid-step suffix, e.g. ``mollify_eps = 2h``.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .constitutive import DIM, Q_MIN, ConstitutiveLaw, FreeEnergy
from .grid import BC_KINDS, Grid


class ConfigError(ValueError):
    """Configuration could not be parsed or failed validation."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class DomainSection:
    nx: int = 64
    ny: int = 64
    lx: float = 32.0
    ly: float = 32.0
    bc: str = "box_noslip_neumann"


@dataclass
class FluidSection:
    q: float = 2.0
    nu0: float = 1.0
    nu1: float = 0.0
    delta: float = 1e-8
    kind: str = "power_law"


@dataclass
class PotentialSection:
    kind: str = "double_well"
    theta: float = 1.0
    theta_c: float = 2.0
    clip_margin: float = 1e-6
    interface_width: float = 1.0


@dataclass
class CHSection:
    m: float = 1.0
    splitting_const: float | None = None
    tol: float = 1e-10
    max_picard: int = 200


@dataclass
class MomentumSection:
    dt: float = 0.05
    picard_tol: float = 1e-10
    theta_relax: float | None = None
    max_picard: int = 100


@dataclass
class ApproxSection:
    mollify_eps: str = "2h"
    cutoff_eps: str = "tie"
    coupling_mode: str = "lagged"
    fp_tol: float = 1e-10
    fp_max: int = 25


@dataclass
class TimeSection:
    t_end: float = 1.0
    snapshot_every: int = 0


@dataclass
class OutputSection:
    dir: str = "out"
    formats: str = "csv,bin"


@dataclass
class SeedSection:
    rng_seed: int = 0


@dataclass
class InitialSection:
    kind: str = "spinodal"
    c_mean: float = 0.0
    amplitude: float = 0.01
    noise_length: float = 1.0
    radius: float = 0.25
    velocity: str = "none"
    velocity_amplitude: float = 0.0


SECTIONS = {
    "domain": DomainSection,
    "fluid": FluidSection,
    "potential": PotentialSection,
    "ch": CHSection,
    "momentum": MomentumSection,
    "approx": ApproxSection,
    "time": TimeSection,
    "output": OutputSection,
    "seed": SeedSection,
    "initial": InitialSection,
}

COUPLING_MODES = ("lagged", "fixed_point")
INITIAL_KINDS = ("spinodal", "droplet", "uniform", "smooth")
VELOCITY_KINDS = ("none", "vortex")
OUTPUT_FORMATS = ("csv", "bin", "png")


@dataclass
class RunConfig:
    domain: DomainSection = field(default_factory=DomainSection)
    fluid: FluidSection = field(default_factory=FluidSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    ch: CHSection = field(default_factory=CHSection)
    momentum: MomentumSection = field(default_factory=MomentumSection)
    approx: ApproxSection = field(default_factory=ApproxSection)
    time: TimeSection = field(default_factory=TimeSection)
    output: OutputSection = field(default_factory=OutputSection)
    seed: SeedSection = field(default_factory=SeedSection)
    initial: InitialSection = field(default_factory=InitialSection)

    # builders ---------------------------------------------------------------

    def grid(self) -> Grid:
        d = self.domain
        return Grid(d.nx, d.ny, d.lx, d.ly, d.bc)

    def law(self) -> ConstitutiveLaw:
        f = self.fluid
        return ConstitutiveLaw(q=f.q, nu0=f.nu0, nu1=f.nu1, delta=f.delta, kind=f.kind)

    def energy(self) -> FreeEnergy:
        p = self.potential
        return FreeEnergy(kind=p.kind, theta=p.theta, theta_c=p.theta_c, clip_margin=p.clip_margin)

    def mollify_radius(self) -> float:
        return resolve_length(self.approx.mollify_eps, self.grid())

    def cutoff_parameter(self) -> float:
        if self.approx.cutoff_eps.strip().lower() == "tie":
            return self.mollify_radius()
        return resolve_length(self.approx.cutoff_eps, self.grid())

    @property
    def formats(self) -> list[str]:
        return [s.strip() for s in self.output.formats.split(",") if s.strip()]

    def replace(self, **sections) -> "RunConfig":
        """Copy with fields overridden, e.g. ``replace(time={"t_end": 0})``."""
        new = dataclasses.replace(self)
        for name, updates in sections.items():
            setattr(new, name, dataclasses.replace(getattr(self, name), **updates))
        return new

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            lines.append(f"[{name}]")
            for k, v in dataclasses.asdict(getattr(self, name)).items():
                lines.append(f"{k} = {'auto' if v is None else v}")
            lines.append("")
        return "\n".join(lines)

    def validate(self) -> list[str]:
        return validate(self)


def resolve_length(text, grid: Grid) -> float:
    s = str(text).strip().lower()
    if s.endswith("h"):
        factor = float(s[:-1]) if s[:-1] else 1.0
        return factor * min(grid.hx, grid.hy)
    return float(s)


def _convert(raw: str, target_type: str, name: str):
    raw = raw.strip()
    optional = "None" in target_type
    if optional and raw.lower() in ("", "auto", "none"):
        return None
    if target_type.startswith("int"):
        return int(raw)
    if target_type.startswith("float"):
        return float(raw)
    return raw


def validate(cfg: RunConfig) -> list[str]:
    out = []
    d = cfg.domain
    if d.nx < 8 or d.ny < 8:
        out.append("[domain] nx and ny must be >= 8")
    if not (d.lx > 0 and d.ly > 0):
        out.append("[domain] lx and ly must be positive")
    if d.bc not in BC_KINDS:
        out.append(f"[domain] bc must be one of {', '.join(BC_KINDS)}")

    f = cfg.fluid
    if not f.q > Q_MIN:
        out.append(f"[fluid] q must exceed 2d/(d+2) = {Q_MIN:g} for d={DIM}")
    if f.kind not in ("power_law", "carreau"):
        out.append("[fluid] kind must be power_law or carreau")
    if not f.nu0 > 0:
        out.append("[fluid] nu0 must be positive")
    elif min(f.nu0 - f.nu1, f.nu0 + f.nu1) <= 0:
        out.append("[fluid] nu0 + nu1*c must be positive for all c in [-1, 1]")
    if not f.delta >= 0:
        out.append("[fluid] delta must be non-negative")
    if f.q < 2 and f.kind == "power_law" and f.delta == 0:
        out.append("[fluid] delta must be positive for shear-thinning power_law runs")

    p = cfg.potential
    if p.kind not in ("double_well", "logarithmic"):
        out.append("[potential] kind must be double_well or logarithmic")
    if p.kind == "logarithmic":
        if not p.theta > 0:
            out.append("[potential] theta must be positive")
        if not 0 < p.clip_margin < 0.5:
            out.append("[potential] clip_margin must lie in (0, 0.5)")
    if not p.interface_width > 0:
        out.append("[potential] interface_width must be positive")

    ch = cfg.ch
    if not ch.m > 0:
        out.append("[ch] m must be positive")
    if not ch.tol > 0:
        out.append("[ch] tol must be positive")
    if ch.max_picard < 1:
        out.append("[ch] max_picard must be >= 1")
    if ch.splitting_const is not None and p.kind in ("double_well", "logarithmic"):
        alpha = 1.0 if p.kind == "double_well" else max(p.theta_c - p.theta, 0.0)
        if ch.splitting_const < alpha:
            out.append(f"[ch] splitting_const must be >= alpha = {alpha:g}")

    m = cfg.momentum
    if not m.dt > 0:
        out.append("[momentum] dt must be positive")
    if not m.picard_tol > 0:
        out.append("[momentum] picard_tol must be positive")
    if m.theta_relax is not None and not 0 < m.theta_relax <= 1:
        out.append("[momentum] theta_relax must lie in (0, 1]")
    if m.max_picard < 1:
        out.append("[momentum] max_picard must be >= 1")

    a = cfg.approx
    for key in ("mollify_eps", "cutoff_eps"):
        raw = getattr(a, key)
        if key == "cutoff_eps" and raw.strip().lower() == "tie":
            continue
        try:
            val = float(raw.strip().lower().rstrip("h") or 1.0)
            if val < 0:
                out.append(f"[approx] {key} must be non-negative")
        except ValueError:
            out.append(f"[approx] {key} must be a number, optionally with suffix h")
    if a.coupling_mode not in COUPLING_MODES:
        out.append("[approx] coupling_mode must be lagged or fixed_point")
    if not a.fp_tol > 0:
        out.append("[approx] fp_tol must be positive")
    if a.fp_max < 1:
        out.append("[approx] fp_max must be >= 1")

    t = cfg.time
    if not t.t_end >= 0:
        out.append("[time] t_end must be non-negative")
    if t.snapshot_every < 0:
        out.append("[time] snapshot_every must be >= 0")

    bad = [s for s in cfg.formats if s not in OUTPUT_FORMATS]
    if bad:
        out.append(f"[output] unknown formats {bad}; allowed {', '.join(OUTPUT_FORMATS)}")

    i = cfg.initial
    if i.kind not in INITIAL_KINDS:
        out.append(f"[initial] kind must be one of {', '.join(INITIAL_KINDS)}")
    if i.velocity not in VELOCITY_KINDS:
        out.append(f"[initial] velocity must be one of {', '.join(VELOCITY_KINDS)}")
    if not -1 < i.c_mean < 1:
        out.append("[initial] c_mean must lie in (-1, 1)")
    if not i.amplitude >= 0:
        out.append("[initial] amplitude must be non-negative")
    if not i.noise_length >= 0:
        out.append("[initial] noise_length must be non-negative")
    if i.kind == "droplet" and not 0 < i.radius < 0.5:
        out.append("[initial] radius must lie in (0, 0.5) as a fraction of the domain")
    return out


def _from_parser(parser: configparser.ConfigParser) -> tuple[RunConfig, list[str]]:
    problems = []
    cfg = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        cls = SECTIONS[section]
        types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in types:
                problems.append(f"unknown key {key!r} in [{section}]")
                continue
            try:
                values[key] = _convert(raw, types[key], key)
            except ValueError:
                problems.append(f"[{section}] {key}: cannot parse {raw!r} as {types[key]}")
        setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **values))
    return cfg, problems


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError([f"{source}: line {e.lineno}: key outside any [section]"]) from None
    except configparser.ParsingError as e:
        msgs = [f"{source}: line {lineno}: cannot parse {line.strip()}" for lineno, line in e.errors]
        raise ConfigError(msgs) from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError([f"{source}: line {e.lineno}: duplicate key {e.option!r} in [{e.section}]"]) from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError([f"{source}: line {e.lineno}: duplicate section [{e.section}]"]) from None
    cfg, problems = _from_parser(parser)
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    return parse_config_text(p.read_text(), source=str(p))
