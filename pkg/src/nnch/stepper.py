"""Coupled time stepping, energy ledger and run driver.

A lagged step advances ``c`` with the transport field ``Psi_eps v_n`` and then
the velocity with the new concentration.  The capillary force is
``Psi_eps P(avg(mu_{n+1}) grad c_n)`` so that its work on ``v`` and the
transport term of the Cahn-Hilliard step cancel up to ``dt <a, Psi(v_{n+1}-v_n)>``.
In ``fixed_point`` mode the pair is iterated with the transport taken from the
current velocity guess, which removes that remainder at convergence.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cahn_hilliard import CHStepError, CHStepParams, ch_step, chemical_potential, mixing_energy
from .config import RunConfig
from .constitutive import ConstitutiveLaw, FreeEnergy
from .grid import Grid, VectorField, curl, divergence
from .mollify import MollifierKernel, ProjectionError, VelocityCutoff, psi_eps
from .momentum import (
    MomentumStepError,
    MomentumStepParams,
    SaddleSolver,
    capillary_force_potential,
    kinetic_energy,
    momentum_step,
)
from .snapshots import write_binary, write_csv
from .spectral import cell_spectral

log = logging.getLogger(__name__)

MAX_HALVINGS = 5
STEP_ERRORS = (CHStepError, MomentumStepError, ProjectionError)


class StepRejected(RuntimeError):
    """All time-step halvings failed."""


class SimulationError(RuntimeError):
    def __init__(self, message, state=None, paths=None):
        super().__init__(message)
        self.state = state
        self.paths = paths or {}


# ---------------------------------------------------------------------------
# data


@dataclass
class StaggeredState:
    v: VectorField
    c: np.ndarray
    mu: np.ndarray
    p: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.v.grid

    def copy(self) -> "StaggeredState":
        return StaggeredState(self.v.copy(), self.c.copy(), self.mu.copy(), self.p.copy())


class EnergyLedger:
    COLUMNS = ("t", "kinetic", "e_mix", "cum_visc", "cum_mu", "residual", "mass", "div_res")

    def __init__(self, e0: float):
        self.e0 = float(e0)
        self.rows: list[tuple] = []

    def append(self, t, kinetic, e_mix, cum_visc, cum_mu, mass, div_res):
        residual = abs(kinetic + e_mix + cum_visc + cum_mu - self.e0)
        row = tuple(float(x) for x in (t, kinetic, e_mix, cum_visc, cum_mu, residual, mass, div_res))
        if not all(math.isfinite(x) for x in row):
            raise ValueError("non-finite ledger entry")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = self.COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def relative_residual(self) -> np.ndarray:
        return self.column("residual") / abs(self.e0)

    def copy(self) -> "EnergyLedger":
        new = EnergyLedger(self.e0)
        new.rows = list(self.rows)
        return new

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join("%.17g" % x for x in r) + "\n")
        return path

    @classmethod
    def read_csv(cls, path) -> "EnergyLedger":
        with Path(path).open() as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != cls.COLUMNS:
                raise ValueError(f"unexpected ledger header {header}")
            rows = [tuple(float(x) for x in r) for r in reader]
        r0 = rows[0]
        led = cls(r0[1] + r0[2] + r0[3] + r0[4])
        led.rows = rows
        return led


@dataclass
class Setup:
    """Everything a step needs besides the fields."""

    grid: Grid
    law: ConstitutiveLaw
    energy: FreeEnergy
    ch: CHStepParams
    momentum: MomentumStepParams
    kernel: MollifierKernel
    cutoff: VelocityCutoff
    mode: str = "lagged"
    fp_tol: float = 1e-10
    fp_max: int = 25
    solver: SaddleSolver | None = None

    def __post_init__(self):
        if self.solver is None:
            self.solver = SaddleSolver(self.grid)

    @property
    def width(self) -> float:
        return self.ch.interface_width

    @classmethod
    def from_config(cls, cfg: RunConfig, mode: str | None = None) -> "Setup":
        g = cfg.grid()
        dt = cfg.momentum.dt
        ch = CHStepParams(
            m=cfg.ch.m,
            dt=dt,
            splitting_const=cfg.ch.splitting_const,
            max_picard=cfg.ch.max_picard,
            tol=cfg.ch.tol,
            interface_width=cfg.potential.interface_width,
        )
        mom = MomentumStepParams(
            dt=dt,
            picard_tol=cfg.momentum.picard_tol,
            max_picard=cfg.momentum.max_picard,
            theta_relax=cfg.momentum.theta_relax,
        )
        return cls(
            grid=g,
            law=cfg.law(),
            energy=cfg.energy(),
            ch=ch,
            momentum=mom,
            kernel=MollifierKernel.for_grid(g, cfg.mollify_radius()),
            cutoff=VelocityCutoff(cfg.cutoff_parameter()),
            mode=mode or cfg.approx.coupling_mode,
            fp_tol=cfg.approx.fp_tol,
            fp_max=cfg.approx.fp_max,
        )

    def total_energy(self, f: StaggeredState) -> tuple[float, float]:
        return kinetic_energy(f.v), mixing_energy(f.c, self.grid, self.energy, self.width)


@dataclass
class SimState:
    fields: StaggeredState
    setup: Setup
    ledger: EnergyLedger
    t: float = 0.0
    step: int = 0
    dt: float = 0.0
    cum_visc: float = 0.0
    cum_mu: float = 0.0
    config: RunConfig | None = None
    stats: dict = field(default_factory=dict)
    last_step: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, fields: StaggeredState, setup: Setup, config: RunConfig | None = None) -> "SimState":
        k, e = setup.total_energy(fields)
        led = EnergyLedger(k + e)
        f = fields.copy()
        led.append(0.0, k, e, 0.0, 0.0, mass(f.c, setup.grid), div_residual(f.v))
        stats = {"rejections": 0, "out_of_range": 0, "coercivity_failures": 0, "fp_unconverged": 0}
        return cls(f, setup, led, 0.0, 0, setup.momentum.dt, config=config, stats=stats)


def mass(c: np.ndarray, grid: Grid) -> float:
    return float(np.sum(c) * grid.cell_area)


def div_residual(v: VectorField) -> float:
    return float(np.abs(divergence(v)).max())


# ---------------------------------------------------------------------------
# stepping


def _advance(f: StaggeredState, s: Setup, dt: float) -> tuple[StaggeredState, dict]:
    chp = replace(s.ch, dt=dt)
    mp = replace(s.momentum, dt=dt)
    g = s.grid
    guess = f.v
    info = {"fp_iterations": 0, "fp_converged": True}
    n_outer = 1 if s.mode == "lagged" else s.fp_max
    for k in range(n_outer):
        w = psi_eps(guess, s.kernel)
        chr = ch_step(f.c, f.v, chp, s.energy, transport=w)
        force = capillary_force_potential(f.c, chr.mu, s.kernel, g)
        mr = momentum_step(f.v, chr.c, s.law, mp, cutoff=s.cutoff, force=force, solver=s.solver)
        info["fp_iterations"] = k + 1
        if s.mode == "lagged":
            break
        change = g.norm_faces(mr.v - guess)
        guess = mr.v
        if change <= s.fp_tol * max(g.norm_faces(mr.v), 1e-300):
            break
    else:
        info["fp_converged"] = False
    info.update(
        visc=mr.dissipation,
        diff=chr.diffusion,
        ch_iterations=chr.picard_iterations,
        mom_iterations=mr.picard_iterations,
        out_of_range=chr.out_of_range,
        coercivity_ok=mr.coercivity_ok,
    )
    return StaggeredState(mr.v, chr.c, chr.mu, mr.p), info


def coupled_step(state: SimState, dt: float | None = None) -> SimState:
    """One step of length ``dt`` (default ``state.dt``), retried with
    ``2^k`` substeps of ``dt/2^k`` for ``k <= 5`` if a sub-solver rejects it.

    The ledger is shared with the input state and gains one row.
    """
    s = state.setup
    dt = state.dt if dt is None else dt
    last_err = None
    for level in range(MAX_HALVINGS + 1):
        n_sub = 2**level
        h = dt / n_sub
        f = state.fields
        visc = diff = 0.0
        agg = {"out_of_range": 0, "coercivity_failures": 0, "fp_unconverged": 0, "ch_iterations": 0, "mom_iterations": 0}
        try:
            for _ in range(n_sub):
                f, info = _advance(f, s, h)
                visc += info["visc"]
                diff += info["diff"]
                agg["out_of_range"] += info["out_of_range"]
                agg["coercivity_failures"] += 0 if info["coercivity_ok"] else 1
                agg["fp_unconverged"] += 0 if info["fp_converged"] else 1
                agg["ch_iterations"] += info["ch_iterations"]
                agg["mom_iterations"] += info["mom_iterations"]
        except STEP_ERRORS as e:
            last_err = e
            log.info("step %d rejected at dt=%.3g: %s", state.step + 1, h, e)
            continue
        break
    else:
        raise StepRejected(f"step {state.step + 1} rejected after {MAX_HALVINGS} halvings: {last_err}")

    t = state.t + dt
    cum_visc = state.cum_visc + visc
    cum_mu = state.cum_mu + diff
    k, e = s.total_energy(f)
    state.ledger.append(t, k, e, cum_visc, cum_mu, mass(f.c, s.grid), div_residual(f.v))
    stats = dict(state.stats)
    stats["rejections"] = stats.get("rejections", 0) + level
    for key in ("out_of_range", "coercivity_failures", "fp_unconverged"):
        stats[key] = stats.get(key, 0) + agg[key]
    last = dict(agg, halvings=level, dt_used=dt / 2**level)
    return SimState(f, s, state.ledger, t, state.step + 1, state.dt, cum_visc, cum_mu, state.config, stats, last)


# ---------------------------------------------------------------------------
# initial data


def smooth_noise(grid: Grid, rng: np.random.Generator, length: float) -> np.ndarray:
    """Mean-zero uniform noise damped by ``exp(-length^2 |k|^2)`` and scaled
    to unit maximum; ``length = 0`` leaves it white."""
    z = rng.uniform(-1.0, 1.0, grid.cell_shape)
    if length > 0:
        spec = cell_spectral(grid)
        zh = spec.forward(z) * np.exp(spec.lam * length**2)
        z = spec.inverse(zh)
    z = z - z.mean()
    return z / np.abs(z).max()


def initial_fields(cfg: RunConfig, grid: Grid, rng: np.random.Generator) -> StaggeredState:
    ini = cfg.initial
    x, y = grid.cell_coords()
    shape = grid.cell_shape
    w = cfg.potential.interface_width
    if ini.kind == "spinodal":
        c = ini.c_mean + ini.amplitude * smooth_noise(grid, rng, ini.noise_length)
    elif ini.kind == "droplet":
        r = ini.radius * min(grid.lx, grid.ly)
        d = np.hypot(x - 0.5 * grid.lx, y - 0.5 * grid.ly)
        c = np.tanh((r - d) / (np.sqrt(2.0) * w)) + ini.amplitude * rng.uniform(-1.0, 1.0, shape)
    elif ini.kind == "smooth":
        c = ini.c_mean + ini.amplitude * np.cos(2 * np.pi * x / grid.lx) * np.cos(2 * np.pi * y / grid.ly)
    else:
        c = np.full(shape, ini.c_mean)
    margin = cfg.potential.clip_margin if cfg.potential.kind == "logarithmic" else 0.0
    c = np.clip(c, -1.0 + margin, 1.0 - margin)

    if ini.velocity == "vortex" and ini.velocity_amplitude != 0:
        X, Y = grid.corner_coords()
        psi = ini.velocity_amplitude * np.sin(np.pi * X / grid.lx) ** 2 * np.sin(np.pi * Y / grid.ly) ** 2
        v = curl(grid, psi * min(grid.lx, grid.ly) / np.pi)
    else:
        v = VectorField.zeros(grid)
    energy = cfg.energy()
    mu = chemical_potential(c, grid, energy, w)
    return StaggeredState(v, c, mu, np.zeros(shape))


# ---------------------------------------------------------------------------
# driver


@dataclass
class SimResult:
    state: SimState
    paths: dict
    trajectory: dict | None = None


DIAG_COLUMNS = (
    "step", "t", "dt_used", "halvings", "c_min", "c_max", "ch_iterations",
    "mom_iterations", "out_of_range", "coercivity_failures",
)


def _snapshot(f: StaggeredState, out: Path, tag: str, formats: list[str]) -> list[Path]:
    g = f.grid
    arrays = {"c": (f.c, g.cell_coords()), "mu": (f.mu, g.cell_coords()), "p": (f.p, g.cell_coords()),
              "u": (f.v.u, g.u_coords()), "v": (f.v.v, g.v_coords())}
    paths = []
    for name, (arr, (x, y)) in arrays.items():
        if "bin" in formats:
            paths.append(write_binary(out / f"snap_{tag}_{name}.bin", arr, name))
        if "csv" in formats:
            paths.append(write_csv(out / f"snap_{tag}_{name}.csv", arr, x, y))
    return paths


def _write_diagnostics(rows, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        fh.write(",".join(DIAG_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(x if isinstance(x, str) else ("%d" % x if isinstance(x, (int, np.integer)) else "%.17g" % x) for x in r) + "\n")
    return path


def run_simulation(
    cfg: RunConfig,
    out_dir=None,
    mode: str | None = None,
    seed: int | None = None,
    write: bool = True,
    record: bool = False,
    progress=None,
) -> SimResult:
    """Run ``t_end/dt`` coupled steps (the last one shortened to land on
    ``t_end``).  Writes ``ledger.csv``, ``diagnostics.csv``, the resolved
    ``config.ini`` and snapshots to ``out_dir``.

    On step-rejection exhaustion the last valid state is written under the
    tag ``last_valid`` and :class:`SimulationError` is raised.
    """
    problems = cfg.validate()
    if problems:
        from .config import ConfigError

        raise ConfigError(problems)
    if seed is not None:
        cfg = cfg.replace(seed={"rng_seed": int(seed)})
    if mode is not None:
        cfg = cfg.replace(approx={"coupling_mode": mode})
    setup = Setup.from_config(cfg)
    rng = np.random.default_rng(cfg.seed.rng_seed)
    fields = initial_fields(cfg, setup.grid, rng)
    state = SimState.initial(fields, setup, cfg)

    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    formats = cfg.formats
    paths: dict = {"snapshots": []}
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(cfg.to_ini())
        paths["config"] = out / "config.ini"
        paths["snapshots"] += _snapshot(state.fields, out, "000000", formats)

    dt = cfg.momentum.dt
    t_end = cfg.time.t_end
    n_steps = int(math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    every = cfg.time.snapshot_every
    diag = [(0, 0.0, 0.0, 0, float(fields.c.min()), float(fields.c.max()), 0, 0, 0, 0)]
    traj = {"t": [0.0], "dt": [], "v": [state.fields.v.flat()], "c": [state.fields.c.ravel().copy()]} if record else None

    def finish(st):
        if write:
            paths["ledger"] = st.ledger.write_csv(out / "ledger.csv")
            paths["diagnostics"] = _write_diagnostics(diag, out / "diagnostics.csv")

    for n in range(1, n_steps + 1):
        h = min(dt, t_end - state.t) if n == n_steps else dt
        try:
            state = coupled_step(state, h)
        except StepRejected as e:
            if write:
                paths["snapshots"] += _snapshot(state.fields, out, "last_valid", formats)
            finish(state)
            raise SimulationError(str(e), state, paths) from e
        ls = state.last_step
        diag.append((n, state.t, ls["dt_used"], ls["halvings"], float(state.fields.c.min()),
                     float(state.fields.c.max()), ls["ch_iterations"], ls["mom_iterations"],
                     ls["out_of_range"], ls["coercivity_failures"]))
        if record:
            traj["t"].append(state.t)
            traj["dt"].append(h)
            traj["v"].append(state.fields.v.flat())
            traj["c"].append(state.fields.c.ravel().copy())
        if write and every and n % every == 0 and n != n_steps:
            paths["snapshots"] += _snapshot(state.fields, out, f"{n:06d}", formats)
        if progress is not None:
            progress(state)

    if write:
        if n_steps > 0:
            paths["snapshots"] += _snapshot(state.fields, out, f"{n_steps:06d}", formats)
        finish(state)
        if "png" in formats:
            from .plotting import plot_run

            paths["figures"] = plot_run(state, out)
    return SimResult(state, paths, traj)


# ---------------------------------------------------------------------------
# mollification refinement


@dataclass
class EpsStudyReport:
    eps: list
    v_distances: list
    c_distances: list
    psi_distances: list
    v_decreasing: bool
    c_decreasing: bool
    psi_decreasing: bool
    complete: bool = True
    error: str = ""


def _strictly_decreasing(x) -> bool:
    return len(x) >= 2 and all(b < a for a, b in zip(x, x[1:]))


def eps_convergence_study(cfg: RunConfig, eps_list, out_dir=None, mode: str | None = None) -> EpsStudyReport:
    """Run the scenario once per radius and compare consecutive runs in
    ``L^2(0, T; L^2)``.  The cutoff parameter follows the radius."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("eps_convergence_study needs at least 3 radii")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be non-increasing")
    grid = cfg.grid()
    runs = []
    error = ""
    for i, e in enumerate(eps_list):
        sub = cfg.replace(approx={"mollify_eps": repr(e), "cutoff_eps": "tie"})
        try:
            res = run_simulation(
                sub,
                out_dir=None if out_dir is None else Path(out_dir) / f"eps_{i}",
                mode=mode,
                write=out_dir is not None,
                record=True,
            )
        except (SimulationError, StepRejected) as err:
            error = f"run with eps={e:g} failed: {err}"
            break
        runs.append(res.trajectory)

    def dist(a, b, key):
        w = np.asarray(a["dt"])
        d2 = np.array([np.sum((x - y) ** 2) for x, y in zip(a[key][1:], b[key][1:])]) * grid.cell_area
        return float(np.sqrt(np.sum(w * d2)))

    vd = [dist(runs[i], runs[i + 1], "v") for i in range(len(runs) - 1)]
    cd = [dist(runs[i], runs[i + 1], "c") for i in range(len(runs) - 1)]

    rng = np.random.default_rng(cfg.seed.rng_seed)
    v0 = initial_fields(cfg, grid, rng).v
    pd = [grid.norm_faces(psi_eps(v0, MollifierKernel.for_grid(grid, e)) - v0) for e in eps_list]
    return EpsStudyReport(
        eps=eps_list,
        v_distances=vd,
        c_distances=cd,
        psi_distances=pd,
        v_decreasing=_strictly_decreasing(vd),
        c_decreasing=_strictly_decreasing(cd),
        psi_decreasing=_strictly_decreasing(pd),
        complete=not error,
        error=error,
    )
