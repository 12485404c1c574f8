"""Verification checks shared by ``nnch verify`` and the acceptance tests.

Every check returns a :class:`CheckResult` with a pass flag and the measured
quantities.  Expensive benchmark runs are cached per process so checks that
read the same trajectory do not repeat it.
"""

from __future__ import annotations

import filecmp
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .cahn_hilliard import CHStepParams, ch_step, mixing_energy
from .config import RunConfig
from .constitutive import ConstitutiveLaw, FreeEnergy, check_assumption_1
from .grid import Grid, VectorField, divergence, gradient
from .mollify import MollifierKernel, helmholtz_project, psi_eps
from .momentum import MomentumStepParams, momentum_step
from .stepper import eps_convergence_study, run_simulation, smooth_noise
from .truncation import (
    _grad_frames,
    auto_lambda_ref,
    difference_fields,
    levelset_decay,
    maximal_array,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail}"

    def kv(self) -> str:
        items = [f"check={self.name}", f"passed={int(self.passed)}", f"seconds={self.seconds:.3f}"]
        for k, v in self.metrics.items():
            items.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(items)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def fit_order(steps, errors) -> float:
    """Least-squares slope of ``log error`` against ``log step``."""
    x = np.log(np.asarray(steps, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# 1. structure conditions

SHIPPED_LAWS = (
    ("power_law", 1.5),
    ("power_law", 2.0),
    ("power_law", 3.0),
    ("carreau", 1.5),
)


@_timed
def check_constitutive(n_samples: int = 10_000, seed: int = 0, time_limit: float = 5.0) -> CheckResult:
    t0 = time.perf_counter()
    worst = 0
    failures = []
    for kind, q in SHIPPED_LAWS:
        law = ConstitutiveLaw(q=q, nu0=1.0, nu1=0.5, kind=kind)
        for pot in ("double_well", "logarithmic"):
            rep = check_assumption_1(law, FreeEnergy(pot), n_samples, seed)
            worst = max(worst, len(rep.violations))
            if not rep.ok:
                failures.append(f"{kind} q={q} {pot}: {'; '.join(rep.violations)}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < time_limit
    detail = f"{len(SHIPPED_LAWS) * 2} law/potential pairs, {n_samples} samples each, {elapsed:.2f}s"
    if failures:
        detail += "; " + " | ".join(failures)
    return CheckResult("constitutive", ok, {"violations": worst, "runtime": elapsed}, detail=detail)


# ---------------------------------------------------------------------------
# 2. operator identities


def _random_faces(grid: Grid, rng) -> VectorField:
    return VectorField(grid, rng.standard_normal(grid.u_shape) * grid.u_mask,
                       rng.standard_normal(grid.v_shape) * grid.v_mask)


@_timed
def check_operators(n: int = 64, seed: int = 0, time_limit: float = 10.0) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    ibp = idem = kill = adj = 0.0
    for bc in ("box_noslip_neumann", "periodic", "channel"):
        g = Grid(n, n, 1.0, 1.0, bc)
        f = rng.standard_normal(g.cell_shape)
        v = _random_faces(g, rng)
        lhs = g.inner_faces(gradient(g, f), v)
        rhs = -g.inner_cells(f, divergence(v))
        scale = g.norm_faces(gradient(g, f)) * g.norm_faces(v)
        ibp = max(ibp, abs(lhs - rhs) / scale)

        pv = helmholtz_project(v)
        idem = max(idem, (helmholtz_project(pv) - pv).max_abs() / pv.max_abs())
        gf = gradient(g, f)
        kill = max(kill, helmholtz_project(gf).max_abs() / gf.max_abs())

        k = MollifierKernel.for_grid(g, 3.0 * g.hx)
        a = helmholtz_project(_random_faces(g, rng))
        b = helmholtz_project(_random_faces(g, rng))
        s1, s2 = g.inner_faces(psi_eps(a, k), b), g.inner_faces(a, psi_eps(b, k))
        adj = max(adj, abs(s1 - s2) / (g.norm_faces(a) * g.norm_faces(b)))
    elapsed = time.perf_counter() - t0
    ok = ibp <= 1e-12 and idem <= 1e-10 and kill <= 1e-10 and adj <= 1e-10 and elapsed < time_limit
    return CheckResult(
        "operators", ok,
        {"ibp": ibp, "idempotence": idem, "gradient_kill": kill, "self_adjoint": adj, "runtime": elapsed},
        detail=f"ibp={ibp:.2e} idem={idem:.2e} grad-kill={kill:.2e} adjoint={adj:.2e} on {n}^2, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# coupled spinodal benchmark (criteria 3, 5, 8)


def benchmark_config(n: int = 128, dt: float = 0.06, t_end: float = 30.0, potential: str = "double_well",
                     c_mean: float = 0.1, seed: int = 0) -> RunConfig:
    """Spinodal decomposition on a side-``n/2`` box (interface width 1)."""
    return RunConfig().replace(
        domain={"nx": n, "ny": n, "lx": n / 2, "ly": n / 2},
        potential={"kind": potential},
        momentum={"dt": dt},
        time={"t_end": t_end},
        initial={"kind": "spinodal", "c_mean": c_mean, "amplitude": 0.01, "noise_length": 1.0},
        seed={"rng_seed": seed},
    )


@dataclass
class BenchmarkRun:
    ledger: object
    c_min: np.ndarray
    c_max: np.ndarray
    steps: int
    stats: dict
    seconds: float


@lru_cache(maxsize=8)
def benchmark_run(n: int = 128, dt: float = 0.06, t_end: float = 30.0, potential: str = "double_well",
                  c_mean: float = 0.1) -> BenchmarkRun:
    cfg = benchmark_config(n, dt, t_end, potential, c_mean)
    lo, hi = [], []

    def track(st):
        lo.append(float(st.fields.c.min()))
        hi.append(float(st.fields.c.max()))

    t0 = time.perf_counter()
    res = run_simulation(cfg, write=False, progress=track)
    return BenchmarkRun(res.state.ledger, np.array(lo), np.array(hi), res.state.step, dict(res.state.stats),
                        time.perf_counter() - t0)


@_timed
def check_mass(n: int = 128, dt: float = 0.03, t_end: float = 30.0, tol: float = 1e-12) -> CheckResult:
    drifts = {}
    steps = {}
    for pot in ("double_well", "logarithmic"):
        run = benchmark_run(n, dt, t_end, pot)
        m = run.ledger.column("mass")
        drifts[pot] = float(np.abs(m - m[0]).max() / abs(m[0]))
        steps[pot] = run.steps
    worst = max(drifts.values())
    ok = worst <= tol and min(steps.values()) >= 1000
    det = " ".join(f"{k}={v:.2e}" for k, v in drifts.items())
    return CheckResult("mass", ok, {"drift_double_well": drifts["double_well"],
                                    "drift_logarithmic": drifts["logarithmic"],
                                    "steps": min(steps.values())},
                       detail=f"relative drift {det} over {min(steps.values())} steps on {n}^2")


@_timed
def check_energy_identity(n: int = 128, dt: float = 0.06, t_end: float = 30.0, tol: float = 1e-2,
                          min_order: float = 0.9) -> CheckResult:
    res = []
    bound_ok = True
    for h in (dt, dt / 2):
        run = benchmark_run(n, h, t_end, "double_well")
        led = run.ledger
        res.append(float(led.relative_residual().max()))
        total = led.column("kinetic") + led.column("e_mix")
        bound_ok &= bool(np.all(total <= led.e0 + led.column("residual") + 1e-12 * abs(led.e0)))
    order = float(np.log2(res[0] / res[1]))
    ok = res[0] <= tol and res[1] < res[0] and order >= min_order and bound_ok
    return CheckResult(
        "energy_identity", ok,
        {"residual_base": res[0], "residual_half": res[1], "order": order, "bound": int(bound_ok)},
        detail=f"residual/E0 {res[0]:.2e} -> {res[1]:.2e} (order {order:.3f}), energy bound {'holds' if bound_ok else 'fails'}",
    )


@_timed
def check_log_barrier(n: int = 128, dt: float = 0.03, t_end: float = 30.0) -> CheckResult:
    run = benchmark_run(n, dt, t_end, "logarithmic")
    lo, hi = float(run.c_min.min()), float(run.c_max.max())
    ok = lo > -1.0 and hi < 1.0 and run.stats.get("rejections", 0) == 0 and run.steps >= 1
    return CheckResult("log_barrier", ok, {"c_min": lo, "c_max": hi, "steps": run.steps,
                                           "clamps": run.stats.get("out_of_range", 0)},
                       detail=f"c in [{lo:.6f}, {hi:.6f}] over {run.steps} steps")


# ---------------------------------------------------------------------------
# 4. pure Cahn-Hilliard dissipation


def ch_residual(n: int, lx: float, dt: float, t_end: float, potential: str, seed: int = 0):
    """``(|E(T) + int m|grad mu|^2 - E0|, E0, max step increase)`` for ``v = 0``."""
    g = Grid(n, n, lx, lx)
    en = FreeEnergy(potential)
    c = 0.1 + 0.01 * smooth_noise(g, np.random.default_rng(seed), 1.0)
    v = VectorField.zeros(g)
    params = CHStepParams(dt=dt)
    e0 = e = mixing_energy(c, g, en)
    worst_rise = -np.inf
    cum = 0.0
    for _ in range(int(round(t_end / dt))):
        r = ch_step(c, v, params, en)
        c = r.c
        cum += r.diffusion
        e1 = mixing_energy(c, g, en)
        worst_rise = max(worst_rise, (e1 - e) / max(1.0, abs(e)))
        e = e1
    return abs(e + cum - e0), e0, worst_rise


@_timed
def check_ch_dissipation(n: int = 64, tau: float = 0.01, t_end: float = 30.0, min_order: float = 1.0) -> CheckResult:
    dts = (4 * tau, 2 * tau, tau)
    metrics = {}
    ok = True
    parts = []
    for pot in ("double_well", "logarithmic"):
        out = [ch_residual(n, n / 2, dt, t_end, pot) for dt in dts]
        res = [o[0] for o in out]
        rise = max(o[2] for o in out)
        order = fit_order(dts, res)
        c_const = max(r / dt for r, dt in zip(res, dts))
        mono = rise <= 1e-12
        ok &= mono and order >= min_order
        metrics[f"order_{pot}"] = order
        metrics[f"C_{pot}"] = c_const
        metrics[f"max_rise_{pot}"] = float(rise)
        parts.append(f"{pot}: residual {res[0]:.2e}/{res[1]:.2e}/{res[2]:.2e} order {order:.3f}, "
                     f"max rise {rise:.1e}")
    return CheckResult("ch_dissipation", bool(ok), metrics, detail="; ".join(parts))


# ---------------------------------------------------------------------------
# 6. Poiseuille


def poiseuille_profile(y, q: float, g: float = 1.0, nu: float = 1.0, half_width: float = 1.0):
    """Steady channel velocity for ``S = nu 2^(-q/2) |Dv|^(q-2) Dv`` driven by ``g``.

    ``y`` is measured from the centreline.
    """
    r = q / (q - 1.0)
    return (2.0 ** (q / 2.0) * g / nu) ** (1.0 / (q - 1.0)) * (q - 1.0) / q * (half_width**r - np.abs(y) ** r)


def poiseuille_error(q: float, ny: int, steps: int = 6) -> float:
    g = Grid(8, ny, 8 * 2.0 / ny, 2.0, bc="channel")
    law = ConstitutiveLaw(q=q)
    v = VectorField.zeros(g)
    force = VectorField.from_functions(g, lambda x, y: np.ones_like(x), lambda x, y: np.zeros_like(x))
    params = MomentumStepParams(dt=1e6)
    c = np.zeros(g.cell_shape)
    for _ in range(steps):
        v = momentum_step(v, c, law, params, body_force=force).v
    _, y = g.u_coords()
    exact = poiseuille_profile(y - 1.0, q)
    return float(np.sqrt(np.mean((v.u - exact) ** 2) / np.mean(exact**2)))


@_timed
def check_poiseuille(levels=(32, 64, 128), tol: float = 0.02, min_order: float = 1.8) -> CheckResult:
    ok = True
    metrics = {}
    parts = []
    for q in (1.5, 2.0, 3.0):
        errs = [poiseuille_error(q, n) for n in levels]
        order = fit_order([1.0 / n for n in levels], errs)
        e64 = errs[list(levels).index(64)] if 64 in levels else errs[-1]
        ok &= e64 <= tol and order >= min_order
        metrics[f"err64_q{q:g}"] = e64
        metrics[f"order_q{q:g}"] = order
        parts.append(f"q={q:g}: err(64)={e64:.2e} order={order:.2f}")
    return CheckResult("poiseuille", bool(ok), metrics, detail="; ".join(parts))


# ---------------------------------------------------------------------------
# 7. mollification refinement


def eps_config(n: int = 32, t_end: float = 2.0) -> RunConfig:
    return RunConfig().replace(
        domain={"nx": n, "ny": n, "lx": 16.0, "ly": 16.0},
        momentum={"dt": 0.05},
        time={"t_end": t_end},
        initial={"kind": "smooth", "amplitude": 0.5, "velocity": "vortex", "velocity_amplitude": 0.5},
    )


@_timed
def check_eps_study(n: int = 32) -> CheckResult:
    cfg = eps_config(n)
    h = cfg.grid().hx
    rep = eps_convergence_study(cfg, [8 * h, 4 * h, 2 * h, h])
    ok = rep.complete and rep.v_decreasing and rep.c_decreasing
    return CheckResult(
        "eps_study", ok,
        {"v_first": rep.v_distances[0], "v_last": rep.v_distances[-1],
         "c_first": rep.c_distances[0], "c_last": rep.c_distances[-1]},
        detail="v " + ", ".join(f"{d:.2e}" for d in rep.v_distances)
        + "; c " + ", ".join(f"{d:.2e}" for d in rep.c_distances),
    )


# ---------------------------------------------------------------------------
# 9. truncation lab


def truncation_config(n: int = 32, frames: int = 32) -> RunConfig:
    return RunConfig().replace(
        domain={"nx": n, "ny": n, "lx": 16.0, "ly": 16.0},
        momentum={"dt": 0.05},
        time={"t_end": 0.05 * frames},
        initial={"kind": "spinodal", "amplitude": 0.3, "velocity": "vortex", "velocity_amplitude": 0.5},
    )


@_timed
def check_truncation(n: int = 32, frames: int = 32, K: int = 4, time_limit: float = 60.0) -> CheckResult:
    t0 = time.perf_counter()
    cfg = truncation_config(n, frames)
    grid, law = cfg.grid(), cfg.law()
    h = grid.hx

    def series(eps):
        sub = cfg.replace(approx={"mollify_eps": repr(eps), "cutoff_eps": "tie"})
        tr = run_simulation(sub, write=False, record=True).trajectory
        return ([VectorField.from_flat(grid, x) for x in tr["v"]],
                [c.reshape(grid.cell_shape) for c in tr["c"]], tr["dt"][0])

    v_ref, c_ref, dt = series(0.0)
    reports = []
    lam = None
    dom = sub = 0.0
    for eps in (4 * h, 2 * h, 1.5 * h):
        va, ca, _ = series(eps)
        data = difference_fields(grid, dt, va, ca, v_ref, c_ref, law)
        if lam is None:
            lam = auto_lambda_ref(data.u, data.g1, data.g2)
        rep = levelset_decay(data.u, data.g1, data.g2, law.q, K, lam, data.residual)
        reports.append(rep)
        f = data.u.restrict(_grad_frames(data.u))
        g = data.g1.restrict(data.g1.magnitude()) + data.g2.restrict(data.g2.magnitude())
        mf, mg, mfg = (maximal_array(a, h, dt) for a in (f, g, f + g))
        scale = max(mf.max(), mg.max(), np.finfo(float).tiny)
        dom = max(dom, float(np.max(f - mf)) / scale, float(np.max(g - mg)) / scale)
        sub = max(sub, float(np.max(mfg - mf - mg)) / scale)
    nested = all(r.nested for r in reports)
    along = all(all(mb <= ma for ma, mb in zip(a.measures, b.measures)) for a, b in zip(reports, reports[1:]))
    resid = max(r.residual for r in reports)
    elapsed = time.perf_counter() - t0
    ok = nested and along and dom <= 1e-13 and sub <= 1e-13 and elapsed < time_limit
    counts = " / ".join(",".join(str(c) for c in r.counts) for r in reports)
    return CheckResult(
        "truncation", ok,
        {"nested": int(nested), "monotone_eps": int(along), "domination": dom, "subadditivity": sub,
         "weak_residual": resid, "lambda_ref": float(lam), "runtime": elapsed},
        detail=f"cell counts per k {counts}; domination {dom:.1e}, sub-additivity {sub:.1e}, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 10. determinism


@_timed
def check_determinism(n: int = 32, steps: int = 20, seed: int = 7) -> CheckResult:
    cfg = benchmark_config(n, 0.05, 0.05 * steps).replace(
        initial={"kind": "spinodal", "c_mean": 0.0, "amplitude": 0.3, "velocity": "vortex",
                 "velocity_amplitude": 0.5},
        output={"formats": "bin"},
    )
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a", Path(tmp) / "b"
        run_simulation(cfg, out_dir=a, seed=seed)
        run_simulation(cfg, out_dir=b, seed=seed)
        same = filecmp.cmp(a / "ledger.csv", b / "ledger.csv", shallow=False)
        size = (a / "ledger.csv").stat().st_size
    return CheckResult("determinism", same, {"ledger_bytes": size},
                       detail=f"ledgers {'identical' if same else 'differ'} ({size} bytes)")


# ---------------------------------------------------------------------------
# suites


@_timed
def check_ledger(cfg: RunConfig, tol: float = 1e-2) -> CheckResult:
    """Relative energy residual of a run of ``cfg``."""
    res = run_simulation(cfg, write=False)
    led = res.state.ledger
    r = float(led.relative_residual().max()) if abs(led.e0) > 0 else float(led.column("residual").max())
    return CheckResult("ledger_residual", r <= tol, {"residual": r, "steps": res.state.step},
                       detail=f"max residual/E0 {r:.2e} over {res.state.step} steps")


ACCEPTANCE = (
    ("1 constitutive", check_constitutive),
    ("2 operators", check_operators),
    ("3 mass", check_mass),
    ("4 ch_dissipation", check_ch_dissipation),
    ("5 energy_identity", check_energy_identity),
    ("6 poiseuille", check_poiseuille),
    ("7 eps_study", check_eps_study),
    ("8 log_barrier", check_log_barrier),
    ("9 truncation", check_truncation),
    ("10 determinism", check_determinism),
)


def quick_suite(cfg: RunConfig) -> list[CheckResult]:
    """Constitutive checks, operator identities, Poiseuille and the ledger of ``cfg``."""
    short = cfg.replace(time={"t_end": min(cfg.time.t_end, 20 * cfg.momentum.dt)})
    return [
        check_constitutive(),
        check_operators(),
        check_poiseuille(),
        check_ledger(short),
    ]


def full_suite() -> list[CheckResult]:
    return [fn() for _, fn in ACCEPTANCE]
