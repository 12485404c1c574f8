"""Parabolic maximal functions and level-set measures of difference fields.

For a sequence ``u = v_a - v_b`` of velocity differences with
``d_t u = -div(G1 + G2)`` (tested against solenoidal fields) the lab
computes

    O_k = {M|grad u| > lambda_k}  union  {M(|G1| + |G2|) > lambda_k},
    lambda_k = lambda_ref * 2^(2^k),

where ``M`` is the supremum of averages of a non-negative function over
centred parabolic cylinders (spatial half-width ``r`` cells from the ladder
``0, 1, 2, 4, ...``, temporal half-width ``(r h)^2 / dt`` steps) intersected
with the window ``Q0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import ConstitutiveLaw
from .grid import Grid, VectorField, curl, strain_rate_squared
from .mollify import helmholtz_project


# ---------------------------------------------------------------------------
# fields


@dataclass
class MacTensor:
    """Symmetric tensor with diagonal parts at cells and shear at corners."""

    xx: np.ndarray
    yy: np.ndarray
    xy: np.ndarray

    def magnitude(self, grid: Grid) -> np.ndarray:
        shear2 = (grid.ops.corner_to_cell @ (self.xy.ravel() ** 2)).reshape(grid.cell_shape)
        return np.sqrt(self.xx**2 + self.yy**2 + 2.0 * shear2)

    def divergence(self, grid: Grid) -> VectorField:
        """Face vector ``div G``; the negative adjoint of the strain rate on
        admissible faces (wall-normal faces carry no unknowns and are zeroed)."""
        o = grid.ops
        x = -(o.dxx.T @ self.xx.ravel() + o.dyy.T @ self.yy.ravel() + 2.0 * (o.dxy.T @ self.xy.ravel()))
        x = x * grid.face_mask
        return VectorField.from_flat(grid, x)

    def __add__(self, other):
        return MacTensor(self.xx + other.xx, self.yy + other.yy, self.xy + other.xy)

    def __sub__(self, other):
        return MacTensor(self.xx - other.xx, self.yy - other.yy, self.xy - other.xy)

    def __neg__(self):
        return MacTensor(-self.xx, -self.yy, -self.xy)


def strain_tensor(v: VectorField) -> MacTensor:
    g = v.grid
    o = g.ops
    x = v.flat()
    return MacTensor(
        (o.dxx @ x).reshape(g.cell_shape),
        (o.dyy @ x).reshape(g.cell_shape),
        (o.dxy @ x).reshape(g.corner_shape),
    )


def stress_tensor(v: VectorField, c: np.ndarray, law: ConstitutiveLaw) -> MacTensor:
    """``S(c, Dv)`` with the same quadrature as the momentum step."""
    g = v.grid
    cc = np.clip(c, *law.c_range)
    eta = law.effective_viscosity(cc, strain_rate_squared(v))
    d = strain_tensor(v)
    eta_corner = (g.ops.corner_to_cell.T @ eta.ravel()).reshape(g.corner_shape)
    return MacTensor(eta * d.xx, eta * d.yy, eta_corner * d.xy)


def velocity_gradient_magnitude(v: VectorField) -> np.ndarray:
    """Cell quadrature of the full ``|grad v|``."""
    g = v.grid
    o = g.ops
    x = v.flat()
    xu = np.concatenate([v.u.ravel(), np.zeros(v.v.size)])
    xv = np.concatenate([np.zeros(v.u.size), v.v.ravel()])
    du_dy2 = (2.0 * (o.dxy @ xu)) ** 2
    dv_dx2 = (2.0 * (o.dxy @ xv)) ** 2
    total = (o.dxx @ x) ** 2 + (o.dyy @ x) ** 2 + o.corner_to_cell @ (du_dy2 + dv_dx2)
    return np.sqrt(total).reshape(g.cell_shape)


@dataclass
class SpaceTimeField:
    """Uniformly spaced frames over ``Q0 = I0 x B0``.

    Frames are cell arrays, :class:`VectorField` or :class:`MacTensor`.
    ``window = (i0, i1, j0, j1)`` selects ``B0`` in cell indices and must
    leave at least one cell on every side.
    """

    grid: Grid
    dt: float
    frames: list
    window: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if len(self.frames) < 8:
            raise ValueError("a space-time field needs at least 8 time slices")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        g = self.grid
        if self.window is None:
            self.window = (1, g.nx - 1, 1, g.ny - 1)
        i0, i1, j0, j1 = self.window
        if not (1 <= i0 < i1 <= g.nx - 1 and 1 <= j0 < j1 <= g.ny - 1):
            raise ValueError("window must lie strictly inside the grid")

    @property
    def nt(self) -> int:
        return len(self.frames)

    def magnitude(self) -> np.ndarray:
        """Pointwise norms at cells, shape ``(nt, nx, ny)``."""
        out = []
        for f in self.frames:
            if isinstance(f, VectorField):
                uc = (self.grid.ops.u_to_cell @ f.u.ravel()).reshape(self.grid.cell_shape)
                vc = (self.grid.ops.v_to_cell @ f.v.ravel()).reshape(self.grid.cell_shape)
                out.append(np.hypot(uc, vc))
            elif isinstance(f, MacTensor):
                out.append(f.magnitude(self.grid))
            else:
                out.append(np.abs(np.asarray(f, dtype=float)))
        return np.stack(out)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        i0, i1, j0, j1 = self.window
        return values[:, i0:i1, j0:j1]

    def with_frames(self, frames) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.dt, list(frames), self.window)


# ---------------------------------------------------------------------------
# maximal operator


def cylinder_ladder(shape: tuple[int, int, int], h: float, dt: float) -> list[tuple[int, int]]:
    """``(r, tau)`` pairs: spatial half-width in cells, temporal half-width in steps."""
    nt, nx, ny = shape
    ladder = [(0, 0)]
    r = 1
    while 2 * r + 1 <= min(nx, ny):
        tau = int(round((r * h) ** 2 / dt))
        ladder.append((r, min(tau, nt - 1)))
        r *= 2
    return ladder


def _box_means(cs: np.ndarray, shape, r: int, tau: int) -> np.ndarray:
    nt, nx, ny = shape
    t = np.arange(nt)
    i = np.arange(nx)
    j = np.arange(ny)
    t0, t1 = np.maximum(t - tau, 0), np.minimum(t + tau + 1, nt)
    i0, i1 = np.maximum(i - r, 0), np.minimum(i + r + 1, nx)
    j0, j1 = np.maximum(j - r, 0), np.minimum(j + r + 1, ny)
    T0, I0, J0 = np.meshgrid(t0, i0, j0, indexing="ij")
    T1, I1, J1 = np.meshgrid(t1, i1, j1, indexing="ij")
    s = (
        cs[T1, I1, J1] - cs[T0, I1, J1] - cs[T1, I0, J1] - cs[T1, I1, J0]
        + cs[T0, I0, J1] + cs[T0, I1, J0] + cs[T1, I0, J0] - cs[T0, I0, J0]
    )
    return s / ((T1 - T0) * (I1 - I0) * (J1 - J0))


def maximal_array(values: np.ndarray, h: float, dt: float, ladder=None) -> np.ndarray:
    """Parabolic maximal function of ``|values|`` on a ``(nt, nx, ny)`` block."""
    f = np.abs(np.asarray(values, dtype=float))
    if ladder is None:
        ladder = cylinder_ladder(f.shape, h, dt)
    cs = np.zeros(tuple(n + 1 for n in f.shape))
    cs[1:, 1:, 1:] = f.cumsum(0).cumsum(1).cumsum(2)
    out = f.copy()
    for r, tau in ladder:
        if r == 0 and tau == 0:
            continue
        np.maximum(out, _box_means(cs, f.shape, r, tau), out=out)
    return out


def parabolic_maximal(f: SpaceTimeField) -> SpaceTimeField:
    """Maximal function on the window; entries outside the window are 0."""
    g = f.grid
    block = f.restrict(f.magnitude())
    m = maximal_array(block, min(g.hx, g.hy), f.dt)
    i0, i1, j0, j1 = f.window
    frames = []
    for n in range(f.nt):
        full = np.zeros(g.cell_shape)
        full[i0:i1, j0:j1] = m[n]
        frames.append(full)
    return f.with_frames(frames)


# ---------------------------------------------------------------------------
# flux splitting


@lru_cache(maxsize=8)
def _strain_factor(grid: Grid):
    idx = np.flatnonzero(grid.face_mask)
    k = grid.ops.viscous_matrix(np.ones(grid.cell_shape))[idx, :][:, idx]
    k = k + 1e-12 * sp.identity(idx.size)
    return idx, spla.splu(k.tocsc())


def remainder_flux(grid: Grid, r: VectorField) -> MacTensor:
    """Symmetric ``G2 = D z`` with ``-div G2 = P r`` on interior faces (up to
    constants on the torus)."""
    pr = helmholtz_project(r)
    x = pr.flat()
    if grid.bc == "periodic":
        nu = pr.u.size
        x[:nu] -= x[:nu].mean()
        x[nu:] -= x[nu:].mean()
    idx, lu = _strain_factor(grid)
    z = np.zeros(grid.n_faces)
    z[idx] = lu.solve(x[idx])
    d = strain_tensor(VectorField.from_flat(grid, z))
    # corner quadrature weights, matching the viscous operator
    w = (grid.ops.corner_to_cell.T @ np.ones(grid.nx * grid.ny)).reshape(grid.corner_shape)
    return MacTensor(d.xx, d.yy, w * d.xy)


def test_fields(grid: Grid, n_modes: int = 3) -> list[VectorField]:
    """Discretely solenoidal fields from smooth corner streamfunctions."""
    X, Y = grid.corner_coords()
    out = []
    for a in range(1, n_modes + 1):
        for b in range(1, n_modes + 1):
            if a + b > n_modes + 1:
                continue
            psi = np.sin(np.pi * a * X / grid.lx) ** 2 * np.sin(np.pi * b * Y / grid.ly) ** 2
            out.append(curl(grid, psi))
    return out


@dataclass
class DifferenceData:
    u: SpaceTimeField
    g1: SpaceTimeField
    g2: SpaceTimeField
    residual: float


def difference_fields(
    grid: Grid,
    dt: float,
    v_a: list,
    c_a: list,
    v_b: list,
    c_b: list,
    law: ConstitutiveLaw,
    window=None,
) -> DifferenceData:
    """Build ``u = v_a - v_b`` and the splitting ``G1 = -(S_a - S_b)``,
    ``G2`` from :func:`remainder_flux`, for frames ``1..N`` of two runs."""
    n = len(v_a)
    if n != len(v_b) or n != len(c_a) or n != len(c_b):
        raise ValueError("the two series must have the same number of frames")
    us, g1s, g2s = [], [], []
    tests = test_fields(grid)
    num = np.zeros(len(tests))
    den = np.zeros(len(tests))
    for k in range(1, n):
        u_prev = v_a[k - 1] - v_b[k - 1]
        u = v_a[k] - v_b[k]
        dtu = (u - u_prev) / dt
        g1 = -(stress_tensor(v_a[k], c_a[k], law) - stress_tensor(v_b[k], c_b[k], law))
        r = dtu + g1.divergence(grid)
        g2 = remainder_flux(grid, r)
        total = dtu + (g1 + g2).divergence(grid)
        for j, phi in enumerate(tests):
            num[j] += dt * grid.inner_faces(total, phi)
            den[j] += dt * grid.norm_faces(dtu) * grid.norm_faces(phi)
        us.append(u)
        g1s.append(g1)
        g2s.append(g2)
    rel = np.where(den > 0, np.abs(num) / np.where(den > 0, den, 1.0), 0.0)
    return DifferenceData(
        SpaceTimeField(grid, dt, us, window),
        SpaceTimeField(grid, dt, g1s, window),
        SpaceTimeField(grid, dt, g2s, window),
        float(rel.max()) if rel.size else 0.0,
    )


# ---------------------------------------------------------------------------
# level sets


@dataclass
class LevelSetReport:
    k: list
    lambda_k: list
    measures: list
    counts: list
    ratios: list
    nested: bool
    geometric_decay: bool
    exhausted: bool
    residual: float
    lambda_ref: float
    q: float
    cell_volume: float
    notes: list = field(default_factory=list)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            fh.write("k,lambda_k,measure,ratio\n")
            for k, lam, m, r in zip(self.k, self.lambda_k, self.measures, self.ratios):
                fh.write(f"{k},{lam:.17g},{m:.17g},{r:.17g}\n")
        return path


def _grad_frames(u: SpaceTimeField) -> np.ndarray:
    out = []
    for f in u.frames:
        if isinstance(f, VectorField):
            out.append(velocity_gradient_magnitude(f))
        else:
            raise TypeError("u must be a series of velocity fields")
    return np.stack(out)


def bad_set_functionals(u: SpaceTimeField, g1: SpaceTimeField, g2: SpaceTimeField) -> tuple[np.ndarray, np.ndarray]:
    """``(M|grad u|, M(|G1| + |G2|))`` on the window."""
    gr = u.grid
    h = min(gr.hx, gr.hy)
    mu_ = maximal_array(u.restrict(_grad_frames(u)), h, u.dt)
    gsum = g1.restrict(g1.magnitude()) + g2.restrict(g2.magnitude())
    mg = maximal_array(gsum, h, u.dt)
    return mu_, mg


def auto_lambda_ref(u: SpaceTimeField, g1: SpaceTimeField, g2: SpaceTimeField) -> float:
    """Scale placing ``lambda_0`` at the mean of the two maximal functionals."""
    mu_, mg = bad_set_functionals(u, g1, g2)
    m = 0.5 * (mu_.mean() + mg.mean())
    return float(m / 2.0) if m > 0 else 1.0


def levelset_decay(
    u: SpaceTimeField,
    g1: SpaceTimeField,
    g2: SpaceTimeField,
    q: float,
    K: int = 4,
    lambda_ref: float = 1.0,
    residual: float = float("nan"),
) -> LevelSetReport:
    """Measures of ``O_k`` for ``k = 0..K``."""
    if K < 0:
        raise ValueError("K must be non-negative")
    if not (u.nt == g1.nt == g2.nt) or u.window != g1.window or u.window != g2.window:
        raise ValueError("u, g1 and g2 must live on the same cylinder")
    gr = u.grid
    mu_, mg = bad_set_functionals(u, g1, g2)
    vol = gr.cell_area * u.dt
    ks = list(range(K + 1))
    lams = [lambda_ref * 2.0 ** (2.0**k) for k in ks]
    counts = [int(np.count_nonzero((mu_ > lam) | (mg > lam))) for lam in lams]
    measures = [c * vol for c in counts]
    ratios = [float("nan")] + [
        (measures[i] / measures[i - 1]) if measures[i - 1] > 0 else float("nan") for i in range(1, K + 1)
    ]
    nested = all(b <= a for a, b in zip(counts, counts[1:]))
    resolved = [i for i in ks if counts[i] > 1]
    geometric = all(counts[i + 1] <= 0.5 * counts[i] for i in resolved if i + 1 <= K)
    exhausted = any(c == 1 for c in counts)
    return LevelSetReport(ks, lams, measures, counts, ratios, nested, geometric, exhausted,
                          residual, lambda_ref, q, vol)


# ---------------------------------------------------------------------------
# drivers


@dataclass
class TruncationStudy:
    eps: list
    eps_ref: float
    reports: list
    lambda_ref: float

    @property
    def nested(self) -> bool:
        return all(r.nested for r in self.reports)

    @property
    def monotone_in_eps(self) -> bool:
        """``|O_k|`` non-increasing along the sequence at every fixed ``k``."""
        for a, b in zip(self.reports, self.reports[1:]):
            if any(mb > ma for ma, mb in zip(a.measures, b.measures)):
                return False
        return True

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            fh.write("m,eps,k,lambda_k,measure,ratio\n")
            for m, (e, r) in enumerate(zip(self.eps, self.reports)):
                for k, lam, meas, rat in zip(r.k, r.lambda_k, r.measures, r.ratios):
                    fh.write(f"{m},{e:.17g},{k},{lam:.17g},{meas:.17g},{rat:.17g}\n")
        return path


def _series_from_trajectory(grid: Grid, traj: dict):
    vs = [VectorField.from_flat(grid, x) for x in traj["v"]]
    cs = [np.asarray(c).reshape(grid.cell_shape) for c in traj["c"]]
    return vs, cs


def _uniform_dt(traj: dict) -> float:
    dts = np.asarray(traj["dt"], dtype=float)
    if dts.size == 0 or np.ptp(dts) > 1e-12 * dts.max():
        raise ValueError("the lab needs uniformly spaced frames; choose t_end as a multiple of dt")
    return float(dts[0])


def pair_report(grid, dt, series_a, series_b, law, q, K=4, lambda_ref=1.0, window=None):
    """Level-set report of ``u = a - b`` for two ``(velocities, concentrations)`` series."""
    data = difference_fields(grid, dt, series_a[0], series_a[1], series_b[0], series_b[1], law, window)
    lam = auto_lambda_ref(data.u, data.g1, data.g2) if lambda_ref == "auto" else float(lambda_ref)
    return levelset_decay(data.u, data.g1, data.g2, q, K, lam, data.residual)


def truncation_study(cfg, eps_list, eps_ref: float = 0.0, K: int = 4, lambda_ref="auto") -> TruncationStudy:
    """Difference sequence ``u_m = v_{eps_m} - v_{eps_ref}`` from coupled runs.

    ``lambda_ref="auto"`` fixes the threshold scale from the first member so
    all members share the same ``lambda_k``.
    """
    from .stepper import run_simulation

    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    if eps_ref >= eps_list[-1]:
        raise ValueError("eps_ref must be below every radius in eps_list")
    grid = cfg.grid()
    law = cfg.law()

    def run(e):
        sub = cfg.replace(approx={"mollify_eps": repr(e), "cutoff_eps": "tie"})
        traj = run_simulation(sub, write=False, record=True).trajectory
        return traj

    ref = run(eps_ref)
    dt = _uniform_dt(ref)
    ref_series = _series_from_trajectory(grid, ref)
    reports = []
    lam = lambda_ref
    for e in eps_list:
        traj = run(e)
        r = pair_report(grid, dt, _series_from_trajectory(grid, traj), ref_series, law, law.q, K, lam)
        lam = r.lambda_ref
        reports.append(r)
    return TruncationStudy(eps_list, eps_ref, reports, float(lam))


def load_series(directory):
    """Numbered snapshots of a run directory as ``(cfg, dt, velocities, concentrations)``."""
    from .config import parse_config
    from .snapshots import read_binary, read_csv

    d = Path(directory)
    cfg = parse_config(d / "config.ini")
    grid = cfg.grid()
    steps = {}
    for p in d.glob("snap_*_c.*"):
        tag = p.name.split("_")[1]
        if tag.isdigit():
            steps.setdefault(int(tag), p.suffix)
    if len(steps) < 9:
        raise ValueError(f"{d}: need at least 9 numbered snapshots, found {len(steps)}")
    idx = sorted(steps)
    gaps = np.diff(idx)
    if np.any(gaps != gaps[0]):
        raise ValueError(f"{d}: snapshots are not uniformly spaced")

    def load(n, name):
        stem = d / f"snap_{n:06d}_{name}"
        if steps[n] == ".bin":
            return read_binary(stem.with_suffix(".bin"))[0]
        return read_csv(stem.with_suffix(".csv"))

    vs = [VectorField(grid, load(n, "u"), load(n, "v")) for n in idx]
    cs = [load(n, "c") for n in idx]
    return cfg, float(gaps[0]) * cfg.momentum.dt, vs, cs
