"""Stress laws ``S(c, M)`` and homogeneous free energies ``Phi``.

Both families are vectorised over leading axes: ``M`` has shape ``(..., 2, 2)``
and ``c`` broadcasts against ``M.shape[:-2]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIM = 2
Q_MIN = 2 * DIM / (DIM + 2)  # lower bound for the growth exponent
DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the admissible concentration interval."""


def sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def frob(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(m * m, axis=(-1, -2)))


@dataclass(frozen=True)
class ConstitutiveLaw:
    """``S(c, M) = eta(c, |sym M|^2) sym M`` with ``nu(c) = nu0 + nu1 c``.

    ``power_law``: ``eta = nu(c) (|D|^2 + delta^2)^((q-2)/2)``
    ``carreau``:   ``eta = nu(c) (1 + |D|^2)^((q-2)/2)``
    """

    q: float = 2.0
    nu0: float = 1.0
    nu1: float = 0.0
    delta: float = 1e-8
    kind: str = "power_law"
    c_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))

    def validate(self) -> list[str]:
        out = []
        if self.kind not in ("power_law", "carreau"):
            out.append(f"unknown stress law kind {self.kind!r}")
        if not self.q > Q_MIN:
            out.append(f"q must exceed 2d/(d+2) = {Q_MIN:g} for d={DIM}")
        if not self.nu0 > 0:
            out.append("nu0 must be positive")
        elif self.nu_min <= 0:
            out.append("nu0 + nu1*c must stay positive on the concentration interval")
        if not self.delta >= 0:
            out.append("delta must be non-negative")
        return out

    # viscosity ----------------------------------------------------------

    @property
    def nu_min(self) -> float:
        a, b = self.c_range
        return min(self.nu0 + self.nu1 * a, self.nu0 + self.nu1 * b)

    @property
    def nu_max(self) -> float:
        a, b = self.c_range
        return max(self.nu0 + self.nu1 * a, self.nu0 + self.nu1 * b)

    @property
    def is_linear(self) -> bool:
        """True when ``S`` is linear in ``M`` (Newtonian)."""
        return self.q == 2.0

    def nu(self, c):
        return self.nu0 + self.nu1 * np.asarray(c, dtype=float)

    def effective_viscosity(self, c, q_norm2):
        """``eta`` as a function of ``|sym M|^2``; infinite at zero shear only
        for ``power_law`` with ``delta = 0`` and ``q < 2``."""
        s = np.asarray(q_norm2, dtype=float)
        e = (self.q - 2.0) / 2.0
        with np.errstate(divide="ignore"):
            if self.kind == "power_law":
                base = s + self.delta**2
            else:
                base = 1.0 + s
            return self.nu(c) * base**e

    # constants of the structure conditions -------------------------------

    @property
    def kappa(self) -> float:
        return self.nu_min

    @property
    def growth_constant(self) -> float:
        if self.q >= 2:
            c = self.nu_max * 2.0 ** (self.q - 2.0)
            if self.kind == "power_law":
                c *= max(1.0, self.delta ** (self.q - 1.0))
            return c
        return self.nu_max

    @property
    def coercivity_offset(self) -> float:
        if self.q >= 2:
            return 0.0
        if self.kind == "power_law":
            return self.nu_max * self.delta**self.q
        return self.nu_max

    @property
    def lipschitz_constant(self) -> float:
        return abs(self.nu1) * self.growth_constant / self.nu_max


def _check_c(c, lo, hi):
    c = np.asarray(c, dtype=float)
    if np.any(c < lo - DOMAIN_TOL) or np.any(c > hi + DOMAIN_TOL):
        raise DomainError(f"concentration outside [{lo}, {hi}]")
    return c


def stress_eval(law: ConstitutiveLaw, c, m) -> np.ndarray:
    """Evaluate ``S(c, M)``; depends on ``M`` only through ``sym M``."""
    c = _check_c(c, *law.c_range)
    d = sym(np.asarray(m, dtype=float))
    s2 = np.sum(d * d, axis=(-1, -2))
    eta = law.effective_viscosity(c, s2)
    eta = np.where(s2 > 0, eta, 0.0) if law.delta == 0 and law.q < 2 else eta
    return eta[..., None, None] * d


# ---------------------------------------------------------------------------
# free energies


@dataclass(frozen=True)
class FreeEnergy:
    """Homogeneous free energy density on ``[a, b] = [-1, 1]``.

    ``double_well``: ``Phi = (1 - c^2)^2 / 4``.
    ``logarithmic``: ``Phi = theta/2 [(1+c) ln(1+c) + (1-c) ln(1-c)] - theta_c/2 c^2``,
    evaluated at ``clip(c, a + clip_margin, b - clip_margin)``.
    """

    kind: str = "double_well"
    theta: float = 1.0
    theta_c: float = 2.0
    clip_margin: float = 1e-6
    a: float = field(default=-1.0, init=False)
    b: float = field(default=1.0, init=False)

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))

    def validate(self) -> list[str]:
        out = []
        if self.kind not in ("double_well", "logarithmic"):
            out.append(f"unknown potential kind {self.kind!r}")
        if self.kind == "logarithmic":
            if not self.theta > 0:
                out.append("theta must be positive")
            if not 0 < self.clip_margin < 0.5:
                out.append("clip_margin must lie in (0, 0.5)")
        return out

    @property
    def alpha(self) -> float:
        """Lower bound ``phi' >= -alpha``."""
        if self.kind == "double_well":
            return 1.0
        return max(self.theta_c - self.theta, 0.0)

    @property
    def singular(self) -> bool:
        return self.kind == "logarithmic"

    def clamp(self, c):
        c = np.asarray(c, dtype=float)
        if not self.singular:
            return c, np.zeros(c.shape, dtype=bool)
        lo, hi = self.a + self.clip_margin, self.b - self.clip_margin
        return np.clip(c, lo, hi), (c < lo) | (c > hi)

    # raw formulas (no clamping, no domain checks) ---------------------------

    def _Phi(self, c):
        if self.kind == "double_well":
            return 0.25 * (1.0 - c * c) ** 2
        t, tc = self.theta, self.theta_c
        return 0.5 * t * (np.log1p(c) * (1 + c) + np.log1p(-c) * (1 - c)) - 0.5 * tc * c * c

    def _phi(self, c):
        if self.kind == "double_well":
            return c * c * c - c
        return self.theta * np.arctanh(c) - self.theta_c * c

    def _dphi(self, c):
        if self.kind == "double_well":
            return 3.0 * c * c - 1.0
        return self.theta / (1.0 - c * c) - self.theta_c

    # solver entry points: clamp for the singular potential, otherwise unchecked

    def Phi(self, c):
        return self._Phi(self.clamp(c)[0])

    def phi(self, c):
        return self._phi(self.clamp(c)[0])

    def dphi(self, c):
        return self._dphi(self.clamp(c)[0])


def phi_eval(energy: FreeEnergy, c):
    """Return ``(Phi(c), phi(c), phi'(c), clipped)`` with domain checking."""
    c = _check_c(c, energy.a, energy.b)
    cc, clipped = energy.clamp(c)
    return energy._Phi(cc), energy._phi(cc), energy._dphi(cc), clipped


# ---------------------------------------------------------------------------
# structure conditions


@dataclass
class AssumptionReport:
    violations: list[str]
    max_growth_ratio: float
    max_lipschitz_ratio: float
    min_coercivity_margin: float
    min_monotone_gap: float
    min_phi_prime_margin: float
    constants: dict
    notes: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _random_matrices(rng, n):
    mag = 10.0 ** rng.uniform(-3, 3, size=n)
    m = rng.standard_normal((n, 2, 2))
    return m / frob(m)[:, None, None] * mag[:, None, None]


def check_assumption_1(
    law: ConstitutiveLaw, energy: FreeEnergy, n_samples: int = 10_000, rng_seed: int = 0
) -> AssumptionReport:
    """Sample the growth, Lipschitz, coercivity and strict monotonicity
    conditions on ``S`` and the lower bound on ``phi'``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    a, b = energy.a, energy.b
    q = law.q
    C, C1, kap, CL = law.growth_constant, law.coercivity_offset, law.kappa, law.lipschitz_constant
    violations = []

    c = rng.uniform(a, b, n_samples)
    c1 = rng.uniform(a, b, n_samples)
    c2 = rng.uniform(a, b, n_samples)
    m, m1, m2 = (_random_matrices(rng, n_samples) for _ in range(3))
    dm = frob(sym(m))
    scale = dm ** (q - 1.0) + 1.0

    s = stress_eval(law, c, m)
    growth = frob(s) / scale
    if np.any(growth > C * (1 + 1e-12)):
        violations.append(f"growth bound exceeded: max ratio {growth.max():.6g} > C={C:.6g}")

    ds = frob(stress_eval(law, c1, m) - stress_eval(law, c2, m))
    dc = np.abs(c1 - c2)
    bound = CL * dc * scale
    lip = np.where(dc > 0, ds / np.where(dc > 0, dc * scale, 1.0), 0.0)
    if np.any(ds > bound * (1 + 1e-12) + 1e-14 * frob(s)):
        violations.append(f"Lipschitz-in-c bound exceeded: max ratio {lip.max():.6g} > {CL:.6g}")

    power = np.sum(s * m, axis=(-1, -2))
    lower = kap * dm**q - C1
    margin = power - lower
    tol = 1e-12 * (np.abs(power) + np.abs(lower) + C1)
    if np.any(margin < -tol):
        violations.append(f"coercivity violated: min margin {margin.min():.6g}")

    cm = rng.uniform(a, b, n_samples)
    gap = np.sum((stress_eval(law, cm, m1) - stress_eval(law, cm, m2)) * (m1 - m2), axis=(-1, -2))
    dsym = frob(sym(m1) - sym(m2))
    distinct = dsym > 0
    thresh = 1e-14 * dsym**2 * law.nu_min
    if np.any(gap[distinct] <= thresh[distinct]):
        violations.append("strict monotonicity violated")
    min_gap = float(gap[distinct].min()) if distinct.any() else 0.0

    inner = rng.uniform(a, b, n_samples)
    if energy.singular:
        inner = np.clip(inner, a + energy.clip_margin, b - energy.clip_margin)
    dphi = energy.dphi(inner)
    phi_margin = dphi + energy.alpha
    if np.any(phi_margin < -1e-12 * (1 + np.abs(dphi))):
        violations.append(f"phi' >= -alpha violated: min phi' {dphi.min():.6g}")

    notes = []
    if energy.singular:
        eta = 10.0 ** -np.arange(1, 13)
        lo, hi = energy._phi(a + eta), energy._phi(b - eta)
        if not (np.all(np.diff(lo) < 0) and np.all(np.diff(hi) > 0)):
            violations.append("phi does not blow up towards the endpoints")
    else:
        notes.append("phi stays bounded at the endpoints (regular double-well potential)")

    return AssumptionReport(
        violations=violations,
        max_growth_ratio=float(growth.max()),
        max_lipschitz_ratio=float(lip.max()),
        min_coercivity_margin=float(margin.min()),
        min_monotone_gap=min_gap,
        min_phi_prime_margin=float(phi_margin.min()),
        constants={"C": C, "C1": C1, "kappa": kap, "C_lip": CL, "alpha": energy.alpha},
        notes=notes,
    )
