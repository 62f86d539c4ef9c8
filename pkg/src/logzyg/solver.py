"""Pseudospectral method of lines for

    L u = u_tt - d_x(a d_x u) + b0 u_t + b1 u_x + c u = f

on the periodic grid, with classical RK4 in time on ``(u, v = u_t)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .coeff import LowerOrderCoefficients, zero_lower_order
from .grid import GridError, GridFunction, PeriodicGrid


class CFLError(ValueError):
    pass


class DataError(ValueError):
    pass


class HealthError(RuntimeError):
    pass


def dealias_mask(grid: PeriodicGrid) -> np.ndarray:
    """2/3 rule: keep ``|k| <= n/3``."""
    return np.abs(grid.k) <= grid.n / 3


def _dealias(grid, values):
    return np.fft.ifft(dealias_mask(grid) * np.fft.fft(values))


@dataclass
class CauchyProblem:
    a: object
    lower: LowerOrderCoefficients
    u0: GridFunction
    u1: GridFunction
    grid: PeriodicGrid
    dt: float
    T: float
    forcing: Optional[Callable] = None
    cfl: float = 0.5
    label: str = ""
    exact: Optional[Callable] = field(default=None, repr=False)

    def validate(self):
        if self.u0.grid != self.grid or self.u1.grid != self.grid:
            raise GridError("initial data live on a different grid")
        if not 0 < self.cfl <= 0.5:
            raise CFLError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        limit = self.cfl * self.grid.spacing / np.sqrt(self.a.Lambda0)
        if not 0 < self.dt <= limit * (1 + 1e-12):
            raise CFLError(f"dt={self.dt:.3g} exceeds cfl*spacing/sqrt(Lambda0)={limit:.3g}")
        if not self.T > 0:
            raise DataError(f"horizon must be positive, got {self.T}")
        for name, g in (("u0", self.u0), ("u1", self.u1)):
            c = np.fft.fft(g.values)
            high = np.abs(self.grid.k) > self.grid.n / 4
            tot = np.sum(np.abs(c) ** 2)
            if tot > 0 and np.sum(np.abs(c[high]) ** 2) > 1e-20 * tot:
                raise DataError(f"{name} has spectrum above n/4; data must be band-limited")

    def f(self, t) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(self.grid.n)
        return np.asarray(self.forcing(t, self.grid.x), dtype=complex)


def default_dt(grid: PeriodicGrid, Lambda0: float) -> float:
    return 0.25 * grid.spacing / np.sqrt(Lambda0)


def _flux(problem, t, u, ux, dealias):
    grid = problem.grid
    a = problem.a(t, grid.x)
    prod = a * ux
    return _dealias(grid, prod) if dealias else prod


def rhs(problem: CauchyProblem, t: float, u: np.ndarray, v: np.ndarray):
    """``(u_t, v_t)`` of the first-order system; all products de-aliased."""
    grid, lo = problem.grid, problem.lower
    ux = grid.deriv(u)
    x = grid.x
    lower = lo.b0(t, x) * v + lo.b1(t, x) * ux + lo.c(t, x) * u
    vt = grid.deriv(_flux(problem, t, u, ux, True)) - _dealias(grid, lower) + problem.f(t)
    return v, vt


def apply_L(u: GridFunction, ut: GridFunction, utt: GridFunction, t: float,
            problem: CauchyProblem, dealias: bool = True) -> GridFunction:
    """``u_tt - d_x(a u_x) + b0 u_t + b1 u_x + c u`` with spectral d_x."""
    grid = problem.grid
    for g in (u, ut, utt):
        if g.grid != grid:
            raise GridError("apply_L arguments live on a different grid")
    lo, x = problem.lower, grid.x
    ux = grid.deriv(u.values)
    lower = lo.b0(t, x) * ut.values + lo.b1(t, x) * ux + lo.c(t, x) * u.values
    if dealias:
        lower = _dealias(grid, lower)
    out = utt.values - grid.deriv(_flux(problem, t, u.values, ux, dealias)) + lower
    return GridFunction(grid, out)


@dataclass
class SolutionTrace:
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    residual_log: np.ndarray
    dt: float
    problem: CauchyProblem = field(repr=False)

    def state(self, i: int):
        g = self.problem.grid
        return GridFunction(g, self.u[i]), GridFunction(g, self.v[i])

    def utt(self, i: int) -> GridFunction:
        _, vt = rhs(self.problem, self.times[i], self.u[i], self.v[i])
        return GridFunction(self.problem.grid, vt)

    def write_csv(self, path, meta: Optional[dict] = None):
        """Rows ``t, Re u_0, Im u_0, ..., Re u_{n-1}, Im u_{n-1}``; JSON sidecar."""
        n = self.problem.grid.n
        with open(path, "w") as fh:
            head = ["t"] + [f"{p}{j}" for j in range(n) for p in ("re", "im")]
            fh.write(",".join(head) + "\n")
            for t, row in zip(self.times, self.u):
                pairs = np.column_stack([row.real, row.imag]).ravel()
                fh.write(",".join([f"{t:.17g}"] + [f"{v:.17g}" for v in pairs]) + "\n")
        sidecar = {"n": n, "dt": self.dt, "T": float(self.times[-1]),
                   "label": self.problem.label}
        if meta:
            sidecar.update(meta)
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)


def rk4_step(problem, t, u, v, dt):
    k1u, k1v = rhs(problem, t, u, v)
    k2u, k2v = rhs(problem, t + dt / 2, u + dt / 2 * k1u, v + dt / 2 * k1v)
    k3u, k3v = rhs(problem, t + dt / 2, u + dt / 2 * k2u, v + dt / 2 * k2v)
    k4u, k4v = rhs(problem, t + dt, u + dt * k3u, v + dt * k3v)
    return (u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u),
            v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _health(grid, u, v, tol=1e-6) -> float:
    """Fraction of spectral energy in the top third of the spectrum."""
    top = np.abs(grid.k) > grid.n / 3
    cu, cv = np.fft.fft(u), np.fft.fft(v)
    w = (1 + grid.xi**2)
    tot = np.sum(w * np.abs(cu) ** 2 + np.abs(cv) ** 2)
    if tot == 0:
        return 0.0
    return float(np.sum((w * np.abs(cu) ** 2 + np.abs(cv) ** 2)[top]) / tot)


def solve(problem: CauchyProblem, n_out: int = 64, t0: float = 0.0,
          backward: bool = False) -> SolutionTrace:
    """Integrate over ``[t0, t0 + T]`` (or backwards) with checkpoints every ``T/n_out``.

    The step is shrunk so that each checkpoint interval holds a whole number
    of steps.
    """
    problem.validate()
    grid = problem.grid
    per = max(1, int(np.ceil(problem.T / n_out / problem.dt - 1e-9)))
    dt = problem.T / (n_out * per)
    sign = -1.0 if backward else 1.0
    u = problem.u0.values.copy()
    v = problem.u1.values.copy()
    times = [t0]
    us, vs, res = [u.copy()], [v.copy()], []

    def residual(t, u, v):
        _, vt = rhs(problem, t, u, v)
        Lu = apply_L(GridFunction(grid, u), GridFunction(grid, v), GridFunction(grid, vt),
                     t, problem)
        return grid.l2(Lu.values - problem.f(t))

    res.append(residual(t0, u, v))
    t = t0
    for i in range(n_out):
        for _ in range(per):
            u, v = rk4_step(problem, t, u, v, sign * dt)
            t = t + sign * dt
        t = t0 + sign * (i + 1) * per * dt
        frac = _health(grid, u, v)
        if not np.isfinite(frac) or frac > 1e-6:
            raise HealthError(f"t={t:.4g}: top third of the spectrum holds a fraction "
                              f"{frac:.3g} of the energy")
        times.append(t)
        us.append(u.copy())
        vs.append(v.copy())
        res.append(residual(t, u, v))
    return SolutionTrace(np.array(times), np.array(us), np.array(vs), np.array(res), dt, problem)


def physical_energy(grid: PeriodicGrid, a_x: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """``int |u_t|^2 + a |u_x|^2`` for a time-independent a sampled on the grid."""
    ux = grid.deriv(u)
    return float(grid.spacing * np.sum(np.abs(v) ** 2 + a_x * np.abs(ux) ** 2))


@dataclass
class DriftReport:
    energies: np.ndarray
    drift: float

    def passed(self, tol: float) -> bool:
        return self.drift <= tol


def solver_energy_conservation_check(problem: CauchyProblem, n_out: int = 16) -> DriftReport:
    """Relative drift ``max |E(t) - E(0)| / E(0)`` of the physical energy."""
    if problem.forcing is not None or not problem.lower.is_zero:
        raise DataError("energy conservation needs b = c = f = 0")
    trace = solve(problem, n_out=n_out)
    grid = problem.grid
    a_x = problem.a(0.0, grid.x)
    if np.max(np.abs(problem.a(0.37, grid.x) - a_x)) > 0:
        raise DataError("energy conservation needs a time-independent coefficient")
    E = np.array([physical_energy(grid, a_x, u, v) for u, v in zip(trace.u, trace.v)])
    drift = 0.0 if E[0] == 0 else float(np.max(np.abs(E - E[0])) / E[0])
    return DriftReport(E, drift)


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class Manufactured:
    """``u*(t, x) = sin(w t + p) cos(k x + q)``."""

    k: int = 2
    w: float = 1.0
    p: float = 0.0
    q: float = 0.0
    amp: float = 1.0

    def u(self, t, x):
        return self.amp * np.sin(self.w * t + self.p) * np.cos(self.k * x + self.q)

    def ut(self, t, x):
        return self.amp * self.w * np.cos(self.w * t + self.p) * np.cos(self.k * x + self.q)

    def utt(self, t, x):
        return -self.w**2 * self.u(t, x)

    def ux(self, t, x):
        return -self.amp * self.k * np.sin(self.w * t + self.p) * np.sin(self.k * x + self.q)

    def uxx(self, t, x):
        return -self.k**2 * self.u(t, x)

    def forcing(self, a, lower: LowerOrderCoefficients) -> Callable:
        def f(t, x):
            x = np.asarray(x, dtype=float)
            flux_x = a.dx(t, x) * self.ux(t, x) + a(t, x) * self.uxx(t, x)
            return (self.utt(t, x) - flux_x + lower.b0(t, x) * self.ut(t, x)
                    + lower.b1(t, x) * self.ux(t, x) + lower.c(t, x) * self.u(t, x))
        return f


def manufactured_problem(a, grid: PeriodicGrid, T: float, dt: Optional[float] = None,
                         lower: Optional[LowerOrderCoefficients] = None,
                         ms: Manufactured = Manufactured()) -> CauchyProblem:
    lower = zero_lower_order() if lower is None else lower
    dt = default_dt(grid, a.Lambda0) if dt is None else dt
    u0 = GridFunction(grid, ms.u(0.0, grid.x))
    u1 = GridFunction(grid, ms.ut(0.0, grid.x))
    return CauchyProblem(a, lower, u0, u1, grid, dt, T, forcing=ms.forcing(a, lower),
                         label=f"manufactured(k={ms.k}, w={ms.w})", exact=ms.u)
