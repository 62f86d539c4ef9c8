"""Block energies with the time corrector, the weighted total energy and the
14-term identity for the time derivative of a block energy.

Notation inside this module, all at one time t with a_eps = a_eps(t, .):

    g = d_t sqrt(a_eps) / (2 sqrt(a_eps)) = d_t a_eps / (4 a_eps)
    W = v_nu + g u_nu,            v = d_t u
    e = int a_eps^(-1/2) |W|^2 + a_eps^(1/2) |d_x u_nu|^2 + |u_nu|^2
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .commutator import _apply
from .grid import GridFunction, PeriodicGrid
from .lp import LPProfile, block_arrays, dyadic_sobolev_array
from .mollify import MollifierKernel, SmoothedCoefficientSlice, smooth_coefficient
from .solver import apply_L, rk4_step


class ConsistencyError(ValueError):
    pass


class InvariantError(ValueError):
    pass


class AdmissibilityError(ValueError):
    pass


LOG2 = np.log(2.0)


def theta_upper(omega: float) -> float:
    return min(0.5, omega / (1.0 + LOG2))


@dataclass(frozen=True)
class EnergyConfig:
    """Loss parameter theta, weight rate beta and the horizon ``T = theta log2 / (2 beta)``."""

    theta: float
    beta: float
    omega: float = 0.5

    def __post_init__(self):
        hi = theta_upper(self.omega)
        if not 0 < self.theta < hi:
            raise AdmissibilityError(
                f"theta={self.theta} outside the admissible range (0, {hi:.6g})")
        if not self.beta > 0:
            raise AdmissibilityError(f"beta must be positive, got {self.beta}")

    @property
    def beta_star(self) -> float:
        return self.beta / LOG2

    @property
    def T(self) -> float:
        return self.theta * LOG2 / (2.0 * self.beta)

    def horizon_inequalities(self, t: float) -> dict:
        """The four open-interval conditions on ``beta t``; all must hold on [0, T]."""
        bt = self.beta * t
        q1 = bt + self.theta / 2 * LOG2
        q2 = (1 - self.theta) * LOG2 - bt
        return {"low_pos": q1 > 0, "low_lt1": q1 < 1, "high_pos": q2 > 0, "high_lt1": q2 < 1}

    def index_shift(self, t: float) -> float:
        """``theta + beta* t``, the amount subtracted from the Sobolev indices."""
        return self.theta + self.beta_star * t


def block_eps(nu: int) -> float:
    return 2.0 ** (-nu)


def _check_slice(sl: SmoothedCoefficientSlice, lam0: float = 0.0):
    if lam0 > 0 and np.min(sl.a_eps.real) < lam0 * (1 - 1e-12):
        raise InvariantError(f"a_eps drops below lambda0={lam0}")
    if np.min(sl.a_eps.real) <= 0:
        raise InvariantError("a_eps must be positive")


def corrector(sl: SmoothedCoefficientSlice) -> np.ndarray:
    """``g = d_t a_eps / (4 a_eps)``."""
    return sl.dt_a_eps.real / (4.0 * sl.a_eps.real)


def r_epsilon_coefficient(sl: SmoothedCoefficientSlice) -> np.ndarray:
    """``d_t g - g^2 = a_tt / (4a) - 5 a_t^2 / (16 a^2)`` with a = a_eps."""
    a, at, att = sl.a_eps.real, sl.dt_a_eps.real, sl.dtt_a_eps.real
    return att / (4 * a) - 5 * at**2 / (16 * a**2)


def r_epsilon_apply(sl: SmoothedCoefficientSlice, v: GridFunction,
                    lambda0: float = 0.0) -> GridFunction:
    _check_slice(sl, lambda0)
    if v.grid != sl.a_eps.grid:
        raise ConsistencyError("slice and function live on different grids")
    return GridFunction(v.grid, r_epsilon_coefficient(sl) * v.values)


def _energy_arrays(grid, u, v, sl):
    a = sl.a_eps.real
    sa = np.sqrt(a)
    W = v + corrector(sl) * u
    du = grid.deriv(u)
    return grid.spacing * np.sum(np.abs(W) ** 2 / sa + sa * np.abs(du) ** 2 + np.abs(u) ** 2)


def approx_energy(u_nu: GridFunction, ut_nu: GridFunction, sl: SmoothedCoefficientSlice,
                  nu=None, t=None) -> float:
    """Block energy ``e_{nu, eps}`` at the slice's (t, eps)."""
    if u_nu.grid != sl.a_eps.grid or ut_nu.grid != sl.a_eps.grid:
        raise ConsistencyError("block and slice live on different grids")
    if t is not None and not np.isclose(t, sl.t, rtol=0, atol=1e-14):
        raise ConsistencyError(f"slice is at t={sl.t}, block at t={t}")
    if nu is not None and not np.isclose(sl.eps, block_eps(nu), rtol=1e-14, atol=0):
        raise ConsistencyError(f"slice has eps={sl.eps}, block nu={nu} needs {block_eps(nu)}")
    _check_slice(sl)
    return float(_energy_arrays(u_nu.grid, u_nu.values, ut_nu.values, sl))


def total_energy(e_nu, t: float, config: EnergyConfig) -> float:
    if t < -1e-14 or t > config.T * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, T={config.T:.6g}]")
    total = 0.0
    for nu, e in enumerate(e_nu):
        total += np.exp(-2 * config.beta * (nu + 1) * t) * 2.0 ** (-2 * nu * config.theta) * e
    return float(total)


class SliceCache:
    """Smoothed-coefficient slices keyed by (t, nu) with eps = 2^-nu."""

    def __init__(self, a, grid: PeriodicGrid, kernel: MollifierKernel):
        self.a, self.grid, self.kernel = a, grid, kernel
        self._store = {}

    def get(self, t: float, nu: int) -> SmoothedCoefficientSlice:
        key = (float(t), int(nu))
        if key not in self._store:
            if len(self._store) > 4096:
                self._store.clear()
            self._store[key] = smooth_coefficient(self.a, t, block_eps(nu), self.grid, self.kernel)
        return self._store[key]


@dataclass
class EnergySnapshot:
    t: float
    e_nu: np.ndarray
    E: float
    sobolev_lhs: tuple

    def __post_init__(self):
        if np.any(self.e_nu < 0):
            raise InvariantError("block energies must be nonnegative")


def block_energies(u: np.ndarray, v: np.ndarray, t: float, profile: LPProfile,
                   slices: SliceCache) -> np.ndarray:
    """``e_{nu, 2^-nu}`` for nu = 0 .. nu_max + 1 (the last is the truncated top shell)."""
    ub = block_arrays(u, profile)
    vb = block_arrays(v, profile)
    grid = profile.grid
    return np.array([_energy_arrays(grid, ub[nu], vb[nu], slices.get(t, nu))
                     for nu in range(len(ub))])


def drifting_norms(u: np.ndarray, v: np.ndarray, t: float, profile: LPProfile,
                   config: EnergyConfig) -> tuple:
    """``(||u||_{H^{1 - theta - beta* t}}, ||u_t||_{H^{-theta - beta* t}})``, dyadic."""
    s = config.index_shift(t)
    return (dyadic_sobolev_array(u, profile, 1 - s), dyadic_sobolev_array(v, profile, -s))


def fixed_norms(u, v, profile, config) -> tuple:
    return (dyadic_sobolev_array(u, profile, 1 - config.theta),
            dyadic_sobolev_array(v, profile, -config.theta))


def energy_snapshot(u, v, t, profile, slices, config) -> EnergySnapshot:
    e = block_energies(u, v, t, profile, slices)
    return EnergySnapshot(float(t), e, total_energy(e, t, config),
                          drifting_norms(u, v, t, profile, config))


@dataclass
class SandwichReport:
    t: float
    E: float
    norm_sum: float
    ratio: float

    @property
    def degenerate(self) -> bool:
        return self.E == 0 and self.norm_sum == 0


def sobolev_sandwich(u, v, t, profile, slices, config) -> SandwichReport:
    """``E(t)^(1/2) / (||u_t||_{H^{-theta-beta* t}} + ||u||_{H^{1-theta-beta* t}})``.

    E is quadratic in u and the norms are linear, so the comparison uses the
    square root of E; 0/0 is reported as ratio 1.
    """
    snap = energy_snapshot(u, v, t, profile, slices, config)
    ns = float(sum(snap.sobolev_lhs))
    ratio = 1.0 if ns == 0 and snap.E == 0 else float(np.sqrt(snap.E) / ns)
    return SandwichReport(float(t), snap.E, ns, ratio)


@dataclass
class EnergyTrace:
    times: np.ndarray
    e: np.ndarray
    E: np.ndarray
    h_drift: np.ndarray
    h_fixed: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "nu", "e_nu", "E", "H_u_drift", "H_ut_drift", "H_u_fixed", "H_ut_fixed"])
            for i, t in enumerate(self.times):
                for nu, e in enumerate(self.e[i]):
                    w.writerow([f"{t:.17g}", nu, f"{e:.17g}", f"{self.E[i]:.17g}",
                                f"{self.h_drift[i, 0]:.17g}", f"{self.h_drift[i, 1]:.17g}",
                                f"{self.h_fixed[i, 0]:.17g}", f"{self.h_fixed[i, 1]:.17g}"])

    def write_plot_data(self, path):
        np.savetxt(path, np.column_stack([self.times, self.E]), delimiter=",",
                   fmt="%.17g", header="t,E", comments="")

    def summary(self) -> dict:
        return {"n_times": int(len(self.times)), "E0": float(self.E[0]),
                "E_max": float(self.E.max()), "E_final": float(self.E[-1])}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def energy_trace(trace, profile: LPProfile, slices: SliceCache,
                 config: EnergyConfig) -> EnergyTrace:
    es, Es, hd, hf = [], [], [], []
    for t, u, v in zip(trace.times, trace.u, trace.v):
        e = block_energies(u, v, t, profile, slices)
        es.append(e)
        Es.append(total_energy(e, min(t, config.T), config))
        hd.append(drifting_norms(u, v, min(t, config.T), profile, config))
        hf.append(fixed_norms(u, v, profile, config))
    return EnergyTrace(np.asarray(trace.times), np.array(es), np.array(Es),
                       np.array(hd), np.array(hf))


# ---------------------------------------------------------------------------
# the derivative identity

TERM_LABELS = (
    "Lu_nu",            # 1  int 2/sqrt(a_eps) Re((Lu)_nu conj W)
    "R_eps",            # 2  int 2/sqrt(a_eps) Re(R u_nu conj W)
    "dt_sqrt_a_mismatch",   # 3  int d_t sqrt(a_eps) (1 - a/a_eps) |Du_nu|^2
    "sqrt_a_mismatch",  # 4  int 2 (sqrt(a_eps) - a/sqrt(a_eps)) Re(Du_nu conj Dv_nu)
    "dx_sqrt_a",        # 5  int 2 (d_x sqrt(a_eps)/a_eps) a Re(Du_nu conj W)
    "mixed",            # 6  -int a/sqrt(a_eps) d_x(d_t sqrt(a_eps)/sqrt(a_eps)) Re(Du_nu conj u_nu)
    "u_ut",             # 7  int 2 Re(u_nu conj v_nu)
    "comm_a",           # 8  int 2/sqrt(a_eps) Re(d_x([phi_nu, a] Du) conj W)
    "b0",               # 9
    "comm_b0",          # 10
    "b1",               # 11
    "comm_b1",          # 12
    "c",                # 13
    "comm_c",           # 14
)


@dataclass
class EnergyBudgetReport:
    t: float
    nu: int
    eps: float
    terms: dict
    e: float
    fd: float = np.nan

    @property
    def total(self) -> float:
        s = 0.0
        for k in TERM_LABELS:
            s += self.terms[k]
        return float(s)

    @property
    def abs_error(self) -> float:
        return float(abs(self.total - self.fd))

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.fd), 1e-300)
        return float(abs(self.total - self.fd) / scale)


def energy_derivative_budget(u: np.ndarray, v: np.ndarray, utt: np.ndarray, t: float,
                             problem, profile: LPProfile, nu: int,
                             sl: SmoothedCoefficientSlice = None,
                             kernel: MollifierKernel = None) -> EnergyBudgetReport:
    """The 14 integrals whose sum is ``d/dt e_{nu, eps}``.

    ``utt`` is the second time derivative taken from the equation; Lu is
    formed from it with plain grid products, so the commutator split below
    reproduces ``u_tt`` block by block.
    """
    grid = profile.grid
    if sl is None:
        if kernel is None:
            raise ConsistencyError("budget needs a smoothed slice or a kernel to build one")
        sl = smooth_coefficient(problem.a, t, block_eps(nu), grid, kernel)
    if not np.isclose(sl.t, t, rtol=0, atol=1e-14):
        raise ConsistencyError(f"slice is at t={sl.t}, state at t={t}")
    _check_slice(sl)
    x = grid.x
    phi = profile.phi(nu) if nu <= profile.nu_max else profile.remainder_symbol()

    def blk(w):
        return np.fft.ifft(phi * np.fft.fft(w))

    def comm(f, w):
        return _apply(phi, f, w)

    D = grid.deriv
    a_eps, at, ax, att, atx = sl.arrays()
    sa = np.sqrt(a_eps)
    g = at / (4 * a_eps)
    a_true = np.asarray(problem.a(t, x), dtype=float)
    lo = problem.lower
    b0, b1, c = lo.b0(t, x), lo.b1(t, x), lo.c(t, x)

    un, vn = blk(u), blk(v)
    Du, Dun, Dvn = D(u), D(un), D(vn)
    W = vn + g * un
    Lu = apply_L(GridFunction(grid, u), GridFunction(grid, v), GridFunction(grid, utt),
                 t, problem, dealias=False).values

    h = grid.spacing

    def integral(w):
        return float(h * np.sum(w).real)

    def inner(X):
        return integral(2 / sa * (X * np.conj(W)).real)

    dt_sa = at / (2 * sa)
    dx_sa = ax / (2 * sa)
    d_mixed = atx / (2 * a_eps) - at * ax / (2 * a_eps**2)   # d_x(d_t sqrt(a)/sqrt(a))
    terms = {
        "Lu_nu": inner(blk(Lu)),
        "R_eps": inner(r_epsilon_coefficient(sl) * un),
        "dt_sqrt_a_mismatch": integral(dt_sa * (1 - a_true / a_eps) * np.abs(Dun) ** 2),
        "sqrt_a_mismatch": integral(2 * (sa - a_true / sa) * (Dun * np.conj(Dvn)).real),
        "dx_sqrt_a": integral(2 * dx_sa / a_eps * a_true * (Dun * np.conj(W)).real),
        "mixed": -integral(a_true / sa * d_mixed * (Dun * np.conj(un)).real),
        "u_ut": integral(2 * (un * np.conj(vn)).real),
        "comm_a": inner(D(comm(a_true, Du))),
        "b0": -inner(b0 * vn),
        "comm_b0": -inner(comm(b0, v)),
        "b1": -inner(b1 * Dun),
        "comm_b1": -inner(comm(b1, Du)),
        "c": -inner(c * un),
        "comm_c": -inner(comm(c, u)),
    }
    e = float(_energy_arrays(grid, un, vn, sl))
    return EnergyBudgetReport(float(t), int(nu), float(sl.eps), terms, e)


def block_energy_at(u, v, t, nu, profile, a, kernel) -> float:
    grid = profile.grid
    phi = profile.phi(nu) if nu <= profile.nu_max else profile.remainder_symbol()
    sl = smooth_coefficient(a, t, block_eps(nu), grid, kernel)
    un = np.fft.ifft(phi * np.fft.fft(u))
    vn = np.fft.ifft(phi * np.fft.fft(v))
    return float(_energy_arrays(grid, un, vn, sl))


def finite_difference_derivative(problem, u, v, t, nu, profile, kernel, dt: float = 1e-4) -> float:
    """Richardson-extrapolated centred difference of ``e_{nu, 2^-nu}`` along RK4 steps."""
    def walk(steps, h):
        uu, vv, tt = u, v, t
        for _ in range(steps):
            uu, vv = rk4_step(problem, tt, uu, vv, h)
            tt += h
        return block_energy_at(uu, vv, t + steps * h, nu, profile, problem.a, kernel)

    ep1, em1 = walk(1, dt), walk(1, -dt)
    ep2, em2 = walk(2, dt), walk(2, -dt)
    d1 = (ep1 - em1) / (2 * dt)
    d2 = (ep2 - em2) / (4 * dt)
    return float((4 * d1 - d2) / 3)


# ---------------------------------------------------------------------------
# per-term bounds with eps = 2^-nu


def term_scales(nu: int) -> dict:
    """Growth factors multiplying ``e_nu`` in the per-term bounds at eps = 2^-nu."""
    eps = block_eps(nu)
    lg = np.log(1 / eps + 1)
    low = 1.0 + 2.0**-nu * eps**-0.5
    return {
        "R_eps": lg / eps * 2.0**-nu,
        "dt_sqrt_a_mismatch": lg,
        "sqrt_a_mismatch": (eps * 2.0**nu + 1) * lg,
        "dx_sqrt_a": lg,
        "mixed": lg / eps * 2.0**-nu,
        # the commutator terms couple all blocks and are controlled through the kernels
        "b0": low, "b1": low, "c": low,
    }


def term_ratios(reports) -> dict:
    """``|term| / (scale * e_nu)`` per label, ordered as the reports."""
    out = {}
    for rep in reports:
        sc = term_scales(rep.nu)
        for k, s in sc.items():
            out.setdefault(k, []).append(abs(rep.terms[k]) / (s * rep.e) if rep.e > 0 else 0.0)
    return {k: np.array(v) for k, v in out.items()}


def auxiliary_ratio(u: np.ndarray, t: float, nu: int, profile: LPProfile,
                    sl: SmoothedCoefficientSlice) -> dict:
    """``||g u_nu||`` against ``eps^(-1/2) 2^-nu ||d_x u_nu||`` and against ``||u_nu||``."""
    grid = profile.grid
    un = np.fft.ifft(profile.phi(nu) * np.fft.fft(u))
    gu = grid.l2(corrector(sl) * un)
    du = grid.l2(grid.deriv(un))
    nu_norm = grid.l2(un)
    scale = sl.eps ** -0.5 * 2.0**-nu
    return {"vs_derivative": gu / (scale * du) if du > 0 else 0.0,
            "vs_block": gu / (scale * nu_norm) if nu_norm > 0 else 0.0}
