"""Mollifier, space-time smoothing of the coefficient and the approximation lemma.

The kernel is ``rho(s) = c exp(-1/(1 - s^2))`` on ``[-1, 1]``. Partials of
``a_eps`` are obtained by differentiating the kernel, never the coefficient:
``d_t a_eps = (1/eps) int int rho'(s) rho(y) a(t - eps s, x - eps y)`` and so on.
Separable trigonometric coefficients take an exact route through the
kernel's cosine transform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, optimize

from .coeff import SpaceTimeCoefficient, TrigModes
from .grid import GridFunction, PeriodicGrid


class ArgumentError(ValueError):
    pass


class InconsistentInputError(ValueError):
    pass


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_d1_factor(s):
    return -2 * s / (1 - s**2) ** 2


def _bump_d2_factor(s):
    q = 1 - s**2
    return (2 * s / q**2) ** 2 - 2 / q**2 - 8 * s**2 / q**3


@dataclass(frozen=True)
class MollifierKernel:
    norm_const: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    norm_rho1_L1: float = 0.0
    norm_rho2_L1: float = 0.0
    max_abs_rho1: float = 0.0

    def rho(self, s):
        return self.norm_const * _bump(s)

    def drho(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        si = s[inside]
        out[inside] = self.norm_const * np.exp(-1 / (1 - si**2)) * _bump_d1_factor(si)
        return out

    def d2rho(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        si = s[inside]
        out[inside] = self.norm_const * np.exp(-1 / (1 - si**2)) * _bump_d2_factor(si)
        return out

    @cached_property
    def _node_values(self):
        s = self.nodes
        return self.rho(s), self.drho(s), self.d2rho(s)

    def rho_hat(self, z) -> np.ndarray:
        """Cosine transform ``int rho(s) cos(z s) ds`` (real since rho is even)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.empty_like(z)
        for i, zi in enumerate(z):
            n = max(len(self.nodes), int(2 * abs(zi)) + 128)
            if n == len(self.nodes):
                s, w, r = self.nodes, self.weights, self._node_values[0]
            else:
                s, w = _gauss_legendre(-(-n // 256) * 256)
                r = self.rho(s)
            out[i] = np.sum(w * r * np.cos(zi * s))
        return out


@lru_cache(maxsize=32)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def build_mollifier(n_nodes: int = 128) -> MollifierKernel:
    """Kernel with its normalization, L1 norms of rho', rho'' and max |rho'|."""
    mass, _ = integrate.quad(lambda s: float(_bump(s)), -1, 1, epsabs=1e-14, epsrel=1e-13,
                             limit=400, points=[0.0])
    c = 1.0 / mass
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    k = MollifierKernel(c, nodes, weights)
    # rho is monotone on [0, 1], so int |rho'| = 2 rho(0); checked against quadrature in tests
    l1_d1 = 2 * c * np.exp(-1.0)
    # rho'' changes sign at the roots of its bracket; integrate piecewise, refined near +-1
    f2 = lambda s: abs(float(k.d2rho(np.array([s]))[0]))
    roots = optimize.brentq(lambda s: _bump_d2_factor(s), 0.05, 0.9)
    pieces = [0.0, roots, 0.9, 0.99, 0.999, 1.0]
    l1_d2 = 2 * sum(integrate.quad(f2, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
                    for lo, hi in zip(pieces[:-1], pieces[1:]))
    scan = np.linspace(0, 1, 20001)[1:-1]
    seed = scan[np.argmax(np.abs(k.drho(scan)))]
    res = optimize.minimize_scalar(lambda s: -abs(float(k.drho(np.array([s]))[0])),
                                   bounds=(max(seed - 1e-3, 0), min(seed + 1e-3, 1)),
                                   method="bounded", options={"xatol": 1e-13})
    return MollifierKernel(c, nodes, weights, float(l1_d1), float(l1_d2), float(-res.fun))


@dataclass
class SmoothedCoefficientSlice:
    t: float
    eps: float
    a_eps: GridFunction
    dt_a_eps: GridFunction
    dx_a_eps: GridFunction
    dtt_a_eps: GridFunction
    dtx_a_eps: GridFunction

    def arrays(self):
        return (self.a_eps.real, self.dt_a_eps.real, self.dx_a_eps.real,
                self.dtt_a_eps.real, self.dtx_a_eps.real)


def _check_eps(eps):
    if not 0 < eps <= 1:
        raise ArgumentError(f"eps must lie in (0, 1], got {eps}")


def _smooth_trig(a: SpaceTimeCoefficient, t, x, eps, kernel):
    """Exact smoothing of a separable trigonometric coefficient."""
    tm, xm = a.t_modes, a.x_modes
    ft = kernel.rho_hat(eps * tm.freqs) if len(tm.amps) else np.zeros(0)
    fx = kernel.rho_hat(eps * xm.freqs) if len(xm.amps) else np.zeros(0)
    st = TrigModes(tm.amps * ft, tm.freqs, tm.phases)
    sx = TrigModes(xm.amps * fx, xm.freqs, xm.phases)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    zero = np.zeros(np.broadcast(t, x).shape)
    a_eps = a.spec.base + st(t) + sx(x) + zero
    return (a_eps, st.deriv(t, 1) + zero, sx.deriv(x, 1) + zero,
            st.deriv(t, 2) + zero, zero.copy())


def _smooth_quadrature(a, t, x, eps, kernel, n_nodes=None):
    """Tensor Gauss-Legendre smoothing for an arbitrary closed-form coefficient."""
    if n_nodes is None or n_nodes == len(kernel.nodes):
        s, w = kernel.nodes, kernel.weights
    else:
        s, w = np.polynomial.legendre.leggauss(n_nodes)
    r0, r1, r2 = kernel.rho(s), kernel.drho(s), kernel.d2rho(s)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = [np.zeros(x.shape) for _ in range(5)]
    wr0 = w * r0
    wr1 = w * r1
    for si, wi, p0, p1, p2 in zip(s, w, r0, r1, r2):
        # one time node at a time: a(t - eps s_i, x - eps y_j) on the whole grid
        vals = a(t - eps * si, np.subtract.outer(x, eps * s))
        xs0 = vals @ wr0
        xs1 = vals @ wr1
        out[0] += wi * p0 * xs0
        out[1] += wi * p1 * xs0 / eps
        out[2] += wi * p0 * xs1 / eps
        out[3] += wi * p2 * xs0 / eps**2
        out[4] += wi * p1 * xs1 / eps**2
    return tuple(out)


def smooth_fields(a, t, x, eps, kernel: MollifierKernel, method: str = "auto",
                  n_nodes=None):
    """``(a_eps, d_t, d_x, d_tt, d_tx)`` at time ``t`` and positions ``x``."""
    _check_eps(eps)
    if method == "auto":
        method = "trig" if isinstance(a, SpaceTimeCoefficient) else "quadrature"
    if method == "trig":
        return _smooth_trig(a, t, x, eps, kernel)
    return _smooth_quadrature(a, t, x, eps, kernel, n_nodes)


def smooth_coefficient(a, t: float, eps: float, grid: PeriodicGrid,
                       kernel: MollifierKernel, method: str = "auto",
                       n_nodes=None) -> SmoothedCoefficientSlice:
    fields = smooth_fields(a, t, grid.x, eps, kernel, method, n_nodes)
    gfs = [GridFunction(grid, f) for f in fields]
    return SmoothedCoefficientSlice(float(t), float(eps), *gfs)


# ---------------------------------------------------------------------------
# approximation lemma

BOUND_IDS = ("a_eps-a", "dt_a_eps", "dx_a_eps", "dtt_a_eps", "dtx_a_eps")


@dataclass
class LemmaRow:
    eps: float
    bound_id: str
    measured: float
    lemma_bound: float

    @property
    def ratio(self) -> float:
        if self.lemma_bound == 0:
            return 0.0 if self.measured == 0 else np.inf
        return self.measured / self.lemma_bound


@dataclass
class LemmaReport:
    rows: list
    C0: float
    sigma: float = 0.5
    slack: float = 0.10
    hard_limit: float = 1.25
    min_ellipticity: float = np.nan
    max_ellipticity: float = np.nan

    def ratios(self, bound_id: str) -> np.ndarray:
        return np.array([r.ratio for r in self.rows if r.bound_id == bound_id])

    @property
    def max_ratio(self) -> float:
        return max((r.ratio for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.hard_limit

    @property
    def within_slack(self) -> bool:
        return self.max_ratio <= 1.0 + self.slack

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "bound_id", "measured", "lemma_bound", "ratio"])
            for r in self.rows:
                w.writerow([f"{r.eps:.17g}", r.bound_id, f"{r.measured:.17g}",
                            f"{r.lemma_bound:.17g}", f"{r.ratio:.17g}"])


def lemma_bounds(eps: float, C0: float, kernel: MollifierKernel, sigma: float = 0.5) -> dict:
    """Right-hand sides of the five approximation bounds at scale eps.

    The time-derivative bound carries an unspecified constant; it is
    normalized by ``eps^(sigma - 1)`` alone so its ratio *is* the measured
    constant.
    """
    lg = np.log(1.0 / eps + 1.0)
    return {
        "a_eps-a": 1.5 * C0 * eps * lg,
        "dt_a_eps": eps ** (sigma - 1.0),
        "dx_a_eps": C0 * kernel.norm_rho1_L1 * lg,
        "dtt_a_eps": 0.5 * C0 * kernel.norm_rho2_L1 * lg / eps,
        "dtx_a_eps": C0 * kernel.norm_rho1_L1**2 * lg / eps,
    }


def verify_lemma_approx(a, eps_set, grid: PeriodicGrid, kernel: MollifierKernel,
                        t_samples=None, sigma: float = 0.5, method: str = "auto",
                        C0=None) -> LemmaReport:
    """Measure the five sup-norm quantities over ``t_samples x grid.x``."""
    C0 = a.C0_est if C0 is None else C0
    constant = getattr(a, "is_constant", False)
    if C0 == 0 and not constant:
        raise InconsistentInputError("C0 estimate is 0 for a nonconstant coefficient")
    if t_samples is None:
        t_samples = np.linspace(0, 2 * np.pi, 512, endpoint=False) + 0.0137
    T, X = np.meshgrid(np.asarray(t_samples, float), grid.x, indexing="ij")
    a_true = a(T, X)
    rows = []
    lo, hi = np.inf, -np.inf
    for eps in eps_set:
        _check_eps(eps)
        if method == "quadrature" or (method == "auto" and not isinstance(a, SpaceTimeCoefficient)):
            fields = [np.empty_like(a_true) for _ in range(5)]
            for i, t in enumerate(np.asarray(t_samples, float)):
                for f, v in zip(fields, _smooth_quadrature(a, t, grid.x, eps, kernel)):
                    f[i] = v
        else:
            fields = _smooth_trig(a, T, X, eps, kernel)
        lo = min(lo, float(fields[0].min()))
        hi = max(hi, float(fields[0].max()))
        measured = [float(np.max(np.abs(fields[0] - a_true)))] + \
            [float(np.max(np.abs(f))) for f in fields[1:]]
        bounds = lemma_bounds(eps, C0, kernel, sigma)
        for bid, m in zip(BOUND_IDS, measured):
            rows.append(LemmaRow(float(eps), bid, m, float(bounds[bid])))
    return LemmaReport(rows, float(C0), sigma, min_ellipticity=lo, max_ellipticity=hi)
