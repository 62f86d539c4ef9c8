"""Coefficient generators and empirical modulus-of-continuity estimators.

The principal coefficient is a lacunary trigonometric series

    a(t, x) = base + amp_t * sum_j j 2^-j cos(2^j t + theta_j)
                   + amp_x * sum_j   2^-j cos(2^j x + eta_j),    j = 1..J

whose t-part sits at the log-Zygmund growth rate and whose x-part sits at
the log-Lipschitz rate. Every coefficient object is a vectorized callable
``a(t, x)`` that broadcasts its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np


class SpecError(ValueError):
    """A coefficient specification violates one of its bounds."""


class EstimatorError(ValueError):
    pass


def log_modulus(h):
    """``h * log(1/h + 1)``, the log-Lipschitz / log-Zygmund modulus."""
    h = np.asarray(h, dtype=float)
    return h * np.log(1.0 / h + 1.0)


@dataclass(frozen=True)
class TrigModes:
    """``sum_j amps[j] cos(freqs[j] s + phases[j])`` in one variable."""

    amps: np.ndarray
    freqs: np.ndarray
    phases: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if len(self.amps) == 0:
            return np.zeros_like(s)
        arg = np.multiply.outer(s, self.freqs) + self.phases
        return np.cos(arg) @ self.amps

    def deriv(self, s, order: int = 1):
        s = np.asarray(s, dtype=float)
        if len(self.amps) == 0:
            return np.zeros_like(s)
        arg = np.multiply.outer(s, self.freqs) + self.phases
        # d^m/ds^m cos(w s + p) = w^m cos(w s + p + m pi/2)
        return np.cos(arg + order * np.pi / 2) @ (self.amps * self.freqs**order)

    @property
    def abs_sum(self) -> float:
        return float(np.sum(np.abs(self.amps)))

    @property
    def max_freq(self) -> float:
        return float(self.freqs.max()) if len(self.freqs) else 0.0


@dataclass(frozen=True)
class CoefficientSpec:
    lambda0: float = 0.5
    Lambda0: float = 1.5
    base: float = 1.0
    amp_t: float = 0.1
    amp_x: float = 0.1
    J: int = 12
    seed: int = 0

    @property
    def S_t(self) -> float:
        j = np.arange(1, self.J + 1)
        return float(np.sum(j * 2.0**-j))

    @property
    def S_x(self) -> float:
        j = np.arange(1, self.J + 1)
        return float(np.sum(2.0**-j))

    def validate(self):
        if not self.lambda0 > 0:
            raise SpecError(f"lambda0 must be positive, got {self.lambda0}")
        if self.Lambda0 < self.lambda0:
            raise SpecError(f"Lambda0={self.Lambda0} is below lambda0={self.lambda0}")
        if self.J < 1:
            raise SpecError(f"truncation depth J must be >= 1, got {self.J}")
        if self.amp_t < 0 or self.amp_x < 0:
            raise SpecError("amplitudes must be nonnegative")
        swing = self.amp_t * self.S_t + self.amp_x * self.S_x
        if self.base - swing < self.lambda0:
            raise SpecError(
                f"lower ellipticity bound violated: base - amp_t*S_t - amp_x*S_x = "
                f"{self.base - swing:.6g} < lambda0 = {self.lambda0}")
        if self.base + swing > self.Lambda0:
            raise SpecError(
                f"upper ellipticity bound violated: base + amp_t*S_t + amp_x*S_x = "
                f"{self.base + swing:.6g} > Lambda0 = {self.Lambda0}")

    def to_dict(self) -> dict:
        return asdict(self)


class SpaceTimeCoefficient:
    """Separable lacunary coefficient ``base + t_modes(t) + x_modes(x)``."""

    def __init__(self, spec: CoefficientSpec, t_modes: TrigModes, x_modes: TrigModes):
        self.spec = spec
        self.t_modes = t_modes
        self.x_modes = x_modes
        self.lambda0 = spec.lambda0
        self.Lambda0 = spec.Lambda0
        self.C0_est = 0.0

    def __call__(self, t, x):
        return self.spec.base + self.t_modes(t) + self.x_modes(x)

    def dx(self, t, x):
        return np.zeros_like(np.asarray(t, dtype=float)) + self.x_modes.deriv(x)

    @property
    def is_constant(self) -> bool:
        return self.t_modes.abs_sum == 0 and self.x_modes.abs_sum == 0

    @property
    def sup_norm(self) -> float:
        return self.spec.base + self.t_modes.abs_sum + self.x_modes.abs_sum

    def frozen(self, t: float) -> Callable:
        return lambda x: self(t, x)


class FunctionCoefficient:
    """Closed-form coefficient given by a vectorized ``func(t, x)``."""

    def __init__(self, func, lambda0: float, Lambda0: float,
                 dx: Optional[Callable] = None, C0_est: float = 0.0,
                 is_constant: bool = False, sup_norm: Optional[float] = None):
        self.func = func
        self.lambda0 = lambda0
        self.Lambda0 = Lambda0
        self._dx = dx
        self.C0_est = C0_est
        self.is_constant = is_constant
        self.sup_norm = Lambda0 if sup_norm is None else sup_norm

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return np.asarray(self.func(t, x), dtype=float) + np.zeros(t.shape)

    def dx(self, t, x):
        if self._dx is None:
            raise NotImplementedError("no closed-form x-derivative supplied")
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return np.asarray(self._dx(t, x), dtype=float) + np.zeros(t.shape)

    def frozen(self, t: float) -> Callable:
        return lambda x: self(t, x)


def constant_coefficient(value: float, lambda0: Optional[float] = None,
                         Lambda0: Optional[float] = None) -> FunctionCoefficient:
    return FunctionCoefficient(lambda t, x: np.full(np.shape(t), float(value)),
                               lambda0=value if lambda0 is None else lambda0,
                               Lambda0=value if Lambda0 is None else Lambda0,
                               dx=lambda t, x: np.zeros(np.shape(t)),
                               is_constant=True, sup_norm=abs(value))


def _phases(rng: np.random.Generator, J: int) -> np.ndarray:
    return rng.uniform(0.0, 2 * np.pi, size=J)


def make_coefficient(spec: CoefficientSpec, estimate: bool = True) -> SpaceTimeCoefficient:
    """Build the lacunary coefficient; ``C0_est`` is measured unless disabled."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    j = np.arange(1, spec.J + 1, dtype=float)
    freqs = 2.0**j
    t_phase = _phases(rng, spec.J)
    x_phase = _phases(rng, spec.J)
    t_modes = TrigModes(spec.amp_t * j * 2.0**-j, freqs, t_phase) if spec.amp_t else \
        TrigModes(np.zeros(0), np.zeros(0), np.zeros(0))
    x_modes = TrigModes(spec.amp_x * 2.0**-j, freqs, x_phase) if spec.amp_x else \
        TrigModes(np.zeros(0), np.zeros(0), np.zeros(0))
    a = SpaceTimeCoefficient(spec, t_modes, x_modes)
    if estimate and not a.is_constant:
        a.C0_est = estimate_C0(a, J=spec.J, seed=spec.seed)
    return a


def default_scales(J: int, per_octave: int = 4) -> np.ndarray:
    """Scales ``2^(-m/per_octave)`` from 1 down to ``2^-J``."""
    return 2.0 ** (-np.arange(0, J * per_octave + 1) / per_octave)


def default_samples(n: int = 4096, seed: int = 0, period: float = 2 * np.pi):
    rng = np.random.default_rng(seed + 7919)
    return rng.uniform(0, period, n), rng.uniform(0, period, n)


def _check_sets(scales, samples):
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    ts, xs = (np.atleast_1d(np.asarray(v, dtype=float)) for v in samples)
    if scales.size == 0 or ts.size == 0:
        raise EstimatorError("scale set and sample set must be nonempty")
    if ts.shape != xs.shape:
        raise EstimatorError("sample times and positions must pair up")
    return scales, ts, xs


def estimate_log_zygmund_t(a, tau_set, sample_set) -> float:
    """max |a(t+tau,x) + a(t-tau,x) - 2a(t,x)| / (tau log(1/tau + 1))."""
    taus, ts, xs = _check_sets(tau_set, sample_set)
    if np.any(taus <= 0) or np.any(taus > 1):
        raise EstimatorError("tau values must lie in (0, 1]")
    centre = a(ts, xs)
    best = 0.0
    for tau in taus:
        d2 = a(ts + tau, xs) + a(ts - tau, xs) - 2 * centre
        best = max(best, float(np.max(np.abs(d2))) / float(log_modulus(tau)))
    return best


def estimate_log_lipschitz_x(a, y_set, sample_set) -> float:
    """max |a(t,x+y) - a(t,x)| / (y log(1/y + 1))."""
    ys, ts, xs = _check_sets(y_set, sample_set)
    if np.any(ys <= 0) or np.any(ys > 1):
        raise EstimatorError("y values must lie in (0, 1]")
    centre = a(ts, xs)
    best = 0.0
    for y in ys:
        d1 = a(ts, xs + y) - centre
        best = max(best, float(np.max(np.abs(d1))) / float(log_modulus(y)))
    return best


def estimate_hoelder_t(a, sigma: float, tau_set, sample_set) -> float:
    """max |a(t+tau,x) - a(t,x)| / ((Lambda0 + C0) tau^sigma)."""
    if not 0 < sigma < 1:
        raise EstimatorError(f"sigma must lie in (0, 1), got {sigma}")
    taus, ts, xs = _check_sets(tau_set, sample_set)
    scale = a.Lambda0 + a.C0_est
    centre = a(ts, xs)
    best = 0.0
    for tau in taus:
        d1 = a(ts + tau, xs) - centre
        best = max(best, float(np.max(np.abs(d1))) / (scale * tau**sigma))
    return best


def lipschitz_quotients_t(a, tau_set, sample_set) -> np.ndarray:
    """max |a(t+tau,x) - a(t,x)| / tau for each tau (no log factor)."""
    taus, ts, xs = _check_sets(tau_set, sample_set)
    centre = a(ts, xs)
    return np.array([np.max(np.abs(a(ts + tau, xs) - centre)) / tau for tau in taus])


def estimate_C0(a, J: int = 12, seed: int = 0, n_samples: int = 4096) -> float:
    """Joint constant of the t log-Zygmund and x log-Lipschitz conditions."""
    scales = default_scales(J)
    samples = default_samples(n_samples, seed)
    return max(estimate_log_zygmund_t(a, scales, samples),
               estimate_log_lipschitz_x(a, scales, samples))


def hoelder_norm_x(b: Callable, omega: float, xs=None, hs=None) -> float:
    """sup|b| + max |b(x+h) - b(x)| / h^omega over the sampled pairs.

    ``b`` is a vectorized function of x (a field frozen in time).
    """
    if not 0 < omega <= 1:
        raise EstimatorError(f"omega must lie in (0, 1], got {omega}")
    xs = np.linspace(0, 2 * np.pi, 2048, endpoint=False) if xs is None else np.asarray(xs, float)
    hs = 2.0 ** (-np.arange(0, 57) / 4) * np.pi if hs is None else np.asarray(hs, float)
    vals = np.asarray(b(xs), dtype=float)
    sup = float(np.max(np.abs(vals)))
    quot = 0.0
    for h in hs:
        d = np.abs(np.asarray(b(xs + h), dtype=float) - vals)
        quot = max(quot, float(d.max()) / h**omega)
    return sup + quot


@dataclass
class LowerOrderCoefficients:
    """b0, b1 (omega-Hoelder in x) and c (bounded) as callables of (t, x).

    b_i(t, x) = amp_b (1 + 0.5 sin(t + p_i)) sum_j 2^(-j omega) cos(2^j x + eta_ij)
    c(t, x)   = c0 cos(x) cos(t)
    """

    omega: float
    amp_b: float
    c0: float
    J: int
    seed: int
    b0_modes: TrigModes = field(repr=False)
    b1_modes: TrigModes = field(repr=False)
    t_phase: np.ndarray = field(repr=False)
    hoelder_norms: tuple = (0.0, 0.0)
    sup_norm_c: float = 0.0

    def _tfac(self, t, i):
        return 1.0 + 0.5 * np.sin(np.asarray(t, dtype=float) + self.t_phase[i])

    def b0(self, t, x):
        return self._tfac(t, 0) * self.b0_modes(x)

    def b1(self, t, x):
        return self._tfac(t, 1) * self.b1_modes(x)

    def c(self, t, x):
        return self.c0 * np.cos(np.asarray(x, dtype=float)) * np.cos(np.asarray(t, dtype=float))

    @property
    def is_zero(self) -> bool:
        return self.amp_b == 0 and self.c0 == 0


def make_lower_order(omega: float = 0.5, amp_b: float = 0.1, c0: float = 0.1,
                     J: int = 8, seed: int = 0) -> LowerOrderCoefficients:
    if not omega > 0:
        raise SpecError(f"omega must be positive, got {omega}")
    rng = np.random.default_rng(seed + 104729)
    j = np.arange(1, J + 1, dtype=float)
    freqs = 2.0**j
    w = amp_b * 2.0 ** (-j * omega)
    b0m = TrigModes(w, freqs, _phases(rng, J))
    b1m = TrigModes(w, freqs, _phases(rng, J))
    lo = LowerOrderCoefficients(omega, amp_b, c0, J, seed, b0m, b1m, _phases(rng, 2))
    om = min(omega, 1.0)
    # sup over t of the time factor is 1.5
    lo.hoelder_norms = (1.5 * hoelder_norm_x(b0m, om), 1.5 * hoelder_norm_x(b1m, om))
    lo.sup_norm_c = abs(c0)
    return lo


def zero_lower_order(omega: float = 0.5) -> LowerOrderCoefficients:
    return make_lower_order(omega=omega, amp_b=0.0, c0=0.0, J=1)
