"""Summation constants alpha_1, alpha_2, the four commutator kernels and Schur sums."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .commutator import CommutatorNormTable, CoverageError
from .energy import EnergyConfig

LOG2 = np.log(2.0)
KINDS = ("k", "l", "h", "m")


class ArgumentError(ValueError):
    pass


@dataclass
class AlphaResult:
    delta: float
    alpha1: float
    alpha2: float
    argmax1: int
    argmax2: int
    ratios1: np.ndarray = field(repr=False)
    ratios2: np.ndarray = field(repr=False)

    @property
    def limit(self) -> float:
        return 1.0 / (1.0 - np.exp(-self.delta))


def _alpha1_ratios(delta: float, n_max: int) -> np.ndarray:
    # A_n = sum_{j<=n} e^{delta (j - n)} j^{-1/2};  ratio_n = A_n sqrt(n)
    q = np.exp(-delta)
    out = np.empty(n_max)
    A = 0.0
    for n in range(1, n_max + 1):
        A = q * A + n**-0.5
        out[n - 1] = A * np.sqrt(n)
    return out


def _alpha2_ratios(delta: float, n_max: int) -> np.ndarray:
    # B_n = sum_{j>=n} e^{-delta (j - n)} sqrt(j) = sqrt(n) + e^{-delta} B_{n+1}
    q = np.exp(-delta)
    # tail start: direct sum until terms drop below machine precision
    start = n_max + 1
    m = int(np.ceil((40.0 + 0.5 * np.log(start + 1e4)) / delta)) + 64
    j = np.arange(start, start + m, dtype=float)
    B = float(np.sum(np.exp(-delta * (j - start)) * np.sqrt(j)))
    out = np.empty(n_max)
    for n in range(n_max, 0, -1):
        B = np.sqrt(n) + q * B
        out[n - 1] = B / np.sqrt(n)
    return out


def alpha_constants(delta: float, n_max: int = 10_000) -> AlphaResult:
    """Smallest constants with

        sum_{j=1}^n e^{delta j} j^{-1/2}   <= alpha1 e^{delta n} n^{-1/2}
        sum_{j>=n}  e^{-delta j} j^{1/2}   <= alpha2 e^{-delta n} n^{1/2}

    for all n <= n_max.
    """
    if not 0 < delta <= 1:
        raise ArgumentError(f"delta must lie in (0, 1], got {delta}")
    if n_max < 1000:
        raise ArgumentError(f"n_max must be at least 1000, got {n_max}")
    r1 = _alpha1_ratios(delta, n_max)
    r2 = _alpha2_ratios(delta, n_max)
    return AlphaResult(float(delta), float(r1.max()), float(r2.max()),
                       int(np.argmax(r1)) + 1, int(np.argmax(r2)) + 1, r1, r2)


def M_closed_form(omega: float, theta: float) -> float:
    """max over z of ``e^{-gamma z} (z - 2)``, gamma = (omega - theta/2) log 2."""
    gamma = (omega - theta / 2) * LOG2
    if gamma <= 0:
        raise ArgumentError("need omega > theta/2")
    return float(np.exp(-(2 * gamma + 1)) / gamma)


def M_numeric(omega: float, theta: float) -> float:
    gamma = (omega - theta / 2) * LOG2
    res = optimize.minimize_scalar(lambda z: -np.exp(-gamma * z) * (z - 2),
                                   bounds=(2.0, 2.0 + 40.0 / gamma), method="bounded",
                                   options={"xatol": 1e-12})
    return float(-res.fun)


@dataclass
class SchurKernelMatrix:
    kind: str
    entries: np.ndarray
    t: float
    theta: float
    beta: float

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if np.any(self.entries < 0):
            raise ValueError("kernel entries must be nonnegative")

    @property
    def row_sums(self) -> np.ndarray:
        return np.abs(self.entries).sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return np.abs(self.entries).sum(axis=0)

    @property
    def schur_quantity(self) -> float:
        return schur_bound(self)

    def truncated(self, N: int) -> "SchurKernelMatrix":
        return SchurKernelMatrix(self.kind, self.entries[:N, :N], self.t, self.theta, self.beta)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "t", "nu", "mu", "entry"])
            for i in range(self.entries.shape[0]):
                for j in range(self.entries.shape[1]):
                    w.writerow([self.kind, f"{self.t:.17g}", i, j, f"{self.entries[i, j]:.17g}"])


def schur_bound(matrix) -> float:
    """``sup_mu sum_nu |k| + sup_nu sum_mu |k|``."""
    E = matrix.entries if isinstance(matrix, SchurKernelMatrix) else np.asarray(matrix)
    if E.size == 0:
        return 0.0
    A = np.abs(E)
    return float(A.sum(axis=0).max() + A.sum(axis=1).max())


def kernel_weights(kind: str, N: int, t: float, config: EnergyConfig) -> np.ndarray:
    """The factor multiplying the commutator norm in each kernel."""
    if kind not in KINDS:
        raise ArgumentError(f"unknown kernel kind {kind!r}")
    nu = np.arange(N)[:, None].astype(float)
    mu = np.arange(N)[None, :].astype(float)
    w = np.exp(-(nu - mu) * config.beta * t) * 2.0 ** (-(nu - mu) * config.theta)
    if kind == "k":
        w = w * 2.0**nu * (nu + 1) ** -0.5 * (mu + 1) ** -0.5
    elif kind == "m":
        w = w * 2.0**-mu
    return w


def build_kernel(kind: str, norm_table: CommutatorNormTable, t: float,
                 config: EnergyConfig, N: int = 9) -> SchurKernelMatrix:
    if t < -1e-14 or t > config.T * (1 + 1e-12):
        raise ArgumentError(f"t={t} outside [0, T={config.T:.6g}]")
    if not norm_table.covers(N):
        raise CoverageError(f"norm table does not cover indices 0..{N - 1}")
    norms = np.array([[norm_table.get(nu, mu) for mu in range(N)] for nu in range(N)])
    return SchurKernelMatrix(kind, kernel_weights(kind, N, t, config) * norms, float(t),
                             config.theta, config.beta)


def analytic_norms(kind: str, N: int, C: float, omega: float = 0.5) -> np.ndarray:
    """Lemma-shaped stand-ins for the measured norms (same value for every mu)."""
    nu = np.arange(N, dtype=float)[:, None] + np.zeros((1, N))
    if kind == "k":
        return C * 2.0**-nu * (nu + 1)
    if kind in ("l", "h"):
        return C * 2.0 ** (-nu * omega)
    return C * np.ones((N, N))


def fit_analytic_constant(kind: str, norm_table: CommutatorNormTable, N: int,
                          omega: float = 0.5) -> float:
    norms = np.array([[norm_table.get(nu, mu) for mu in range(N)] for nu in range(N)])
    shape = analytic_norms(kind, N, 1.0, omega)
    return float(np.max(norms / shape))


@dataclass
class SchurReport:
    quantities: dict            # kind -> list over t
    times: list
    growth_N: dict              # kind -> Q(N_big) / Q(N_small)
    t_spread: dict              # kind -> max_t / min_t
    alpha: list = field(default_factory=list)
    alpha_ok: bool = True

    @property
    def passed(self) -> bool:
        finite = all(np.all(np.isfinite(v)) for v in self.quantities.values())
        spread = all(v <= 1.5 for v in self.t_spread.values())
        growth = all(v <= 1.25 for v in self.growth_N.values())
        return finite and spread and growth and self.alpha_ok

    def to_dict(self) -> dict:
        return {"times": list(map(float, self.times)),
                "quantities": {k: list(map(float, v)) for k, v in self.quantities.items()},
                "growth_N": {k: float(v) for k, v in self.growth_N.items()},
                "t_spread": {k: float(v) for k, v in self.t_spread.items()},
                "alpha": [{"delta": a.delta, "alpha1": a.alpha1, "alpha2": a.alpha2}
                          for a in self.alpha],
                "alpha_ok": bool(self.alpha_ok), "passed": bool(self.passed)}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def lemma_inequalities_hold(res: AlphaResult, n_max: int = 10_000) -> bool:
    """Direct check of both sums against the alpha bounds, independent of the recurrences."""
    d = res.delta
    j = np.arange(1, n_max + 1, dtype=float)
    ok = True
    # prefix sums scaled by e^{-delta n}: use logs to avoid overflow
    log_terms = d * j - 0.5 * np.log(j)
    running = np.logaddexp.accumulate(log_terms)
    rhs1 = np.log(res.alpha1) + d * j - 0.5 * np.log(j)
    ok &= bool(np.all(running <= rhs1 + 1e-12))
    # tails: sum_{j>=n} e^{-delta j} sqrt(j), summed far past n_max
    m = n_max + int(60 / d) + 200
    jj = np.arange(1, m + 1, dtype=float)
    log_t = -d * jj + 0.5 * np.log(jj)
    tails = np.logaddexp.accumulate(log_t[::-1])[::-1][:n_max]
    rhs2 = np.log(res.alpha2) - d * j + 0.5 * np.log(j)
    ok &= bool(np.all(tails <= rhs2 + 1e-12))
    return ok
